"""Rule-based decomposition of referring expressions.

The parser pulls out the subject noun phrase, spatial relations to other
noun phrases, positional cues that refer to the image frame, and a size cue.
It works on word tokens only, so it is deterministic and needs no model.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Optional, Tuple

RELATIONS = ("left", "right", "top", "bottom", "within", "smaller", "bigger")
POSITIONS = ("top", "bottom", "left", "right", "middle")
SIZES = ("none", "big", "small")

# words naming a side; relation when followed by of/to/from + noun phrase
SIDE_WORDS = {"left": "left", "right": "right", "top": "top", "bottom": "bottom"}
# prepositions that take their object directly
DIRECT_PREPS = {"above": "top", "below": "bottom", "under": "bottom",
                "underneath": "bottom", "beneath": "bottom"}
CONTAINMENT = {"in", "inside", "within"}
COMPARATIVES = {"smaller": "smaller", "bigger": "bigger", "larger": "bigger"}
# position-only adjectives
POSITION_ADJ = {"leftmost": "left", "rightmost": "right", "topmost": "top", "uppermost": "top",
                "upper": "top", "bottommost": "bottom", "lowermost": "bottom", "lower": "bottom",
                "middle": "middle", "center": "middle", "centre": "middle", "central": "middle"}
SIZE_WORDS = {"big": "big", "large": "big", "largest": "big", "biggest": "big", "huge": "big",
              "bigger": "big", "larger": "big", "small": "small", "little": "small",
              "tiny": "small", "smallest": "small", "smaller": "small"}
LINKERS = {"of", "to", "from"}
DETERMINERS = {"the", "a", "an", "this", "that", "its", "his", "her", "their"}
# noun phrases that denote the frame or a region of it rather than an object
FRAME_NOUNS = {"image", "picture", "photo", "frame", "screen", "scene", "side", "corner",
               "edge", "left", "right", "top", "bottom", "middle", "center", "centre"}
UNSUPPORTED_ANCHORS = {"front", "back"}
BOUNDARIES = {"on", "in", "at", "near", "by", "next", "to", "of", "from", "with", "inside",
              "within", "behind", "beside", "besides", "than", "that", "which", "who", "whose",
              "is", "are", "and", "or", "between", "across", "along", "facing", "holding",
              "wearing", "closest", "nearest", "farthest", "furthest"} | set(DIRECT_PREPS)

_TOKEN = re.compile(r"[A-Za-z0-9]+(?:'[A-Za-z]+)?")


@dataclass(frozen=True)
class ParsedExpression:
    head_phrase: str
    relations: Tuple[Tuple[str, str], ...] = ()
    position_cues: Tuple[str, ...] = ()
    size_cue: str = "none"
    raw_text: str = ""

    def __post_init__(self):
        if not self.head_phrase:
            raise ValueError("head phrase must be non-empty")
        for rel, _ in self.relations:
            if rel not in RELATIONS:
                raise ValueError(f"unknown relation {rel!r}")
        for cue in self.position_cues:
            if cue not in POSITIONS:
                raise ValueError(f"unknown position cue {cue!r}")
        if self.size_cue not in SIZES:
            raise ValueError(f"unknown size cue {self.size_cue!r}")

    def to_json(self) -> dict:
        return {
            "head_phrase": self.head_phrase,
            "relations": [{"relation": r, "anchor": q} for r, q in self.relations],
            "position_cues": list(self.position_cues),
            "size_cue": self.size_cue,
            "raw_text": self.raw_text,
        }


class _Tokens:
    def __init__(self, text: str):
        self.words = [m.group(0) for m in _TOKEN.finditer(text)]
        self.lower = [w.lower() for w in self.words]

    def __len__(self):
        return len(self.words)

    def get(self, i: int) -> Optional[str]:
        return self.lower[i] if 0 <= i < len(self.lower) else None

    def phrase(self, start: int, stop: int) -> str:
        return " ".join(self.words[start:stop])


def _relation_start(tok: _Tokens, i: int) -> bool:
    """Does a relation to another noun phrase start at token ``i``?"""
    w = tok.get(i)
    if w in SIDE_WORDS:
        return tok.get(i + 1) in LINKERS
    if w in COMPARATIVES:
        return tok.get(i + 1) == "than"
    return w in DIRECT_PREPS


def _noun_phrase(tok: _Tokens, start: int) -> Tuple[int, Optional[str], Optional[str]]:
    """Noun phrase beginning at ``start``: (end index, phrase, head word)."""
    i = start
    while tok.get(i) in DETERMINERS:
        i += 1
    j = i
    while j < len(tok):
        w = tok.get(j)
        if w in BOUNDARIES or _relation_start(tok, j):
            break
        j += 1
    if j == i:
        return start, None, None
    return j, tok.phrase(start, j), tok.get(j - 1)


def parse_expression(text: str) -> ParsedExpression:
    """Parse a referring expression.

    >>> parse_expression("the pizza on the right of the man").relations
    (('right', 'the man'),)
    """
    if text is None or not text.strip():
        raise ValueError("referring expression is empty")
    tok = _Tokens(text)
    if not len(tok):
        return ParsedExpression(head_phrase=text.strip(), raw_text=text)

    head_end = len(tok)
    for i in range(len(tok)):
        if tok.get(i) in BOUNDARIES or _relation_start(tok, i):
            head_end = i
            break
    head = tok.phrase(0, head_end) if head_end > 0 else ""

    relations: List[Tuple[str, str]] = []
    cues: List[str] = []
    size = "none"

    def add_cue(cue):
        if cue not in cues:
            cues.append(cue)

    i = 0
    while i < len(tok):
        w = tok.get(i)
        rel = None
        np_start = None
        if w in SIDE_WORDS and tok.get(i + 1) in LINKERS:
            rel, np_start = SIDE_WORDS[w], i + 2
        elif w in COMPARATIVES and tok.get(i + 1) == "than":
            rel, np_start = COMPARATIVES[w], i + 2
        elif w in DIRECT_PREPS:
            rel, np_start = DIRECT_PREPS[w], i + 1
        elif w in CONTAINMENT:
            rel, np_start = "within", i + 1

        if rel is not None:
            end, phrase, head_word = _noun_phrase(tok, np_start)
            if phrase is not None and head_word in FRAME_NOUNS:
                # "at the bottom of the image", "in the middle"
                if rel in POSITIONS:
                    add_cue(rel)
                for k in range(np_start, end):
                    frame_cue = SIDE_WORDS.get(tok.get(k)) or POSITION_ADJ.get(tok.get(k))
                    if frame_cue:
                        add_cue(frame_cue)
                i = end
                continue
            if phrase is not None and head_word not in UNSUPPORTED_ANCHORS:
                relations.append((rel, phrase))
                i = end
                continue
            if rel in POSITIONS and w not in CONTAINMENT:
                add_cue(rel)
            i += 1
            continue

        if w in SIDE_WORDS:
            add_cue(SIDE_WORDS[w])
        elif w in POSITION_ADJ:
            add_cue(POSITION_ADJ[w])
        if w in SIZE_WORDS and size == "none":
            size = SIZE_WORDS[w]
        i += 1

    if not head:
        head = text.strip()
    order = {c: k for k, c in enumerate(POSITIONS)}
    return ParsedExpression(
        head_phrase=head,
        relations=tuple(relations),
        position_cues=tuple(sorted(cues, key=order.__getitem__)),
        size_cue=size,
        raw_text=text,
    )
