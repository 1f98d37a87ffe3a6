"""Seeded synthetic scenes with known referents, for desk-scale end-to-end checks.

Scenes are 64x64 grey canvases holding 2-4 coloured shapes. Shapes sit on a
4x4 lattice of slots (or on the vertical/horizontal mirror axis), so they never
overlap. Two kinds of expression are generated:

* position scenes ("the square on the left"): several shapes share the named
  kind and only the position cue singles out the target. Subjects are always
  point-symmetric shapes; triangles only appear as clutter, because the half
  crop holding a triangle's apex can legitimately match "top" better than the
  whole triangle;
* relation scenes ("the circle left of the square"): two same-kind subjects are
  placed mirror-symmetrically about the anchor, so appearance and every
  image-frame cue are balanced and only the relation tells them apart.

Each scene also carries distractor proposals (half crops of every shape and
unions of differently-kinded pairs) plus one low-quality proposal that the
quality filter must drop.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image

from .core import MaskProposal
from .encoder.toy import PALETTE
from .pipeline import Sample, write_dataset
from .proposals import ProposalGenConfig, ProposalSet, make_proposal_set, write_cache

SIDE = 64
SLOTS = 4
CELL = SIDE // SLOTS
BACKGROUND = (128, 128, 128)
KINDS = tuple(PALETTE)                      # circle, square, diamond, triangle
SYMMETRIC_KINDS = ("circle", "square", "diamond")
DIRECTIONS = ("left", "right", "top", "bottom")
MOST = {"left": "leftmost", "right": "rightmost", "top": "topmost", "bottom": "bottommost"}
AXIS = (SIDE - 1) / 2.0


@dataclass(frozen=True)
class Shape:
    kind: str
    cx: float
    cy: float
    radius: int

    def mask(self, side: int = SIDE) -> np.ndarray:
        yy, xx = np.mgrid[0:side, 0:side]
        dx, dy = xx - self.cx, yy - self.cy
        r = self.radius
        if self.kind == "circle":
            return dx * dx + dy * dy <= r * r + 0.25
        if self.kind == "square":
            return (np.abs(dx) <= r) & (np.abs(dy) <= r)
        if self.kind == "diamond":
            return np.abs(dx) + np.abs(dy) <= r + 1
        if self.kind == "triangle":
            # apex up, base at cy + r
            return (dy >= -r) & (dy <= r) & (np.abs(dx) <= (dy + r) / 2.0 + 0.5)
        raise ValueError(f"unknown shape kind {self.kind!r}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "cx": self.cx, "cy": self.cy, "radius": self.radius}


@dataclass
class SyntheticScene:
    scene_id: str
    image: np.ndarray
    shapes: List[Shape]
    masks: List[np.ndarray]
    expression: str
    target: int
    scene_kind: str                     # "position" | "relation"
    cue: str                            # the direction that disambiguates
    anchor: Optional[int] = None

    def satisfying(self) -> List[int]:
        """Shapes that satisfy every cue of the expression (exactly one by construction)."""
        subject = self.shapes[self.target].kind
        same = [i for i, s in enumerate(self.shapes) if s.kind == subject]
        if self.scene_kind == "position":
            key = {"left": lambda s: s.cx, "right": lambda s: -s.cx,
                   "top": lambda s: s.cy, "bottom": lambda s: -s.cy}[self.cue]
            best = min(key(self.shapes[i]) for i in same)
            return [i for i in same if key(self.shapes[i]) == best]
        a = self.shapes[self.anchor]
        test = {"left": lambda s: s.cx < a.cx, "right": lambda s: s.cx > a.cx,
                "top": lambda s: s.cy < a.cy, "bottom": lambda s: s.cy > a.cy}[self.cue]
        return [i for i in same if test(self.shapes[i])]

    def to_json(self) -> dict:
        return {"scene_id": self.scene_id, "expression": self.expression, "target": self.target,
                "scene_kind": self.scene_kind, "cue": self.cue, "anchor": self.anchor,
                "shapes": [s.to_json() for s in self.shapes]}


def slot_center(index: int) -> float:
    return index * CELL + (CELL - 1) / 2.0


def render(shapes: List[Shape], side: int = SIDE) -> Tuple[np.ndarray, List[np.ndarray]]:
    image = np.empty((side, side, 3), dtype=np.uint8)
    image[:] = BACKGROUND
    masks = []
    for s in shapes:
        m = s.mask(side)
        image[m] = PALETTE[s.kind][1]
        masks.append(m)
    return image, masks


def _position_scene(rng: np.random.Generator):
    kind = str(rng.choice(SYMMETRIC_KINDS))
    cue = str(rng.choice(DIRECTIONS))
    n_same = int(rng.integers(2, 4))
    n_other = int(rng.integers(0, 2)) if n_same < 4 else 0
    coord = {"left": lambda r, c: c, "right": lambda r, c: -c,
             "top": lambda r, c: r, "bottom": lambda r, c: -r}[cue]
    while True:
        slots = rng.choice(SLOTS * SLOTS, size=n_same + n_other, replace=False)
        same = [divmod(int(s), SLOTS) for s in slots[:n_same]]
        keys = sorted(coord(r, c) for r, c in same)
        if keys[0] < keys[1]:
            break
    radius = int(rng.integers(5, 7))
    shapes = [Shape(kind, slot_center(c), slot_center(r), radius) for r, c in same]
    for s in slots[n_same:]:
        r, c = divmod(int(s), SLOTS)
        other = str(rng.choice([k for k in KINDS if k != kind]))
        shapes.append(Shape(other, slot_center(c), slot_center(r), radius))
    order = rng.permutation(len(shapes))
    shapes = [shapes[i] for i in order]
    target = min((i for i, s in enumerate(shapes) if s.kind == kind),
                 key=lambda i: coord(shapes[i].cy, shapes[i].cx))
    templates = [f"the {kind} on the {cue}", f"the {cue} {kind}", f"the {MOST[cue]} {kind}",
                 f"{kind} at the {cue}"]
    expression = templates[int(rng.integers(len(templates)))]
    return shapes, target, expression, cue, None


def _relation_scene(rng: np.random.Generator):
    subject, anchor_kind = (str(k) for k in rng.choice(SYMMETRIC_KINDS, size=2, replace=False))
    cue = str(rng.choice(DIRECTIONS))
    radius = int(rng.integers(5, 7))
    line = int(rng.integers(SLOTS))
    horizontal = cue in ("left", "right")

    def place(along, across):
        # ``along`` runs in the direction of the relation
        return (along, across) if horizontal else (across, along)

    lo = Shape(subject, *place(slot_center(0), slot_center(line)), radius)
    hi = Shape(subject, *place(slot_center(SLOTS - 1), slot_center(line)), radius)
    anchor = Shape(anchor_kind, *place(AXIS, slot_center(line)), radius)
    shapes = [lo, hi, anchor]
    if rng.random() < 0.5:
        third = [k for k in SYMMETRIC_KINDS if k not in (subject, anchor_kind)]
        other_line = int(rng.choice([k for k in range(SLOTS) if k != line]))
        shapes.append(Shape(third[0], *place(AXIS, slot_center(other_line)), radius))
    order = rng.permutation(len(shapes))
    shapes = [shapes[i] for i in order]
    wanted = lo if cue in ("left", "top") else hi
    target = next(i for i, s in enumerate(shapes) if s is wanted)
    anchor_idx = next(i for i, s in enumerate(shapes) if s is anchor)
    if horizontal:
        templates = [f"the {subject} {cue} of the {anchor_kind}",
                     f"the {subject} to the {cue} of the {anchor_kind}",
                     f"{subject} {cue} of {anchor_kind}"]
    else:
        prep = {"top": ["above", "on top of"], "bottom": ["below", "under"]}[cue]
        templates = [f"the {subject} {p} the {anchor_kind}" for p in prep]
    expression = templates[int(rng.integers(len(templates)))]
    return shapes, target, expression, cue, anchor_idx


def _half(mask: np.ndarray, side: str) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    out = mask.copy()
    if side == "left":
        out[:, : int(np.floor((xs.min() + xs.max()) / 2)) + 1] = False
    elif side == "right":
        out[:, int(np.ceil((xs.min() + xs.max()) / 2)):] = False
    elif side == "top":
        out[: int(np.floor((ys.min() + ys.max()) / 2)) + 1] = False
    else:
        out[int(np.ceil((ys.min() + ys.max()) / 2)):] = False
    return out


def distractors(shapes: List[Shape], masks: List[np.ndarray], rng: np.random.Generator):
    """Half crops of every shape and unions of differently-kinded pairs."""
    out = []
    for m in masks:
        out.append(_half(m, str(rng.choice(DIRECTIONS))))
    for i in range(len(shapes)):
        for j in range(i + 1, len(shapes)):
            if shapes[i].kind != shapes[j].kind:
                out.append(masks[i] | masks[j])
    return out


def generate_scenes(count: int, seed: int = 0,
                    config: Optional[ProposalGenConfig] = None) -> List[Tuple[SyntheticScene, Sample, ProposalSet]]:
    """``count`` scenes, alternating position and relation scenes, deterministic in ``seed``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    config = config or ProposalGenConfig()
    rng = np.random.default_rng(seed)
    out = []
    for n in range(count):
        kind = "position" if n % 2 == 0 else "relation"
        make = _position_scene if kind == "position" else _relation_scene
        shapes, target, expression, cue, anchor = make(rng)
        image, masks = render(shapes)
        scene_id = f"scene{seed:04d}_{n:04d}"
        scene = SyntheticScene(scene_id, image, shapes, masks, expression, target, kind, cue, anchor)

        def quality():
            return float(np.round(rng.uniform(0.75, 1.0), 4))

        raw = [MaskProposal(m, quality(), quality()) for m in masks]
        raw += [MaskProposal(m, quality(), quality()) for m in distractors(shapes, masks, rng)]
        everything = np.logical_or.reduce(masks)
        raw.append(MaskProposal(everything, 0.5, quality()))
        pset = make_proposal_set(scene_id, image.shape[:2], raw, config)
        sample = Sample(scene_id, image, expression, masks[target])
        out.append((scene, sample, pset))
    return out


def write_scenes(scenes, out_dir) -> Path:
    """Write PNGs, proposal caches, ``dataset.jsonl`` and ``scenes.json``; return the dataset path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "proposals").mkdir(parents=True, exist_ok=True)
    samples = []
    meta = []
    for scene, sample, pset in scenes:
        img_path = out_dir / "images" / f"{scene.scene_id}.png"
        Image.fromarray(scene.image).save(img_path)
        write_cache(pset, out_dir / "proposals")
        samples.append(Sample(sample.image_id, img_path, sample.expression, sample.gt_mask))
        meta.append(scene.to_json())
    (out_dir / "scenes.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return write_dataset(samples, out_dir / "dataset.jsonl")
