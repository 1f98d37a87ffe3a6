"""Spatial guidance: relations, coherence and position maps, and score fusion."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from .core import EmptyMaskError, MaskProposal, bbox_and_center
from .encoder.hybrid import encode_image, encode_text, semantic_scores
from .encoder.preprocess import resize_image
from .parser import POSITIONS, RELATIONS, ParsedExpression

log = logging.getLogger(__name__)


class CoherenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class GuidanceConfig:
    alpha: float = 0.6
    lambda_default: float = 9.0
    lambda_big: float = 3.0
    lambda_small: float = 14.0
    top_k: int = 5
    within_containment: float = 0.9
    temperature: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if min(self.lambda_default, self.lambda_big, self.lambda_small) < 0:
            raise ValueError("lambda must be >= 0")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")

    def lambda_for(self, size_cue: str = "none") -> float:
        return {"big": self.lambda_big, "small": self.lambda_small}.get(size_cue, self.lambda_default)


# ---------------------------------------------------------------------------
# relations
# ---------------------------------------------------------------------------

def _mask_of(m) -> np.ndarray:
    return m.mask if isinstance(m, MaskProposal) else np.asarray(m, dtype=bool)


def relation_holds(rel: str, subject, anchor, within_containment: float = 0.9) -> int:
    """1 when ``subject`` stands in relation ``rel`` to ``anchor``, else 0.

    Directions compare bounding-box centers (image y grows downwards), ``within``
    asks for at least ``within_containment`` of the subject inside the anchor,
    and ``smaller``/``bigger`` compare areas strictly.
    """
    if rel not in RELATIONS:
        raise ValueError(f"unknown relation {rel!r}")
    s, a = _mask_of(subject), _mask_of(anchor)
    if s.shape != a.shape:
        raise ValueError(f"mask shapes differ: {s.shape} vs {a.shape}")
    if rel in ("left", "right", "top", "bottom"):
        _, (sx, sy) = bbox_and_center(s)
        _, (ax, ay) = bbox_and_center(a)
        return int({"left": sx < ax, "right": sx > ax, "top": sy < ay, "bottom": sy > ay}[rel])
    s_area, a_area = np.count_nonzero(s), np.count_nonzero(a)
    if s_area == 0 or a_area == 0:
        raise EmptyMaskError("empty mask")
    if rel == "within":
        return int(np.count_nonzero(s & a) / s_area >= within_containment)
    if rel == "smaller":
        return int(s_area < a_area)
    return int(s_area > a_area)


def relation_matrix(rel: str, masks: Sequence, within_containment: float = 0.9) -> np.ndarray:
    """R[i, j] = relation_holds(rel, masks[i], masks[j]); the diagonal is 0."""
    masks = [_mask_of(m) for m in masks]
    n = len(masks)
    out = np.zeros((n, n), dtype=np.int64)
    if rel in ("left", "right", "top", "bottom"):
        centers = np.array([bbox_and_center(m)[1] for m in masks])
        x, y = centers[:, 0], centers[:, 1]
        out = {"left": x[:, None] < x[None, :], "right": x[:, None] > x[None, :],
               "top": y[:, None] < y[None, :], "bottom": y[:, None] > y[None, :]}[rel].astype(np.int64)
    elif rel in ("smaller", "bigger"):
        areas = np.array([np.count_nonzero(m) for m in masks])
        if np.any(areas == 0):
            raise EmptyMaskError("empty mask")
        cmp = np.less if rel == "smaller" else np.greater
        out = cmp(areas[:, None], areas[None, :]).astype(np.int64)
    elif rel == "within":
        flat = np.stack([m.ravel() for m in masks]).astype(np.int64)
        inter = flat @ flat.T
        areas = np.diag(inter)
        if np.any(areas == 0):
            raise EmptyMaskError("empty mask")
        out = (inter / areas[:, None] >= within_containment).astype(np.int64)
    else:
        raise ValueError(f"unknown relation {rel!r}")
    np.fill_diagonal(out, 0)
    return out


def softmax(values, temperature: float = 1.0) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64) / temperature
    e = np.exp(v - v.max())
    return e / e.sum()


def topk_softmax(scores, k: int, temperature: float = 1.0) -> np.ndarray:
    """Softmax over the k best scores (ties to the lower index); everything else gets 0."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((np.arange(len(scores)), -scores))[:k]
    out = np.zeros_like(scores)
    out[order] = softmax(scores[order], temperature)
    return out


def relational_semantic_scores(proposals: Sequence, parsed: ParsedExpression,
                               features: Sequence[np.ndarray], text_encoder,
                               config: Optional[GuidanceConfig] = None,
                               template: str = "{}") -> np.ndarray:
    """Likelihood of each mask being the subject given the parsed relations.

    For the subject phrase and every anchor phrase the cosine scores are
    restricted to their top-k masks and softmax-normalised. A mask's score is
    its subject probability times the anchor probability mass of all other
    masks it stands in the relation to, summed over relations.
    """
    config = config or GuidanceConfig()
    if len(proposals) < 1:
        raise ValueError("need at least one proposal")
    if not parsed.relations:
        raise ValueError("expression has no relations")
    masks = [_mask_of(p) for p in proposals]

    def probs(phrase):
        cos = semantic_scores(features, encode_text(phrase, text_encoder, template))
        return topk_softmax(cos, config.top_k, config.temperature)

    p_subject = probs(parsed.head_phrase)
    total = np.zeros(len(masks))
    for rel, anchor in parsed.relations:
        p_anchor = probs(anchor)
        r = relation_matrix(rel, masks, config.within_containment)
        total += p_subject * (r @ p_anchor)
    return total


# ---------------------------------------------------------------------------
# guidance maps
# ---------------------------------------------------------------------------

def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation weights with half-pixel centers and clamped borders."""
    pos = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), lo] += 1.0 - frac
    m[np.arange(n_out), hi] += frac
    return m


def upsample(grid, shape, mode: str = "bilinear") -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    h, w = shape
    if mode == "nearest":
        rows = np.minimum((np.arange(h) * grid.shape[0]) // h, grid.shape[0] - 1)
        cols = np.minimum((np.arange(w) * grid.shape[1]) // w, grid.shape[1] - 1)
        return grid[np.ix_(rows, cols)]
    if mode != "bilinear":
        raise ValueError(f"unknown upsampling mode {mode!r}")
    return _interp_matrix(grid.shape[0], h) @ grid @ _interp_matrix(grid.shape[1], w).T


def minmax_normalize(values) -> np.ndarray:
    """Scale to [0, 1]; a constant map becomes all 0.5."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if not np.isfinite(lo) or not np.isfinite(hi):
        raise CoherenceError("localization map has non-finite values")
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        return np.full(v.shape, 0.5)
    return (v - lo) / (hi - lo)


class LocalizationProvider(Protocol):
    def locate(self, image: np.ndarray, text: str) -> np.ndarray: ...


class TokenSimilarityProvider:
    """Similarity between the text feature and every projected image token.

    Works with any encoder that can project image tokens into the text space
    (the toy encoder and the CLIP adapter both can).
    """

    def __init__(self, encoder, template: str = "{}"):
        self.encoder = encoder
        self.template = template

    def locate(self, image, text):
        enc = self.encoder
        seq = encode_image(resize_image(image, enc.spec.input_side), enc)
        tokens = enc.project_tokens(seq)
        t = encode_text(text, enc, self.template)
        sim = tokens @ (t / np.linalg.norm(t))
        g = enc.spec.grid_side
        return sim.reshape(g, g)


def coherence_map(image, text: str, provider: LocalizationProvider, mode: str = "bilinear") -> np.ndarray:
    """Text-conditioned localization map at image resolution, normalised to [0, 1]."""
    h, w = np.asarray(image).shape[:2]
    try:
        raw = np.asarray(provider.locate(image, text), dtype=np.float64)
    except CoherenceError:
        raise
    except Exception as exc:
        raise CoherenceError(f"localization provider failed: {exc}") from exc
    if raw.ndim != 2:
        raise CoherenceError(f"localization map must be 2-D, got shape {raw.shape}")
    return minmax_normalize(upsample(raw, (h, w), mode))


def position_map(pos: Optional[str], shape) -> np.ndarray:
    """Linear positional prior in [0, 1]; ``None`` gives the all-ones map."""
    h, w = shape
    if pos is None:
        return np.ones((h, w))
    if pos not in POSITIONS:
        raise ValueError(f"unknown position cue {pos!r}")
    x = np.arange(w, dtype=np.float64)[None, :] / max(w - 1, 1)
    y = np.arange(h, dtype=np.float64)[:, None] / max(h - 1, 1)
    if pos == "left":
        g = 1.0 - x
    elif pos == "right":
        g = x
    elif pos == "top":
        g = 1.0 - y
    elif pos == "bottom":
        g = y
    else:
        # Chebyshev distance to the center in axis-normalised coordinates
        dx = np.abs(2.0 * x - 1.0) if w > 1 else np.zeros_like(x)
        dy = np.abs(2.0 * y - 1.0) if h > 1 else np.zeros_like(y)
        g = 1.0 - np.maximum(dx, dy)
    return np.broadcast_to(g, (h, w)).copy()


def compose_guidance(coherence, cues: Iterable[str] = (), shape=None) -> np.ndarray:
    g = np.array(coherence, dtype=np.float64)
    if shape is not None and tuple(shape) != g.shape:
        raise ValueError(f"coherence map shape {g.shape} does not match {tuple(shape)}")
    for cue in cues:
        g = g * position_map(cue, g.shape)
    return g


def spatial_score(guidance, mask, lam: float) -> float:
    """Mean guidance inside the mask minus ``lam`` times the mean outside."""
    g = np.asarray(guidance, dtype=np.float64)
    m = _mask_of(mask)
    if g.shape != m.shape:
        raise ValueError(f"guidance shape {g.shape} does not match mask shape {m.shape}")
    n_in = np.count_nonzero(m)
    if n_in == 0:
        raise EmptyMaskError("empty mask")
    inside = g[m].sum() / n_in
    n_out = m.size - n_in
    outside = g[~m].sum() / n_out if n_out else 0.0
    return float(inside - lam * outside)


# ---------------------------------------------------------------------------
# fusion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScoreTable:
    semantic_raw: np.ndarray
    semantic_norm: np.ndarray
    spatial_raw: np.ndarray
    spatial_norm: np.ndarray
    final: np.ndarray
    winner_index: int

    def __len__(self):
        return len(self.final)

    def rows(self):
        for i in range(len(self.final)):
            yield {
                "index": i,
                "semantic_raw": float(self.semantic_raw[i]),
                "semantic_norm": float(self.semantic_norm[i]),
                "spatial_raw": float(self.spatial_raw[i]),
                "spatial_norm": float(self.spatial_norm[i]),
                "final": float(self.final[i]),
            }

    def to_json(self) -> dict:
        return {"winner_index": int(self.winner_index), "proposals": list(self.rows())}


def argmax_first(values) -> int:
    """Index of the maximum; the lowest index wins ties."""
    return int(np.argmax(np.asarray(values, dtype=np.float64)))


def fuse_scores(semantic, spatial, alpha: float = 0.6, temperature: float = 1.0) -> ScoreTable:
    semantic = np.asarray(semantic, dtype=np.float64)
    spatial = np.asarray(spatial, dtype=np.float64)
    if semantic.shape != spatial.shape:
        raise ValueError(f"score lists differ in length: {len(semantic)} vs {len(spatial)}")
    if semantic.size == 0:
        raise ValueError("no scores to fuse")
    s_sem = softmax(semantic, temperature)
    s_spa = softmax(spatial, temperature)
    final = (1.0 - alpha) * s_sem + alpha * s_spa
    return ScoreTable(semantic, s_sem, spatial, s_spa, final, argmax_first(final))
