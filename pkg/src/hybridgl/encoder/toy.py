"""A small, seeded, numpy-only transformer that honours the encoder adapter contract.

The toy lives in a world where every shape kind has a signature colour. Its
patch embedding measures colour affinity per grid cell, the blocks are ordinary
pre-norm attention + MLP blocks with seeded weights kept close to the identity,
and the readout maps the colour subspace onto orthogonal keyword vectors used
by the toy text encoder. Attention masking and cross-branch fusion therefore
run through exactly the code paths a real ViT adapter would use, while the
scores stay interpretable enough to build end-to-end oracles on.
"""
from __future__ import annotations

import hashlib
import re
from typing import Optional

import numpy as np

from .base import AttentionMaskSpec, EncoderError, LayeredEncoderSpec, TokenSequence

# concept -> (colour name, RGB)
PALETTE = {
    "circle": ("red", (220, 40, 40)),
    "square": ("green", (40, 180, 60)),
    "diamond": ("blue", (50, 80, 220)),
    "triangle": ("yellow", (230, 200, 40)),
}
CONCEPTS = tuple(PALETTE)

_WORD = re.compile(r"[a-z]+")


def _keyword_index():
    index = {}
    for i, (name, (colour, _)) in enumerate(PALETTE.items()):
        for word in (name, name + "s", colour):
            index[word] = i
    return index


def _layer_norm(x: np.ndarray, eps: float) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x ** 3)))


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class ToyEncoder:
    """Seeded toy vision/text encoder (default 4 layers, width 16, 4x4 grid)."""

    feature_gain = 4.0
    colour_bandwidth = 40.0
    ln_eps = 1.0

    def __init__(self, layers: int = 4, dim: int = 16, grid: int = 4, seed: int = 0,
                 input_side: int = 64, pos_scale: float = 0.01, word_scale: float = 0.1):
        n_concepts = len(CONCEPTS)
        if dim < 2 * n_concepts + 1:
            raise ValueError(f"toy encoder needs dim >= {2 * n_concepts + 1}")
        if input_side % grid:
            raise ValueError("input_side must be a multiple of grid")
        self.spec = LayeredEncoderSpec(num_layers=layers, embed_dim=dim, grid_side=grid,
                                       input_side=input_side)
        self.seed = seed
        self.word_scale = word_scale
        self._keywords = _keyword_index()
        self._colours = np.array([rgb for _, rgb in PALETTE.values()], dtype=np.float64)

        rng = np.random.default_rng(seed)
        d = dim
        # orthonormal basis whose first column is the all-ones direction, which
        # layer norm removes; colours and positions live in the remaining columns
        seedmat = rng.standard_normal((d, d))
        seedmat[:, 0] = 1.0
        basis, _ = np.linalg.qr(seedmat)
        colour_dirs = basis[:, 1:1 + n_concepts]            # (d, C)
        rest = basis[:, 1 + n_concepts:]                    # (d, d-1-C)

        self.w_embed = self.feature_gain * colour_dirs.T    # (C, d)
        k = grid * grid
        self.pos = pos_scale * (rng.standard_normal((k, rest.shape[1])) @ rest.T)
        self.cls0 = 0.5 * (rng.standard_normal(rest.shape[1]) @ rest.T)

        self.blocks = []
        eye = np.eye(d)
        for _ in range(layers):
            self.blocks.append({
                "wq": 0.2 * rng.standard_normal((d, d)) / np.sqrt(d),
                "wk": 0.2 * rng.standard_normal((d, d)) / np.sqrt(d),
                "wv": eye + 0.1 * rng.standard_normal((d, d)) / np.sqrt(d),
                "wo": 0.5 * eye + 0.1 * rng.standard_normal((d, d)) / np.sqrt(d),
                "w1": 0.1 * rng.standard_normal((d, 2 * d)) / np.sqrt(d),
                "w2": 0.1 * rng.standard_normal((2 * d, d)) / np.sqrt(2 * d),
            })

        # text space: concept keywords get orthonormal vectors
        tbasis, _ = np.linalg.qr(rng.standard_normal((d, d)))
        self.concept_text = tbasis[:, :n_concepts].T        # (C, d)
        readout = np.linalg.pinv(self.w_embed) @ self.concept_text   # (d, d)
        self.w_proj = readout + 0.05 * rng.standard_normal((d, d)) / np.sqrt(d)

    # -- vision ------------------------------------------------------------
    def patch_features(self, image: np.ndarray) -> np.ndarray:
        """Mean colour affinity of every grid cell, shape (K, C)."""
        image = np.asarray(image, dtype=np.float64)
        side, grid = self.spec.input_side, self.spec.grid_side
        if image.shape != (side, side, 3):
            raise EncoderError(f"toy encoder expects a {side}x{side} RGB input, got {image.shape}")
        d2 = ((image[:, :, None, :] - self._colours[None, None]) ** 2).sum(-1)
        affinity = np.exp(-d2 / (2.0 * self.colour_bandwidth ** 2))
        cell = side // grid
        cells = affinity.reshape(grid, cell, grid, cell, -1).mean(axis=(1, 3))
        return cells.reshape(grid * grid, -1)

    def embed(self, image: np.ndarray) -> TokenSequence:
        feats = self.patch_features(image) @ self.w_embed + self.pos
        return TokenSequence(0, np.vstack([self.cls0[None], feats]))

    def attention(self, layer: int, tokens: np.ndarray,
                  attn_mask: Optional[AttentionMaskSpec] = None) -> np.ndarray:
        """Post-softmax attention weights of block ``layer`` (1-based)."""
        blk = self.blocks[layer - 1]
        h = _layer_norm(tokens, self.ln_eps)
        logits = (h @ blk["wq"]) @ (h @ blk["wk"]).T / np.sqrt(self.spec.embed_dim)
        if attn_mask is not None and attn_mask.active(layer):
            # the CLS column stays open, so the row never becomes all -inf
            outside = np.asarray(attn_mask.outside_tokens, dtype=bool)
            logits[0, 1:][outside] = -np.inf
        return _softmax_rows(logits)

    def run_layer(self, layer: int, seq: TokenSequence,
                  attn_mask: Optional[AttentionMaskSpec] = None) -> TokenSequence:
        if not 1 <= layer <= self.spec.num_layers:
            raise EncoderError(f"layer {layer} outside 1..{self.spec.num_layers}")
        blk = self.blocks[layer - 1]
        x = seq.tokens
        h = _layer_norm(x, self.ln_eps)
        attn = self.attention(layer, x, attn_mask)
        x = x + (attn @ (h @ blk["wv"])) @ blk["wo"]
        h = _layer_norm(x, self.ln_eps)
        x = x + _gelu(h @ blk["w1"]) @ blk["w2"]
        return TokenSequence(layer, x)

    def project_cls(self, seq: TokenSequence) -> np.ndarray:
        return seq.tokens[0] @ self.w_proj

    def project_tokens(self, seq: TokenSequence) -> np.ndarray:
        return seq.tokens[1:] @ self.w_proj

    # -- text --------------------------------------------------------------
    def word_vector(self, word: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}:{word}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return self.word_scale * rng.standard_normal(self.spec.embed_dim) / np.sqrt(self.spec.embed_dim)

    def encode_text(self, text: str) -> np.ndarray:
        """Bag of words; the n-th concept mention is weighted 1/n so the subject dominates."""
        words = _WORD.findall(text.lower())
        if not words:
            raise ValueError("cannot encode empty text")
        out = np.zeros(self.spec.embed_dim)
        mentions = 0
        for w in words:
            idx = self._keywords.get(w)
            if idx is None:
                out += self.word_vector(w)
            else:
                mentions += 1
                out += self.concept_text[idx] / mentions
        return out

    def config(self) -> dict:
        return {"layers": self.spec.num_layers, "dim": self.spec.embed_dim,
                "grid": self.spec.grid_side, "seed": self.seed}

    @classmethod
    def from_config(cls, cfg: dict) -> "ToyEncoder":
        allowed = {"layers", "dim", "grid", "seed", "input_side"}
        unknown = set(cfg) - allowed
        if unknown:
            raise ValueError(f"unknown toy encoder keys: {sorted(unknown)}")
        return cls(**cfg)
