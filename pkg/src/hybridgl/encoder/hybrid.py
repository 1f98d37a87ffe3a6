"""Dual-branch mask feature extraction and cosine alignment."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..core import as_image, as_mask
from .base import AttentionMaskSpec, EncoderError, HybridConfig, LayeredEncoder, TokenSequence
from .preprocess import (preprocess_global, preprocess_local, resize_image, resize_mask,
                         token_mask_of)


def _checked(seq: TokenSequence, branch: str) -> TokenSequence:
    if not np.all(np.isfinite(seq.tokens)):
        raise EncoderError(f"non-finite activations in the {branch} branch at layer {seq.layer}")
    return seq


def branch_inputs(image, mask, encoder: LayeredEncoder, config: HybridConfig):
    """Resize to the encoder input and build the local and global images."""
    side = encoder.spec.input_side
    img = resize_image(as_image(image), side)
    m = resize_mask(as_mask(mask), side)
    return preprocess_local(img, m), preprocess_global(img, m, config.sigma_for(side))


def encode_image(image, encoder: LayeredEncoder,
                 attn_mask: Optional[AttentionMaskSpec] = None) -> TokenSequence:
    """Plain forward pass through every layer."""
    seq = encoder.embed(image)
    for layer in range(1, encoder.spec.num_layers + 1):
        seq = _checked(encoder.run_layer(layer, seq, attn_mask), "single")
    return seq


def _fuse(target: TokenSequence, source: TokenSequence, beta: float,
          token_mask: Optional[np.ndarray]) -> TokenSequence:
    """Add ``beta`` times the (token-masked) source image tokens into the target; CLS untouched."""
    add = source.tokens[1:]
    if token_mask is not None:
        add = add * token_mask[:, None]
    fused = target.tokens.copy()
    fused[1:] = fused[1:] + beta * add
    return TokenSequence(target.layer, fused)


def hybrid_encode(image, mask, encoder: LayeredEncoder, config: Optional[HybridConfig] = None,
                  token_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Feature of one mask region in the shared visual-textual space.

    With the default ``g2l`` strategy both branches advance independently up
    to ``fusion_start_layer - 1``. From there on the global branch runs with
    its CLS restricted to in-mask tokens, and before every local layer the
    in-mask global image tokens of the previous layer, scaled by ``beta``, are
    added to the local image tokens. The projected local CLS after the last
    layer is the result.

    ``token_mask`` overrides the token set derived from ``mask`` (test hook).
    """
    config = config or HybridConfig()
    spec = encoder.spec
    config.check(spec)
    mask = as_mask(mask)
    local_img, global_img = branch_inputs(image, mask, encoder, config)
    bits = token_mask_of(mask, spec.grid_side) if token_mask is None else np.asarray(token_mask, bool)
    if bits.shape != (spec.num_tokens,):
        raise ValueError(f"token mask must have {spec.num_tokens} entries")
    attn = AttentionMaskSpec(outside_tokens=~bits, applies_from_layer=config.mask_start)

    if config.strategy == "local":
        return encoder.project_cls(encode_image(local_img, encoder))
    if config.strategy == "global":
        return encoder.project_cls(encode_image(global_img, encoder, attn))
    if config.strategy == "g+l":
        f_loc = encoder.project_cls(encode_image(local_img, encoder))
        f_glob = encoder.project_cls(encode_image(global_img, encoder, attn))
        w = config.gl_weight
        return (1.0 - w) * _unit(f_loc) + w * _unit(f_glob)

    x_loc = encoder.embed(local_img)
    x_glob = encoder.embed(global_img)
    start = config.fusion_start_layer
    for layer in range(1, spec.num_layers + 1):
        if config.strategy == "g2l":
            local_in = _fuse(x_loc, x_glob, config.beta, bits) if layer >= start else x_loc
            x_glob = _checked(encoder.run_layer(layer, x_glob, attn), "global")
            x_loc = _checked(encoder.run_layer(layer, local_in, None), "local")
        else:  # l2g: local tokens flow into the global branch without a token mask
            global_in = _fuse(x_glob, x_loc, config.beta, None) if layer >= start else x_glob
            x_loc = _checked(encoder.run_layer(layer, x_loc, None), "local")
            x_glob = _checked(encoder.run_layer(layer, global_in, attn), "global")
    out = x_loc if config.strategy == "g2l" else x_glob
    return encoder.project_cls(out)


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0 or not np.isfinite(n):
        raise ValueError("feature vector has zero or non-finite norm")
    return v / n


def encode_text(text: str, encoder: LayeredEncoder, template: str = "{}") -> np.ndarray:
    if not text or not text.strip():
        raise ValueError("referring expression is empty")
    return np.asarray(encoder.encode_text(template.format(text.strip())), dtype=np.float64)


def cosine(a, b) -> float:
    return float(np.dot(_unit(np.asarray(a, float)), _unit(np.asarray(b, float))))


def semantic_scores(features: Sequence[np.ndarray], text_feature: np.ndarray) -> np.ndarray:
    """Cosine similarity between every mask feature and the text feature."""
    t = _unit(np.asarray(text_feature, dtype=np.float64))
    out = np.empty(len(features))
    for i, f in enumerate(features):
        f = np.asarray(f, dtype=np.float64)
        if f.shape != t.shape:
            raise ValueError(f"feature {i} has dimension {f.shape}, text feature {t.shape}")
        out[i] = np.clip(np.dot(_unit(f), t), -1.0, 1.0)
    return out
