"""Encoder-facing types and the adapter contract."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol, runtime_checkable

import numpy as np

STRATEGIES = ("g2l", "l2g", "g+l", "local", "global")

# depth of the ViT-B/16 image tower the default start layer was tuned for
REFERENCE_DEPTH = 12


class EncoderError(RuntimeError):
    pass


@dataclass(frozen=True)
class LayeredEncoderSpec:
    num_layers: int
    embed_dim: int
    grid_side: int
    input_side: int

    def __post_init__(self):
        if self.num_layers < 2:
            raise ValueError("encoder needs at least 2 layers")
        if self.grid_side < 1 or self.input_side < self.grid_side:
            raise ValueError("grid_side must be >= 1 and no larger than input_side")

    @property
    def num_tokens(self) -> int:
        return self.grid_side * self.grid_side


@dataclass(frozen=True)
class TokenSequence:
    """Encoder state after ``layer`` layers; row 0 is the CLS token."""

    layer: int
    tokens: np.ndarray

    @property
    def cls(self) -> np.ndarray:
        return self.tokens[0]

    @property
    def image_tokens(self) -> np.ndarray:
        return self.tokens[1:]


@dataclass(frozen=True)
class AttentionMaskSpec:
    """CLS-query attention mask: ``outside_tokens[j]`` blocks image token j."""

    outside_tokens: np.ndarray
    applies_from_layer: int = 1

    def active(self, layer: int) -> bool:
        return layer >= self.applies_from_layer


@dataclass(frozen=True)
class HybridConfig:
    beta: float = 2.0
    fusion_start_layer: int = 9
    attention_mask_start_layer: Optional[int] = None
    blur_sigma: float = 5.0
    blur_reference_side: int = 224
    strategy: str = "g2l"
    gl_weight: float = 0.5
    text_template: str = "{}"

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown fusion strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.fusion_start_layer < 1:
            raise ValueError("fusion_start_layer must be >= 1")
        if not 0.0 <= self.gl_weight <= 1.0:
            raise ValueError("gl_weight must lie in [0, 1]")

    @property
    def mask_start(self) -> int:
        if self.attention_mask_start_layer is None:
            return self.fusion_start_layer
        return self.attention_mask_start_layer

    def sigma_for(self, input_side: int) -> float:
        return self.blur_sigma * input_side / self.blur_reference_side

    def check(self, spec: LayeredEncoderSpec) -> None:
        if not 1 <= self.fusion_start_layer <= spec.num_layers:
            raise ValueError(
                f"fusion_start_layer={self.fusion_start_layer} outside 1..{spec.num_layers}")
        if not 1 <= self.mask_start <= spec.num_layers:
            raise ValueError(
                f"attention_mask_start_layer={self.mask_start} outside 1..{spec.num_layers}")

    def scaled_to(self, spec: LayeredEncoderSpec) -> "HybridConfig":
        """Rescale start layers tuned on a 12-layer tower to a shallower encoder.

        Configurations that already fit the encoder are returned unchanged.
        """
        from dataclasses import replace

        def scale(layer):
            if layer is None or layer <= spec.num_layers:
                return layer
            return max(1, min(spec.num_layers, round(layer * spec.num_layers / REFERENCE_DEPTH)))

        return replace(self, fusion_start_layer=scale(self.fusion_start_layer),
                       attention_mask_start_layer=scale(self.attention_mask_start_layer))


@runtime_checkable
class LayeredEncoder(Protocol):
    """What :func:`hybrid_encode` needs from a visual/text encoder."""

    spec: LayeredEncoderSpec

    def embed(self, image: np.ndarray) -> TokenSequence: ...

    def run_layer(self, layer: int, seq: TokenSequence,
                  attn_mask: Optional[AttentionMaskSpec] = None) -> TokenSequence: ...

    def project_cls(self, seq: TokenSequence) -> np.ndarray: ...

    def encode_text(self, text: str) -> np.ndarray: ...
