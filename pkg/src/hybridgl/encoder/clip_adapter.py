"""Adapter exposing a Hugging Face CLIP model through the layered-encoder contract.

Optional: needs ``torch`` and ``transformers`` plus downloadable weights. The
reference geometry is ViT-B/16 (12 layers, 14x14 grid, 224 px input).
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .base import AttentionMaskSpec, EncoderError, LayeredEncoderSpec, TokenSequence

CLIP_MEAN = np.array([0.48145466, 0.4578275, 0.40821073])
CLIP_STD = np.array([0.26862954, 0.26130258, 0.27577711])


class ClipAdapter:
    def __init__(self, model_name: str = "openai/clip-vit-base-patch16", model=None,
                 tokenizer=None, device: str = "cpu"):
        import torch
        from transformers import CLIPModel

        self._torch = torch
        if model is None:
            model = CLIPModel.from_pretrained(model_name, attn_implementation="eager")
        if tokenizer is None and model_name is not None:
            try:
                from transformers import CLIPTokenizer
                tokenizer = CLIPTokenizer.from_pretrained(model_name)
            except Exception:  # pragma: no cover - offline
                tokenizer = None
        self.model = model.to(device).eval()
        self.tokenizer = tokenizer
        self.device = device
        vcfg = model.vision_model.config
        self.spec = LayeredEncoderSpec(
            num_layers=vcfg.num_hidden_layers,
            embed_dim=vcfg.hidden_size,
            grid_side=vcfg.image_size // vcfg.patch_size,
            input_side=vcfg.image_size,
        )

    def _tensor(self, arr):
        return self._torch.as_tensor(np.asarray(arr, dtype=np.float32), device=self.device)

    def embed(self, image: np.ndarray) -> TokenSequence:
        side = self.spec.input_side
        image = np.asarray(image)
        if image.shape != (side, side, 3):
            raise EncoderError(f"CLIP adapter expects a {side}x{side} RGB input, got {image.shape}")
        pixels = (image / 255.0 - CLIP_MEAN) / CLIP_STD
        pixels = self._tensor(pixels.transpose(2, 0, 1)[None])
        vm = self.model.vision_model
        with self._torch.no_grad():
            x = vm.pre_layrnorm(vm.embeddings(pixels))
        return TokenSequence(0, x[0].cpu().numpy().astype(np.float64))

    def run_layer(self, layer: int, seq: TokenSequence,
                  attn_mask: Optional[AttentionMaskSpec] = None) -> TokenSequence:
        block = self.model.vision_model.encoder.layers[layer - 1]
        x = self._tensor(seq.tokens)[None]
        bias = None
        if attn_mask is not None and attn_mask.active(layer):
            n = seq.tokens.shape[0]
            b = np.zeros((1, 1, n, n), dtype=np.float32)
            b[0, 0, 0, 1:][np.asarray(attn_mask.outside_tokens, bool)] = np.finfo(np.float32).min
            bias = self._tensor(b)
        with self._torch.no_grad():
            out = block(x, attention_mask=bias)
        if isinstance(out, tuple):
            out = out[0]
        return TokenSequence(layer, out[0].cpu().numpy().astype(np.float64))

    def _project(self, rows: np.ndarray) -> np.ndarray:
        with self._torch.no_grad():
            h = self.model.vision_model.post_layernorm(self._tensor(rows))
            return self.model.visual_projection(h).cpu().numpy().astype(np.float64)

    def project_cls(self, seq: TokenSequence) -> np.ndarray:
        return self._project(seq.tokens[:1])[0]

    def project_tokens(self, seq: TokenSequence) -> np.ndarray:
        return self._project(seq.tokens[1:])

    def encode_text(self, text: str) -> np.ndarray:
        if self.tokenizer is None:
            raise EncoderError("CLIP adapter has no tokenizer")
        batch = self.tokenizer([text], padding=True, return_tensors="pt").to(self.device)
        with self._torch.no_grad():
            feats = self.model.get_text_features(**batch)
        if not isinstance(feats, self._torch.Tensor):  # newer releases return a model output
            feats = feats.pooler_output
        return feats[0].cpu().numpy().astype(np.float64)
