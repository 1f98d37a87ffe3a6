from .base import (REFERENCE_DEPTH, STRATEGIES, AttentionMaskSpec, EncoderError, HybridConfig,
                   LayeredEncoder, LayeredEncoderSpec, TokenSequence)
from .hybrid import cosine, encode_image, encode_text, hybrid_encode, semantic_scores
from .preprocess import (cell_coverage, gaussian_blur, preprocess_global, preprocess_local,
                         resize_image, resize_mask, token_mask_of)
from .toy import CONCEPTS, PALETTE, ToyEncoder

__all__ = [
    "AttentionMaskSpec", "EncoderError", "HybridConfig", "LayeredEncoder", "LayeredEncoderSpec",
    "TokenSequence", "REFERENCE_DEPTH", "STRATEGIES", "ToyEncoder", "PALETTE", "CONCEPTS",
    "hybrid_encode", "encode_image", "encode_text", "semantic_scores", "cosine",
    "preprocess_local", "preprocess_global", "gaussian_blur", "token_mask_of", "cell_coverage",
    "resize_image", "resize_mask",
]
