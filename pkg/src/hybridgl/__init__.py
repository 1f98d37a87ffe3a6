"""Training-free referring segmentation by re-ranking mask proposals.

Each proposal gets a hybrid global-local feature from a layered image encoder
and a spatial-guidance score from parsed relations, a coherence map and
positional priors; the best fused score wins.
"""
from .config import RunConfig, load_config
from .core import (BoundingBox, EmptyMaskError, MaskProposal, bbox_and_center, mask_iou,
                   order_proposals, rle_decode, rle_encode)
from .encoder import HybridConfig, ToyEncoder, encode_text, hybrid_encode, semantic_scores
from .guidance import (GuidanceConfig, ScoreTable, TokenSimilarityProvider, coherence_map,
                       compose_guidance, fuse_scores, position_map, relation_holds,
                       relational_semantic_scores, spatial_score)
from .parser import ParsedExpression, parse_expression
from .pipeline import EvalReport, NoProposalsError, Sample, evaluate, segment
from .proposals import ProposalGenConfig, ProposalSet, filter_proposals, load_or_generate

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "load_config",
    "BoundingBox", "EmptyMaskError", "MaskProposal", "bbox_and_center", "mask_iou",
    "order_proposals", "rle_decode", "rle_encode",
    "HybridConfig", "ToyEncoder", "encode_text", "hybrid_encode", "semantic_scores",
    "GuidanceConfig", "ScoreTable", "TokenSimilarityProvider", "coherence_map", "compose_guidance",
    "fuse_scores", "position_map", "relation_holds", "relational_semantic_scores", "spatial_score",
    "ParsedExpression", "parse_expression",
    "EvalReport", "NoProposalsError", "Sample", "evaluate", "segment",
    "ProposalGenConfig", "ProposalSet", "filter_proposals", "load_or_generate",
]
