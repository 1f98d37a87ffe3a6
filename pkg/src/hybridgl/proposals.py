"""Mask-proposal ingestion: cache files, an optional live SAM adapter, quality gating."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Union

import numpy as np

from .core import MaskProposal, as_image, order_proposals, rle_decode

log = logging.getLogger(__name__)

CACHE_SUFFIX = ".proposals.json"


class ProposalError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProposalGenConfig:
    predicted_iou_threshold: float = 0.7
    stability_score_threshold: float = 0.7
    points_per_side: int = 8

    def __post_init__(self):
        for name in ("predicted_iou_threshold", "stability_score_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.points_per_side < 1:
            raise ValueError("points_per_side must be >= 1")


@dataclass(frozen=True)
class ProposalSet:
    image_id: str
    height: int
    width: int
    proposals: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.proposals)

    def __iter__(self):
        return iter(self.proposals)

    def __getitem__(self, i) -> MaskProposal:
        return self.proposals[i]

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def masks(self) -> List[np.ndarray]:
        return [p.mask for p in self.proposals]

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "height": self.height,
            "width": self.width,
            "proposals": [
                {"rle": p.rle, "predicted_iou": p.predicted_iou, "stability_score": p.stability_score}
                for p in self.proposals
            ],
        }


class ProposalProvider(Protocol):
    """Anything that turns an image into raw (unfiltered) proposals."""

    def generate(self, image: np.ndarray, config: ProposalGenConfig) -> List[MaskProposal]:
        ...


def filter_proposals(proposals: Iterable[MaskProposal], config: ProposalGenConfig) -> List[MaskProposal]:
    """Inclusive quality gates, empty-mask removal and exact-duplicate removal.

    Of several proposals with the same mask the one with the highest
    predicted IoU survives (then the higher stability score).
    """
    best: Dict[tuple, MaskProposal] = {}
    for p in proposals:
        if p.predicted_iou < config.predicted_iou_threshold:
            continue
        if p.stability_score < config.stability_score_threshold:
            continue
        if p.area == 0:
            continue
        key = (p.shape, tuple(p.rle["counts"]))
        held = best.get(key)
        if held is None or (p.predicted_iou, p.stability_score) > (held.predicted_iou, held.stability_score):
            best[key] = p
    return order_proposals(best.values())


def make_proposal_set(image_id: str, shape, proposals: Sequence[MaskProposal],
                      config: ProposalGenConfig) -> ProposalSet:
    h, w = int(shape[0]), int(shape[1])
    for i, p in enumerate(proposals):
        if p.shape != (h, w):
            raise ProposalError(
                f"proposal {i} of image {image_id!r} has shape {p.shape}, image is {(h, w)}")
    return ProposalSet(image_id, h, w, tuple(filter_proposals(proposals, config)))


# ---------------------------------------------------------------------------
# cache files
# ---------------------------------------------------------------------------

def cache_path(directory, image_id: str) -> Path:
    return Path(directory) / f"{image_id}{CACHE_SUFFIX}"


def write_cache(pset: ProposalSet, path) -> Path:
    path = Path(path)
    if path.is_dir():
        path = cache_path(path, pset.image_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(pset.to_json(), sort_keys=True) + "\n")
    return path


def read_cache(path) -> dict:
    text = Path(path).read_text()
    if not text.strip():
        return {"proposals": []}
    return json.loads(text)


def proposals_from_json(doc: dict) -> List[MaskProposal]:
    out = []
    for entry in doc.get("proposals", []):
        out.append(MaskProposal(
            rle_decode(entry["rle"]),
            predicted_iou=entry.get("predicted_iou", 1.0),
            stability_score=entry.get("stability_score", 1.0),
        ))
    return out


def load_or_generate(image, image_id: str, source: Union[str, os.PathLike, ProposalProvider, None],
                     config: Optional[ProposalGenConfig] = None) -> ProposalSet:
    """Return the filtered, canonically ordered proposals for one image.

    ``source`` is a cache file, a directory holding ``<image_id>.proposals.json``,
    or a live provider. Filters are re-applied to cached proposals so the cached
    and live paths agree.
    """
    config = config or ProposalGenConfig()
    image = as_image(image)
    shape = image.shape[:2]
    if source is None:
        raise ProposalError(f"no proposal cache or provider for image {image_id!r}")
    if hasattr(source, "generate"):
        raw = source.generate(image, config)
        return make_proposal_set(image_id, shape, raw, config)

    path = Path(source)
    if path.is_dir():
        path = cache_path(path, image_id)
    if not path.exists():
        raise ProposalError(f"missing proposal cache {path} and no provider for image {image_id!r}")
    doc = read_cache(path)
    if "height" in doc and (doc["height"], doc["width"]) != tuple(shape):
        raise ProposalError(
            f"cache {path} is for a {doc['height']}x{doc['width']} image, got {shape[0]}x{shape[1]}")
    return make_proposal_set(image_id, shape, proposals_from_json(doc), config)


# ---------------------------------------------------------------------------
# optional live adapter
# ---------------------------------------------------------------------------

class SamProposalProvider:
    """Automatic mask generation with ``segment_anything`` (optional dependency).

    The generator's own quality thresholds are set to zero; gating happens in
    :func:`filter_proposals` so that live and cached proposals go through the
    same code path.
    """

    def __init__(self, checkpoint, model_type: str = "vit_h", device: str = "cpu"):
        try:
            from segment_anything import SamAutomaticMaskGenerator, sam_model_registry
        except ImportError as exc:  # pragma: no cover - depends on environment
            raise ProposalError(
                "live proposal generation needs the 'segment_anything' package") from exc
        sam = sam_model_registry[model_type](checkpoint=str(checkpoint))
        sam.to(device)
        self._sam = sam
        self._generator_cls = SamAutomaticMaskGenerator

    def generate(self, image, config: ProposalGenConfig) -> List[MaskProposal]:  # pragma: no cover
        gen = self._generator_cls(
            self._sam,
            points_per_side=config.points_per_side,
            pred_iou_thresh=0.0,
            stability_score_thresh=0.0,
        )
        out = []
        for rec in gen.generate(np.asarray(image)):
            out.append(MaskProposal(
                rec["segmentation"],
                predicted_iou=float(np.clip(rec["predicted_iou"], 0.0, 1.0)),
                stability_score=float(np.clip(rec["stability_score"], 0.0, 1.0)),
            ))
        return out
