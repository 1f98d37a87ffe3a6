"""End-to-end scoring of proposals against an expression, and dataset evaluation."""
from __future__ import annotations

import json
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from PIL import Image

from .config import RunConfig
from .core import MaskProposal, as_image, rle_decode, rle_encode
from .encoder.hybrid import encode_text, hybrid_encode, semantic_scores
from .guidance import (CoherenceError, ScoreTable, TokenSimilarityProvider, coherence_map,
                       compose_guidance, fuse_scores, relational_semantic_scores, spatial_score)
from .parser import ParsedExpression, parse_expression
from .proposals import ProposalSet, load_or_generate

log = logging.getLogger(__name__)


class NoProposalsError(RuntimeError):
    """Raised when an image has nothing left to score after filtering."""

    def __init__(self, image_id: str = ""):
        super().__init__(f"no proposals for image {image_id!r}" if image_id else "no proposals")
        self.image_id = image_id


@dataclass
class SegmentResult:
    winner: np.ndarray
    table: ScoreTable
    parsed: ParsedExpression
    guidance: np.ndarray
    semantic_path: str

    def __iter__(self):
        yield self.winner
        yield self.table


class LockedProvider:
    """Serialises access to a localization provider shared by several workers."""

    def __init__(self, provider):
        self.provider = provider
        self._lock = threading.Lock()

    def locate(self, image, text):
        with self._lock:
            return self.provider.locate(image, text)


def _proposal_list(proposals) -> List[MaskProposal]:
    if isinstance(proposals, ProposalSet):
        return list(proposals.proposals)
    return [p if isinstance(p, MaskProposal) else MaskProposal(p) for p in proposals]


def mask_features(image, proposals: Sequence[MaskProposal], encoder, config: RunConfig):
    hybrid = config.hybrid.scaled_to(encoder.spec)
    return [hybrid_encode(image, p.mask, encoder, hybrid) for p in proposals]


def segment(image, expression: str, proposals, encoder, config: Optional[RunConfig] = None,
            provider=None) -> SegmentResult:
    """Pick the proposal that best matches ``expression``.

    ``proposals`` is a :class:`ProposalSet` or a sequence of masks/proposals,
    scored in the given order. ``provider`` supplies the coherence map and
    defaults to token similarities of ``encoder``.
    """
    config = config or RunConfig()
    image = as_image(image)
    plist = _proposal_list(proposals)
    if not plist:
        raise NoProposalsError(getattr(proposals, "image_id", ""))
    for i, p in enumerate(plist):
        if p.shape != image.shape[:2]:
            raise ValueError(f"proposal {i} has shape {p.shape}, image is {image.shape[:2]}")

    parsed = parse_expression(expression)
    template = config.hybrid.text_template
    features = mask_features(image, plist, encoder, config)

    path = "cosine"
    semantic = None
    if parsed.relations and config.use_relations:
        semantic = relational_semantic_scores(plist, parsed, features, encoder, config.guidance, template)
        path = "relations"
        if not np.any(semantic > 0):
            semantic = None
            path = "cosine-fallback"
    if semantic is None:
        semantic = semantic_scores(features, encode_text(expression, encoder, template))

    shape = image.shape[:2]
    if config.use_coherence:
        provider = provider or TokenSimilarityProvider(encoder, template)
        try:
            g_co = coherence_map(image, expression, provider)
        except CoherenceError:
            if config.on_coherence_failure != "ones":
                raise
            log.warning("coherence provider failed for %r; using a uniform map", expression)
            g_co = np.ones(shape)
    else:
        g_co = np.ones(shape)
    cues = parsed.position_cues if config.use_position else ()
    guidance = compose_guidance(g_co, cues, shape)

    lam = config.guidance.lambda_for(parsed.size_cue)
    spatial = np.array([spatial_score(guidance, p.mask, lam) for p in plist])
    table = fuse_scores(semantic, spatial, config.guidance.alpha, config.guidance.temperature)
    return SegmentResult(plist[table.winner_index].mask, table, parsed, guidance, path)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass
class Sample:
    image_id: str
    image: Union[np.ndarray, str, Path]
    expression: str
    gt_mask: np.ndarray

    def load_image(self) -> np.ndarray:
        if isinstance(self.image, (str, Path)):
            return as_image(np.asarray(Image.open(self.image).convert("RGB")))
        return as_image(self.image)

    def to_json(self, root: Optional[Path] = None) -> dict:
        path = Path(self.image)
        if root is not None:
            try:
                path = path.relative_to(root)
            except ValueError:
                pass
        return {"image_id": self.image_id, "image_path": str(path), "expression": self.expression,
                "gt_rle": rle_encode(self.gt_mask)}


def read_dataset(path) -> List[Sample]:
    path = Path(path)
    root = path.parent
    out = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        missing = {"image_id", "image_path", "expression", "gt_rle"} - set(rec)
        if missing:
            raise ValueError(f"{path}:{n}: missing field(s) {sorted(missing)}")
        img = Path(rec["image_path"])
        if not img.is_absolute():
            img = root / img
        out.append(Sample(rec["image_id"], img, rec["expression"], rle_decode(rec["gt_rle"])))
    return out


def write_dataset(samples: Sequence[Sample], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(s.to_json(path.parent), sort_keys=True) for s in samples]
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    oiou: float
    miou: float
    samples: List[dict]
    config: dict = field(default_factory=dict)
    ablations: List[str] = field(default_factory=list)

    @property
    def ious(self) -> List[float]:
        return [s["iou"] for s in self.samples]

    @property
    def accuracy(self) -> float:
        """Share of samples whose winner equals the ground-truth mask exactly."""
        if not self.samples:
            return 0.0
        return sum(1 for s in self.samples if s["exact"]) / len(self.samples)

    @property
    def n_errors(self) -> int:
        return sum(1 for s in self.samples if s["error"])

    def to_json(self) -> dict:
        return {
            "oIoU": self.oiou,
            "mIoU": self.miou,
            "accuracy": self.accuracy,
            "n_samples": len(self.samples),
            "n_errors": self.n_errors,
            "ablations": list(self.ablations),
            "config": self.config,
            "samples": self.samples,
        }

    def to_text(self) -> str:
        head = ["image_id", "iou", "inter", "union", "exact", "expression"]
        rows = [[s["image_id"], f"{s['iou']:.4f}", str(s["intersection"]), str(s["union"]),
                 "yes" if s["exact"] else "no",
                 s["expression"] + (f"  [error: {s['error']}]" if s["error"] else "")]
                for s in self.samples]
        widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head) - 1)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r[:-1], widths)) + "  " + r[-1]
                 for r in [head] + rows]
        ablate = ", ".join(self.ablations) or "none"
        lines.append("")
        lines.append(f"oIoU {self.oiou:.4f}   mIoU {self.miou:.4f}   exact {self.accuracy:.4f}   "
                     f"samples {len(self.samples)}   errors {self.n_errors}   ablations {ablate}")
        return "\n".join(lines)


def aggregate(records: Sequence[dict]) -> tuple:
    """oIoU from summed integer pixel counts, mIoU as an exactly rounded mean."""
    if not records:
        return 0.0, 0.0
    inter = sum(int(r["intersection"]) for r in records)
    union = sum(int(r["union"]) for r in records)
    oiou = inter / union if union else 0.0
    miou = math.fsum(r["iou"] for r in records) / len(records)
    return oiou, miou


ProposalSource = Union[str, Path, Dict[str, ProposalSet], Callable[[Sample, np.ndarray], ProposalSet]]


def _proposals_for(source: ProposalSource, sample: Sample, image: np.ndarray, config: RunConfig):
    if callable(source) and not isinstance(source, (str, Path)):
        return source(sample, image)
    if isinstance(source, dict):
        return source[sample.image_id]
    return load_or_generate(image, sample.image_id, source, config.proposals)


def evaluate_sample(sample: Sample, source: ProposalSource, encoder, config: RunConfig,
                    provider=None) -> dict:
    gt = np.asarray(sample.gt_mask, dtype=bool)
    rec = {"image_id": sample.image_id, "expression": sample.expression, "winner_index": None,
           "intersection": 0, "union": int(np.count_nonzero(gt)), "iou": 0.0, "exact": False,
           "error": None}
    try:
        image = sample.load_image()
        if image.shape[:2] != gt.shape:
            raise ValueError(f"ground truth shape {gt.shape} does not match image {image.shape[:2]}")
        proposals = _proposals_for(source, sample, image, config)
        result = segment(image, sample.expression, proposals, encoder, config, provider)
    except Exception as exc:  # failed samples count as IoU 0
        log.warning("sample %s failed: %s", sample.image_id, exc)
        rec["error"] = f"{type(exc).__name__}: {exc}"
        return rec
    inter = int(np.count_nonzero(result.winner & gt))
    union = int(np.count_nonzero(result.winner | gt))
    rec.update(winner_index=result.table.winner_index, intersection=inter, union=union,
               iou=inter / union if union else 0.0, exact=bool(np.array_equal(result.winner, gt)))
    return rec


def evaluate(dataset: Sequence[Sample], source: ProposalSource, encoder,
             config: Optional[RunConfig] = None, provider=None, workers: int = 1) -> EvalReport:
    """Score every sample and aggregate oIoU / mIoU.

    Per-sample records are reported in a canonical order, so the report does
    not depend on dataset order or on the number of workers.
    """
    config = config or RunConfig()
    if not dataset:
        raise ValueError("dataset is empty")
    provider = provider or TokenSimilarityProvider(encoder, config.hybrid.text_template)
    if workers > 1:
        provider = LockedProvider(provider)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(
                lambda s: evaluate_sample(s, source, encoder, config, provider), dataset))
    else:
        records = [evaluate_sample(s, source, encoder, config, provider) for s in dataset]
    records.sort(key=lambda r: (r["image_id"], r["expression"], r["iou"]))
    oiou, miou = aggregate(records)
    return EvalReport(oiou, miou, records, config.to_dict(), list(config.ablations))


def build_encoder(config: RunConfig):
    if config.encoder == "toy":
        from .encoder.toy import ToyEncoder
        return ToyEncoder(seed=config.seed, **config.toy)
    from .encoder.clip_adapter import ClipAdapter
    return ClipAdapter(config.clip_model)


def overlay(image, mask, color=(255, 64, 64), alpha: float = 0.5) -> np.ndarray:
    """Alpha-blend ``mask`` onto ``image`` in ``color``."""
    image = np.asarray(image, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)[..., None]
    blended = np.where(m, (1 - alpha) * image + alpha * np.asarray(color, dtype=np.float64), image)
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)
