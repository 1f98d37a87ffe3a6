"""Mask proposals: quality gates, canonical order and the on-disk cache.

Run: python demos/01_proposals_and_rle.py
"""
import tempfile

import numpy as np

from hybridgl.core import MaskProposal, bbox_and_center, rle_decode, rle_encode
from hybridgl.proposals import ProposalGenConfig, load_or_generate, make_proposal_set, write_cache

# A mask is stored as column-major run lengths that start with a background run.
m = np.zeros((4, 5), bool)
m[1:3, 1:4] = True
enc = rle_encode(m)
print("mask:\n", m.astype(int))
print("rle:", enc)
assert np.array_equal(rle_decode(enc), m)
print("box and center:", bbox_and_center(m))

# Proposal generators report a predicted IoU and a stability score. Both must clear 0.7;
# empty and duplicated masks are dropped, survivors are ordered by area.
def blob(y, x, s):
    out = np.zeros((12, 12), bool)
    out[y:y + s, x:x + s] = True
    return out

raw = [
    MaskProposal(blob(0, 0, 3), predicted_iou=0.90, stability_score=0.95),
    MaskProposal(blob(5, 5, 6), predicted_iou=0.65, stability_score=0.99),   # iou too low
    MaskProposal(blob(5, 5, 4), predicted_iou=0.70, stability_score=0.70),   # exactly at the gate
    MaskProposal(blob(0, 0, 3), predicted_iou=0.97, stability_score=0.80),   # duplicate, better iou
]
pset = make_proposal_set("demo", (12, 12), raw, ProposalGenConfig())
for p in pset:
    print(f"#{p.index}: area {p.area:>2}  iou {p.predicted_iou:.2f}  stability {p.stability_score:.2f}")

# Caches are plain JSON; loading re-applies the same filter, so cached and live runs agree.
with tempfile.TemporaryDirectory() as tmp:
    path = write_cache(pset, tmp)
    again = load_or_generate(np.zeros((12, 12, 3), np.uint8), "demo", tmp)
    print("cache file:", path.name, "| reloaded identically:", again.to_json() == pset.to_json())
