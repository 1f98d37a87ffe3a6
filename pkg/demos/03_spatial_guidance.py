"""From an expression to a winner: parsing, guidance maps and the score table.

Run: python demos/03_spatial_guidance.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from hybridgl.config import RunConfig
from hybridgl.encoder import ToyEncoder
from hybridgl.guidance import TokenSimilarityProvider, coherence_map, position_map
from hybridgl.parser import parse_expression
from hybridgl.pipeline import overlay, segment
from hybridgl.synthetic import Shape, render

for text in ["the pizza on the right of the man", "small cup on the left",
             "man in the middle", "the cup inside the box", "big elephant at the bottom of the image"]:
    p = parse_expression(text)
    print(f"{text!r:45} head={p.head_phrase!r} relations={list(p.relations)} "
          f"cues={list(p.position_cues)} size={p.size_cue}")

# Two circles and a square; only the position word separates the circles.
shapes = [Shape("circle", 55.5, 39.5, 6), Shape("circle", 7.5, 23.5, 6), Shape("square", 31.5, 55.5, 5)]
image, masks = render(shapes)
enc = ToyEncoder(seed=0)
expression = "the circle on the left"

co = coherence_map(image, expression, TokenSimilarityProvider(enc))
print(f"\ncoherence inside circles {co[masks[0] | masks[1]].mean():.2f}, "
      f"inside square {co[masks[2]].mean():.2f}, background {co[~np.logical_or.reduce(masks)].mean():.2f}")

for cfg, label in [(RunConfig(), "full"), (RunConfig(ablations=("no-position",)), "no-position")]:
    result = segment(image, expression, masks, enc, cfg)
    print(f"\n{label}: winner #{result.table.winner_index}")
    for row in result.table.rows():
        print("  #{index}  semantic {semantic_raw:+.3f} -> {semantic_norm:.3f}   "
              "spatial {spatial_raw:+.3f} -> {spatial_norm:.3f}   final {final:.3f}".format(**row))

out = Path(sys.argv[1]) if len(sys.argv) > 1 else None
if out:
    out.mkdir(parents=True, exist_ok=True)
    result = segment(image, expression, masks, enc)
    Image.fromarray(overlay(image, result.winner)).save(out / "winner.png")
    Image.fromarray((result.guidance * 255).astype(np.uint8)).save(out / "guidance.png")
    Image.fromarray((position_map("middle", (64, 64)) * 255).astype(np.uint8)).save(out / "middle.png")
    print("\nwrote", ", ".join(sorted(p.name for p in out.glob("*.png"))))
