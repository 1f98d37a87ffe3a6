"""Brute-force reference implementations, written without the package internals.

Each oracle takes raw inputs (weights, boxes, pixel arrays) and computes the
quantity with explicit loops so that it shares no code path with the library.
"""
import math

import numpy as np
from scipy.ndimage import gaussian_filter


# -- hybrid forward ---------------------------------------------------------

def _ln(row, eps):
    mu = sum(row) / len(row)
    var = sum((v - mu) ** 2 for v in row) / len(row)
    return [(v - mu) / math.sqrt(var + eps) for v in row]


def _gelu(v):
    return 0.5 * v * (1.0 + math.tanh(math.sqrt(2.0 / math.pi) * (v + 0.044715 * v ** 3)))


def _matvec(row, w):
    return list(np.asarray(row) @ w)


def _block(x, blk, eps, outside=None):
    """One pre-norm block. ``outside`` lists image tokens the CLS row may not attend to."""
    n, d = len(x), len(x[0])
    h = [_ln(r, eps) for r in x]
    q = [_matvec(r, blk["wq"]) for r in h]
    k = [_matvec(r, blk["wk"]) for r in h]
    v = [_matvec(r, blk["wv"]) for r in h]
    out = []
    for i in range(n):
        allowed = [j for j in range(n) if not (i == 0 and j >= 1 and outside is not None and outside[j - 1])]
        logits = {j: sum(q[i][c] * k[j][c] for c in range(d)) / math.sqrt(d) for j in allowed}
        top = max(logits.values())
        w = {j: math.exp(logits[j] - top) for j in allowed}
        z = sum(w.values())
        mixed = [sum(w[j] / z * v[j][c] for j in allowed) for c in range(d)]
        row = [a + b for a, b in zip(x[i], _matvec(mixed, blk["wo"]))]
        h2 = _ln(row, eps)
        hidden = [_gelu(t) for t in _matvec(h2, blk["w1"])]
        out.append([a + b for a, b in zip(row, _matvec(hidden, blk["w2"]))])
    return out


def toy_embed(enc, image):
    side, grid = enc.spec.input_side, enc.spec.grid_side
    cell = side // grid
    colours = enc._colours
    bw = enc.colour_bandwidth
    img = np.asarray(image, dtype=np.float64)
    tokens = [list(enc.cls0)]
    for r in range(grid):
        for c in range(grid):
            block = img[r * cell:(r + 1) * cell, c * cell:(c + 1) * cell].reshape(-1, 3)
            feats = []
            for col in colours:
                d2 = ((block - col) ** 2).sum(axis=1)
                feats.append(math.fsum(np.exp(-d2 / (2 * bw * bw))) / len(block))
            tokens.append(list(np.asarray(feats) @ enc.w_embed + enc.pos[r * grid + c]))
    return tokens


def token_mask(mask, grid):
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    ch, cw = h // grid, w // grid
    cov = [[mask[r * ch:(r + 1) * ch, c * cw:(c + 1) * cw].mean() for c in range(grid)] for r in range(grid)]
    bits = [cov[r][c] >= 0.5 for r in range(grid) for c in range(grid)]
    if not any(bits):
        bits = [cov[r][c] > 0 for r in range(grid) for c in range(grid)]
    if not any(bits):
        ys, xs = np.nonzero(mask)
        cy, cx = (ys.min() + ys.max()) / 2, (xs.min() + xs.max()) / 2
        r, c = int((cy + 0.5) * grid / h), int((cx + 0.5) * grid / w)
        bits = [i == r * grid + c for i in range(grid * grid)]
    return bits


def hybrid_forward(enc, image, mask, l_start, beta, sigma_ref=5.0, ref_side=224):
    """G2L recurrence spelled out: both branches, attention mask and fusion from ``l_start``."""
    side = enc.spec.input_side
    image = np.asarray(image, dtype=np.uint8)
    mask = np.asarray(mask, dtype=bool)
    assert image.shape == (side, side, 3), "oracle works at the encoder's native size"
    local = image * mask[..., None]
    sigma = sigma_ref * side / ref_side
    blurred = np.clip(np.rint(gaussian_filter(image.astype(np.float64), (sigma, sigma, 0),
                                              mode="reflect", truncate=2.0)), 0, 255).astype(np.uint8)
    glob = np.where(mask[..., None], image, blurred)
    bits = token_mask(mask, enc.spec.grid_side)
    outside = [not b for b in bits]

    x_loc, x_glob = toy_embed(enc, local), toy_embed(enc, glob)
    for layer in range(1, enc.spec.num_layers + 1):
        blk = enc.blocks[layer - 1]
        if layer >= l_start:
            hyb = [list(x_loc[0])]
            for t in range(1, len(x_loc)):
                gate = 1.0 if bits[t - 1] else 0.0
                hyb.append([a + beta * gate * b for a, b in zip(x_loc[t], x_glob[t])])
            new_glob = _block(x_glob, blk, enc.ln_eps, outside)
            x_loc = _block(hyb, blk, enc.ln_eps)
            x_glob = new_glob
        else:
            x_glob = _block(x_glob, blk, enc.ln_eps)
            x_loc = _block(x_loc, blk, enc.ln_eps)
    return np.asarray(x_loc[0]) @ enc.w_proj


# -- geometry ---------------------------------------------------------------

def box_mask(box, shape):
    x0, y0, x1, y1 = box
    m = np.zeros(shape, dtype=bool)
    m[y0:y1 + 1, x0:x1 + 1] = True
    return m


def box_relation(rel, a, b, containment=0.9):
    """Relation between two inclusive pixel boxes (x0, y0, x1, y1), from box arithmetic only."""
    acx, acy = (a[0] + a[2]) / 2, (a[1] + a[3]) / 2
    bcx, bcy = (b[0] + b[2]) / 2, (b[1] + b[3]) / 2
    area_a = (a[2] - a[0] + 1) * (a[3] - a[1] + 1)
    area_b = (b[2] - b[0] + 1) * (b[3] - b[1] + 1)
    ix = max(0, min(a[2], b[2]) - max(a[0], b[0]) + 1)
    iy = max(0, min(a[3], b[3]) - max(a[1], b[1]) + 1)
    return int({
        "left": acx < bcx, "right": acx > bcx, "top": acy < bcy, "bottom": acy > bcy,
        "within": ix * iy / area_a >= containment,
        "smaller": area_a < area_b, "bigger": area_a > area_b,
    }[rel])


def spatial_score(g, mask, lam):
    inside, outside = [], []
    h, w = mask.shape
    for y in range(h):
        for x in range(w):
            (inside if mask[y, x] else outside).append(float(g[y, x]))
    s_out = math.fsum(outside) / len(outside) if outside else 0.0
    return math.fsum(inside) / len(inside) - lam * s_out
