#!/usr/bin/env python3
"""Reference UV normalization chain in numpy.

Reads <case>.input.json files written by uv_golden_inputs and writes
<case>.expected.json next to them: the aggregated texture and validity mask.

Chain per frame: normalize (mean 0.5, std 0.2 over visible texels, clamp),
histogram match against the normalized first frame with any visible texel
(mid-rank CDF, smallest reference value reaching it), gamma solved on the
matched texture so mean visible luminance becomes 0.5 (clamped to [0.25, 4]).
Frames are then blended with their visibility weights.
"""

import json
import math
import sys
from pathlib import Path

import numpy as np

LUMA = np.array([0.299, 0.587, 0.114])


def normalize(tex, vis):
    seen = vis > 0
    if not seen.any():
        return tex.copy()
    out = tex.copy()
    for c in range(3):
        x = tex[seen, c]
        mean = x.mean()
        sd = math.sqrt(((x - mean) ** 2).mean())
        z = (x - mean) / sd if sd > 0 else np.zeros_like(x)
        out[seen, c] = np.clip(0.5 + 0.2 * z, 0.0, 1.0)
    return out


def match(tex, vis, ref, ref_vis):
    seen, ref_seen = vis > 0, ref_vis > 0
    if not seen.any() or not ref_seen.any():
        return tex.copy()
    out = tex.copy()
    for c in range(3):
        src = np.sort(tex[seen, c])
        dst = np.sort(ref[ref_seen, c])
        x = tex[seen, c]
        below = np.searchsorted(src, x, side="left")
        upto = np.searchsorted(src, x, side="right")
        # Integer form of ceil(p * nr) with p = (below + upto) / (2 ns).
        num = (below + upto) * len(dst)
        den = 2 * len(src)
        idx = np.clip(-(-num // den), 1, len(dst)) - 1
        out[seen, c] = dst[idx]
    return out


def solve_gamma(tex, vis):
    seen = vis > 0
    if not seen.any():
        return 1.0
    lum = float((tex[seen] @ LUMA).mean())
    if not 0.0 < lum < 1.0:
        return 1.0
    return min(max(math.log(0.5) / math.log(lum), 0.25), 4.0)


def chain(textures, masks):
    ref = None
    for t, m in zip(textures, masks):
        if (m > 0).any():
            ref = (normalize(t, m), m)
            break
    frames = []
    for t, m in zip(textures, masks):
        n = normalize(t, m)
        h = match(n, m, *ref) if ref is not None else n
        frames.append(h ** solve_gamma(h, m))
    w = np.stack(masks)  # n x texels
    total = w.sum(axis=0)
    valid = total > 0
    acc = np.einsum("ft,ftc->tc", w, np.stack(frames))
    out = np.zeros_like(acc)
    out[valid] = np.clip(acc[valid] / total[valid, None], 0.0, 1.0)
    return out, valid.astype(float)


def main(directory):
    root = Path(directory)
    inputs = sorted(root.glob("*.input.json"))
    if not inputs:
        sys.exit(f"no *.input.json under {root}")
    for path in inputs:
        case = json.loads(path.read_text())
        texels = case["rows"] * case["cols"]
        textures = [np.array(f["texture"], dtype=float).reshape(texels, 3) for f in case["frames"]]
        masks = [np.array(f["mask"], dtype=float) for f in case["frames"]]
        tex, valid = chain(textures, masks)
        expected = {
            "name": case["name"],
            "rows": case["rows"],
            "cols": case["cols"],
            "texture": [float(v) for v in tex.reshape(-1)],
            "valid": [float(v) for v in valid],
        }
        out = path.with_name(path.name.replace(".input.json", ".expected.json"))
        out.write_text(json.dumps(expected) + "\n")
        print(f"{case['name']}: {len(textures)} frame(s), {int(valid.sum())} valid texels -> {out.name}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).with_name("uv"))
