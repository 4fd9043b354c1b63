"""Independent brute-force oracles used by the tests.

Everything here is deliberately written the slow, obvious way (explicit
loops, set arithmetic, all-pairs distances) and shares no code with the
package implementations it checks.
"""

from __future__ import annotations

import math
import struct

import numpy as np


# ---------------------------------------------------------------------------
# set-based overlap metrics


def set_dice(g: np.ndarray, p: np.ndarray):
    """Dice via Python sets of coordinate tuples."""
    gs = {tuple(c) for c in np.argwhere(np.asarray(g, dtype=bool))}
    ps = {tuple(c) for c in np.argwhere(np.asarray(p, dtype=bool))}
    if not gs and not ps:
        return None
    return 2 * len(gs & ps) / (len(gs) + len(ps))


def set_inter_slice_dice(label_data: np.ndarray, class_id: int):
    """Inter-slice Dice via per-slice coordinate sets.

    Sums transition scores in ascending z so the arithmetic matches a
    sequential mean.
    """
    z_extent = label_data.shape[2]
    slices = []
    for z in range(z_extent):
        slices.append({tuple(c) for c in np.argwhere(label_data[:, :, z] == class_id)})
    scores = []
    for z in range(z_extent - 1):
        a, b = slices[z], slices[z + 1]
        if len(a) + len(b) == 0:
            continue
        scores.append(2 * len(a & b) / (len(a) + len(b)))
    if not scores:
        return None
    return sum(scores) / len(scores)


# ---------------------------------------------------------------------------
# surface distances


def loop_surface(mask: np.ndarray) -> list[tuple[int, ...]]:
    """Boundary voxels by explicit 6-neighbor (4 in 2D) inspection."""
    mask = np.asarray(mask, dtype=bool)
    coords = []
    offsets = []
    for axis in range(mask.ndim):
        for step in (-1, 1):
            off = [0] * mask.ndim
            off[axis] = step
            offsets.append(tuple(off))
    for idx in np.argwhere(mask):
        idx = tuple(idx)
        boundary = False
        for off in offsets:
            nb = tuple(i + o for i, o in zip(idx, off))
            if any(n < 0 or n >= s for n, s in zip(nb, mask.shape)):
                boundary = True  # zero-padded exterior
                break
            if not mask[nb]:
                boundary = True
                break
        if boundary:
            coords.append(idx)
    return coords


def linear_percentile(values, q: float) -> float:
    """Percentile with linear interpolation between order statistics."""
    vals = sorted(float(v) for v in values)
    if len(vals) == 1:
        return vals[0]
    pos = q / 100.0 * (len(vals) - 1)
    lo = math.floor(pos)
    hi = math.ceil(pos)
    frac = pos - lo
    return vals[lo] * (1 - frac) + vals[hi] * frac


def brute_hd95(g: np.ndarray, p: np.ndarray, spacing) -> float | None:
    """All-pairs symmetric 95th-percentile surface distance in mm."""
    g = np.asarray(g, dtype=bool)
    p = np.asarray(p, dtype=bool)
    if not g.any() and not p.any():
        return 0.0
    if not g.any() or not p.any():
        return None
    scale = np.asarray(spacing[:g.ndim], dtype=np.float64)
    gs = np.asarray(loop_surface(g), dtype=np.float64) * scale
    ps = np.asarray(loop_surface(p), dtype=np.float64) * scale

    def directed(a, b):
        dists = []
        for pt in a:
            dists.append(np.sqrt(((b - pt) ** 2).sum(axis=1)).min())
        return linear_percentile(dists, 95.0)

    return max(directed(gs, ps), directed(ps, gs))


# ---------------------------------------------------------------------------
# morphology


def loop_dilate(mask: np.ndarray, k: int) -> np.ndarray:
    """Binary dilation with a k x k square element, zero padding."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    r = k // 2
    out = np.zeros_like(mask)
    for i in range(h):
        for j in range(w):
            hit = False
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ni, nj = i + di, j + dj
                    if 0 <= ni < h and 0 <= nj < w and mask[ni, nj]:
                        hit = True
                        break
                if hit:
                    break
            out[i, j] = hit
    return out


def loop_erode(mask: np.ndarray, k: int) -> np.ndarray:
    """Binary erosion with a k x k square element, zero padding."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    r = k // 2
    out = np.zeros_like(mask)
    for i in range(h):
        for j in range(w):
            ok = True
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ni, nj = i + di, j + dj
                    if not (0 <= ni < h and 0 <= nj < w) or not mask[ni, nj]:
                        ok = False
                        break
                if not ok:
                    break
            out[i, j] = ok
    return out


def loop_margin(mask: np.ndarray, k: int) -> np.ndarray:
    return loop_dilate(mask, k) & ~loop_erode(mask, k)


# ---------------------------------------------------------------------------
# histograms


def exhaustive_otsu_bin(data: np.ndarray, nbins: int = 256) -> int:
    """Search every candidate split of the histogram, fresh sums each
    time, and return the argmax bin of the between-class variance."""
    flat = np.asarray(data, dtype=np.float64).ravel()
    lo, hi = flat.min(), flat.max()
    hist, edges = np.histogram(flat, bins=nbins, range=(lo, hi))
    centers = (edges[:-1] + edges[1:]) / 2.0
    best_t, best_sigma = None, -1.0
    for t in range(nbins - 1):
        w0 = int(hist[: t + 1].sum())
        w1 = int(hist[t + 1:].sum())
        if w0 == 0 or w1 == 0:
            continue
        mu0 = float((hist[: t + 1] * centers[: t + 1]).sum()) / w0
        mu1 = float((hist[t + 1:] * centers[t + 1:]).sum()) / w1
        sigma = w0 * w1 * (mu0 - mu1) ** 2
        if sigma > best_sigma:
            best_sigma, best_t = sigma, t
    return best_t


def global_hist_equalize(plane: np.ndarray, nbins: int) -> np.ndarray:
    """Plain global histogram equalization through the CDF."""
    plane = np.asarray(plane, dtype=np.float64)
    counts = [0] * nbins
    for v in plane.ravel():
        b = min(int(v * nbins), nbins - 1)
        counts[b] += 1
    cdf = []
    run = 0
    for c in counts:
        run += c
        cdf.append(run / plane.size)
    out = np.empty_like(plane)
    for idx, v in np.ndenumerate(plane):
        out[idx] = cdf[min(int(v * nbins), nbins - 1)]
    return out


# ---------------------------------------------------------------------------
# NIfTI header reference builder


def reference_nifti_header(dims, spacing, datatype_code, bitpix) -> bytes:
    """Build the expected 348-byte header with explicit field offsets."""
    buf = bytearray(348)
    struct.pack_into("<i", buf, 0, 348)                       # sizeof_hdr
    struct.pack_into("<c", buf, 38, b"r")                     # regular
    struct.pack_into("<8h", buf, 40, 3, dims[0], dims[1], dims[2], 1, 1, 1, 1)
    struct.pack_into("<h", buf, 70, datatype_code)            # datatype
    struct.pack_into("<h", buf, 72, bitpix)                   # bitpix
    struct.pack_into("<8f", buf, 76, 1.0, spacing[0], spacing[1], spacing[2],
                     0.0, 0.0, 0.0, 0.0)                      # pixdim
    struct.pack_into("<f", buf, 108, 352.0)                   # vox_offset
    struct.pack_into("<f", buf, 112, 1.0)                     # scl_slope
    struct.pack_into("<f", buf, 116, 0.0)                     # scl_inter
    struct.pack_into("<B", buf, 123, 2)                       # xyzt_units (mm)
    struct.pack_into("<4s", buf, 344, b"n+1\x00")             # magic
    return bytes(buf)
