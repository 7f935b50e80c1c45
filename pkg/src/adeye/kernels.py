"""Hot numeric kernels: batched ray casting and safety-grid inflation.

Two interchangeable backends compute identical results:

* a numba ``@njit`` backend (default when numba imports cleanly), and
* a pure-numpy fallback.

Selection is done once at import time via the ``ADEYE_BACKEND`` environment
variable (``numba`` or ``numpy``; unset means numba-if-available). Both
backends scan geometry in array order and accept a strictly nearer hit only,
so hit identity is deterministic and backend-independent.

Geometry is flattened to two arrays: circles ``(n, 3)`` as cx, cy, r and
segments ``(m, 4)`` as x1, y1, x2, y2, each with an int owner code
(``owner < 0`` never matches an exclusion).
"""

from __future__ import annotations

import math
import os

import numpy as np

NO_HIT = -1


# ---------------------------------------------------------------------------
# pure-numpy backend


def _raycast_one_np(ox, oy, dx, dy, max_range, circles, circle_owner, segs, seg_owner, exclude):
    best_t = max_range
    best_owner = NO_HIT
    if len(circles):
        keep = circle_owner != exclude
        cx = circles[keep, 0] - ox
        cy = circles[keep, 1] - oy
        r = circles[keep, 2]
        b = cx * dx + cy * dy
        disc = b * b - (cx * cx + cy * cy - r * r)
        owners = circle_owner[keep]
        ok = disc >= 0.0
        if np.any(ok):
            sq = np.sqrt(disc[ok])
            b_ok = b[ok]
            t1 = b_ok - sq
            t2 = b_ok + sq
            t = np.where(t1 >= 0.0, t1, t2)
            valid = t >= 0.0
            o_ok = owners[ok]
            for ti, oi in zip(t[valid], o_ok[valid]):
                if ti < best_t:
                    best_t = ti
                    best_owner = int(oi)
    if len(segs):
        keep = seg_owner != exclude
        x1 = segs[keep, 0]
        y1 = segs[keep, 1]
        ex = segs[keep, 2] - x1
        ey = segs[keep, 3] - y1
        owners = seg_owner[keep]
        denom = dx * ey - dy * ex
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(denom != 0.0, ((x1 - ox) * ey - (y1 - oy) * ex) / denom, np.inf)
            u = np.where(denom != 0.0, ((x1 - ox) * dy - (y1 - oy) * dx) / denom, np.inf)
        valid = (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
        for ti, oi in zip(t[valid], owners[valid]):
            if ti < best_t:
                best_t = ti
                best_owner = int(oi)
    return best_t, best_owner


def _raycast_batch_np(ox, oy, dirx, diry, max_range, circles, circle_owner, segs, seg_owner, exclude):
    n = len(dirx)
    dists = np.empty(n)
    owners = np.empty(n, dtype=np.int64)
    for i in range(n):
        dists[i], owners[i] = _raycast_one_np(
            ox, oy, dirx[i], diry[i], max_range, circles, circle_owner, segs, seg_owner, exclude
        )
    return dists, owners


def _inflate_np(occ, resolution, r_inf):
    h, w = occ.shape
    ratings = np.zeros((h, w))
    if r_inf <= 0:
        ratings[occ != 0] = 1.0
        return ratings
    radius = int(math.ceil(r_inf / resolution))
    oi, oj = np.nonzero(occ)
    di = np.arange(-radius, radius + 1)
    dj = np.arange(-radius, radius + 1)
    dist = np.hypot(di[:, None] * resolution, dj[None, :] * resolution)
    patch = np.maximum(0.0, 1.0 - dist / r_inf)
    for i, j in zip(oi, oj):
        i0, i1 = max(0, i - radius), min(h, i + radius + 1)
        j0, j1 = max(0, j - radius), min(w, j + radius + 1)
        pi0 = i0 - (i - radius)
        pj0 = j0 - (j - radius)
        view = ratings[i0:i1, j0:j1]
        np.maximum(view, patch[pi0 : pi0 + (i1 - i0), pj0 : pj0 + (j1 - j0)], out=view)
    ratings[occ != 0] = 1.0
    return ratings


# ---------------------------------------------------------------------------
# numba backend


def _build_numba():
    from numba import njit

    @njit(cache=True)
    def raycast_one(ox, oy, dx, dy, max_range, circles, circle_owner, segs, seg_owner, exclude):
        best_t = max_range
        best_owner = -1
        for k in range(circles.shape[0]):
            if circle_owner[k] == exclude:
                continue
            cx = circles[k, 0] - ox
            cy = circles[k, 1] - oy
            r = circles[k, 2]
            b = cx * dx + cy * dy
            disc = b * b - (cx * cx + cy * cy - r * r)
            if disc < 0.0:
                continue
            sq = math.sqrt(disc)
            t = b - sq
            if t < 0.0:
                t = b + sq
            if t >= 0.0 and t < best_t:
                best_t = t
                best_owner = circle_owner[k]
        for k in range(segs.shape[0]):
            if seg_owner[k] == exclude:
                continue
            x1 = segs[k, 0]
            y1 = segs[k, 1]
            ex = segs[k, 2] - x1
            ey = segs[k, 3] - y1
            denom = dx * ey - dy * ex
            if denom == 0.0:
                continue
            t = ((x1 - ox) * ey - (y1 - oy) * ex) / denom
            u = ((x1 - ox) * dy - (y1 - oy) * dx) / denom
            if t >= 0.0 and 0.0 <= u <= 1.0 and t < best_t:
                best_t = t
                best_owner = seg_owner[k]
        return best_t, best_owner

    @njit(cache=True)
    def raycast_batch(ox, oy, dirx, diry, max_range, circles, circle_owner, segs, seg_owner, exclude):
        # directions are precomputed by the wrapper so both backends consume
        # bit-identical inputs (in-kernel trig may route through SVML)
        n = dirx.shape[0]
        dists = np.empty(n)
        owners = np.empty(n, dtype=np.int64)
        for i in range(n):
            dists[i], owners[i] = raycast_one(
                ox, oy, dirx[i], diry[i], max_range, circles, circle_owner, segs, seg_owner, exclude
            )
        return dists, owners

    @njit(cache=True)
    def inflate(occ, resolution, r_inf):
        h, w = occ.shape
        ratings = np.zeros((h, w))
        if r_inf <= 0:
            for i in range(h):
                for j in range(w):
                    if occ[i, j] != 0:
                        ratings[i, j] = 1.0
            return ratings
        radius = int(math.ceil(r_inf / resolution))
        for i in range(h):
            for j in range(w):
                if occ[i, j] == 0:
                    continue
                i0 = max(0, i - radius)
                i1 = min(h, i + radius + 1)
                j0 = max(0, j - radius)
                j1 = min(w, j + radius + 1)
                for ii in range(i0, i1):
                    for jj in range(j0, j1):
                        d = math.hypot((ii - i) * resolution, (jj - j) * resolution)
                        r = 1.0 - d / r_inf
                        if r > ratings[ii, jj]:
                            ratings[ii, jj] = r
        for i in range(h):
            for j in range(w):
                if occ[i, j] != 0:
                    ratings[i, j] = 1.0
        return ratings

    return raycast_one, raycast_batch, inflate


def _select_backend():
    choice = os.environ.get("ADEYE_BACKEND", "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ValueError(f"ADEYE_BACKEND must be 'numba' or 'numpy', got {choice!r}")
    if choice != "numpy":
        try:
            return "numba", _build_numba()
        except ImportError:
            if choice == "numba":
                raise
    return "numpy", (_raycast_one_np, _raycast_batch_np, _inflate_np)


BACKEND, (_raycast_one, _raycast_batch, _inflate) = _select_backend()

_EMPTY3 = np.empty((0, 3))
_EMPTY4 = np.empty((0, 4))
_EMPTY_OWNER = np.empty(0, dtype=np.int64)


def _prep(circles, circle_owner, segs, seg_owner):
    circles = np.ascontiguousarray(circles, dtype=np.float64) if len(circles) else _EMPTY3
    segs = np.ascontiguousarray(segs, dtype=np.float64) if len(segs) else _EMPTY4
    circle_owner = (
        np.ascontiguousarray(circle_owner, dtype=np.int64) if len(circles) else _EMPTY_OWNER
    )
    seg_owner = np.ascontiguousarray(seg_owner, dtype=np.int64) if len(segs) else _EMPTY_OWNER
    return circles, circle_owner, segs, seg_owner


def raycast_one(ox, oy, angle, max_range, circles, circle_owner, segs, seg_owner, exclude=NO_HIT):
    """First hit along a single ray; returns (distance, owner) with owner == NO_HIT on miss."""
    circles, circle_owner, segs, seg_owner = _prep(circles, circle_owner, segs, seg_owner)
    d, o = _raycast_one(
        float(ox),
        float(oy),
        math.cos(angle),
        math.sin(angle),
        float(max_range),
        circles,
        circle_owner,
        segs,
        seg_owner,
        int(exclude),
    )
    return float(d), int(o)


def raycast_batch(ox, oy, angles, max_range, circles, circle_owner, segs, seg_owner, exclude=NO_HIT):
    """First hits for a fan of rays from one origin. Misses report owner NO_HIT."""
    circles, circle_owner, segs, seg_owner = _prep(circles, circle_owner, segs, seg_owner)
    angles = np.ascontiguousarray(angles, dtype=np.float64)
    dirx = np.array([math.cos(a) for a in angles])
    diry = np.array([math.sin(a) for a in angles])
    return _raycast_batch(
        float(ox),
        float(oy),
        dirx,
        diry,
        float(max_range),
        circles,
        circle_owner,
        segs,
        seg_owner,
        int(exclude),
    )


def inflate_grid(occupancy: np.ndarray, resolution: float, r_inf: float) -> np.ndarray:
    """Linear-decay inflation: rating = max over occupied cells of 1 - dist/r_inf, clipped at 0.

    Occupied cells rate exactly 1.0. Distances are between cell centers.
    """
    occ = np.ascontiguousarray(occupancy, dtype=np.uint8)
    return _inflate(occ, float(resolution), float(r_inf))
