"""Quadrature for birth integrals ``int_W z exp(-E(x, gamma)) g(x) dx``.

The birth weight jumps on spheres of the potential's jump radius around
every point (and their periodic images) and the integrands used here jump
on axis-aligned window faces.  In one and two dimensions the rule is an
iterated Gauss-Legendre rule whose intervals are split at every such
breakpoint, so each piece is smooth:

* d = 1: breakpoints are the interval ends, window edges and ``y +- r``.
* d = 2: the outer coordinate is split at disk extremes, window edges and
  the abscissae of disk-disk and disk-line intersections; the outer pieces
  use a cosine substitution that removes the square-root behaviour of chord
  lengths at the ends.  For each outer node the inner coordinate is split at
  the chord ends and window edges.

The rule is refined by doubling the node counts until two successive
levels agree to ``tol``.  In three dimensions a randomized Sobol rule is
used and the error estimate is the replicate standard error.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import AccuracyError
from .geometry import ModelParams, energy_field


@dataclass(frozen=True)
class QuadratureSpec:
    tol: float = 1e-6
    order: int = 8
    inner_order: int = 4
    max_level: int = 4
    qmc_points: int = 4096
    qmc_replicates: int = 8
    qmc_tol: float = 1e-3
    seed: int = 0


@lru_cache(maxsize=64)
def _gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=64)
def _cosine_gauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on [0, 1] for ``t = (1 - cos theta) / 2``, Gauss in theta."""
    th, wt = _gauss01(n)
    theta = math.pi * th
    return (1.0 - np.cos(theta)) / 2.0, wt * math.pi * np.sin(theta) / 2.0


def _images(points: np.ndarray, params: ModelParams, radius: float, lo, hi) -> np.ndarray:
    """Centers (periodic images included) of radius-``radius`` balls meeting the box [lo, hi]."""
    box = params.box
    if len(points) == 0 or radius <= 0:
        return np.zeros((0, box.dim))
    if box.periodic:
        L = box.side_array
        reach = [int(math.ceil(radius / Lk)) for Lk in L]
        shifts = np.array(list(itertools.product(*[range(-k, k + 1) for k in reach])), dtype=float)
        centers = (points[:, None, :] + shifts[None, :, :] * L).reshape(-1, box.dim)
    else:
        centers = points
    keep = np.all((centers + radius > lo) & (centers - radius < hi), axis=1)
    return centers[keep]


def _half_box_lines(points: np.ndarray, params: ModelParams, axis: int) -> list[float]:
    """Where the minimum-image displacement along ``axis`` flips (only matters for long-range potentials)."""
    box = params.box
    if not box.periodic or len(points) == 0:
        return []
    L = box.sides[axis]
    if params.potential.cutoff <= L / 2 or params.potential.piecewise_constant:
        return []
    return list(np.mod(points[:, axis] + L / 2, L))


def _pieces(bps, lo, hi):
    b = np.unique(np.clip(np.asarray(bps, dtype=float), lo, hi))
    return b[:-1], b[1:]


def _rule_1d(points, params, region, edges, n):
    (a,), (b,) = region
    bps = [a, b, *edges[0], *_half_box_lines(points, params, 0)]
    for r in params.potential.jump_radii:
        c = _images(points, params, r, np.array([a]), np.array([b]))[:, 0]
        # the centers too, so that no node sits on a point (r = 0 carries no energy)
        bps.extend(c - r)
        bps.extend(c)
        bps.extend(c + r)
    lo, hi = _pieces(bps, a, b)
    t, w = _gauss01(n)
    X = (lo[:, None] + (hi - lo)[:, None] * t[None, :]).reshape(-1, 1)
    W = ((hi - lo)[:, None] * w[None, :]).ravel()
    return X, W


def _rule_2d(points, params, region, edges, n_outer, n_inner):
    (a1, a2), (b1, b2) = region
    lo_r, hi_r = np.array([a1, a2]), np.array([b1, b2])
    lines1 = [a1, b1, *edges[0], *_half_box_lines(points, params, 0)]
    lines2 = [a2, b2, *edges[1], *_half_box_lines(points, params, 1)]
    circles = []
    for r in params.potential.jump_radii:
        for c in _images(points, params, r, lo_r, hi_r):
            circles.append((c[0], c[1], r))
    outer = list(lines1)
    if circles:
        C = np.asarray(circles)
        cx, cy, rr = C[:, 0], C[:, 1], C[:, 2]
        outer.extend(cx - rr)
        outer.extend(cx)
        outer.extend(cx + rr)
        # disk boundary crossing a horizontal line
        for h in lines2:
            dy = h - cy
            ok = np.abs(dy) < rr
            s = np.sqrt(rr[ok] ** 2 - dy[ok] ** 2)
            outer.extend(cx[ok] - s)
            outer.extend(cx[ok] + s)
        # pairwise circle intersections
        for i, j in itertools.combinations(range(len(C)), 2):
            dx, dy = cx[j] - cx[i], cy[j] - cy[i]
            dist = math.hypot(dx, dy)
            if dist == 0 or dist >= rr[i] + rr[j] or dist <= abs(rr[i] - rr[j]):
                continue
            along = (rr[i] ** 2 - rr[j] ** 2 + dist**2) / (2 * dist)
            h = math.sqrt(max(rr[i] ** 2 - along**2, 0.0))
            mx = cx[i] + along * dx / dist
            outer.append(mx + h * dy / dist)
            outer.append(mx - h * dy / dist)
    lo1, hi1 = _pieces(outer, a1, b1)
    # the cosine substitution only pays off where chord lengths have square-root ends
    t, w = _cosine_gauss(n_outer) if circles else _gauss01(n_outer)
    x1 = (lo1[:, None] + (hi1 - lo1)[:, None] * t[None, :]).ravel()
    w1 = ((hi1 - lo1)[:, None] * w[None, :]).ravel()
    # inner breakpoints per outer node
    fixed = np.asarray(lines2, dtype=float)
    B = np.broadcast_to(fixed, (len(x1), len(fixed)))
    if circles:
        dx = x1[:, None] - cx[None, :]
        inside = np.abs(dx) < rr[None, :]
        half = np.sqrt(np.where(inside, rr[None, :] ** 2 - dx**2, 0.0))
        top = np.where(inside, cy[None, :] + half, b2)
        bot = np.where(inside, cy[None, :] - half, b2)
        B = np.concatenate([B, top, bot], axis=1)
    B = np.sort(np.clip(B, a2, b2), axis=1)
    lo2, hi2 = B[:, :-1], B[:, 1:]
    length = hi2 - lo2
    t2, wt2 = _gauss01(n_inner)
    x2 = lo2[:, :, None] + length[:, :, None] * t2[None, None, :]
    W = (w1[:, None, None] * length[:, :, None] * wt2[None, None, :])
    X1 = np.broadcast_to(x1[:, None, None], x2.shape)
    keep = W.ravel() > 0
    X = np.stack([X1.ravel()[keep], x2.ravel()[keep]], axis=1)
    return X, W.ravel()[keep]


@lru_cache(maxsize=32)
def _fixed_rule(d, lo, hi, edges, n_outer, n_inner):
    """Rule for a weight without jumps; depends only on the region and edges, so it is shared."""
    params = _FreeParams(d)
    region = (np.asarray(lo), np.asarray(hi))
    if d == 1:
        X, W = _rule_1d(np.zeros((0, 1)), params, region, edges, n_inner if n_inner > 1 else n_outer)
    else:
        X, W = _rule_2d(np.zeros((0, 2)), params, region, edges, n_outer, n_inner)
    X.flags.writeable = False
    W.flags.writeable = False
    return X, W


class _FreeParams:
    class _P:
        jump_radii = ()
        cutoff = 0.0
        piecewise_constant = True

    class _B:
        periodic = False

    def __init__(self, d):
        self.potential = self._P()
        self.box = self._B()
        self.box.dim = d


def birth_rule(points, params: ModelParams, region, edges, n_outer: int, n_inner: int):
    """Nodes and weights (already multiplied by ``z exp(-E)``) of one refinement level.

    When the weight is constant (no points within reach of the region) the
    node array is taken from a cache, so callers may memoize on its identity.
    """
    points = np.asarray(points, dtype=float).reshape(-1, params.box.dim)
    d = params.box.dim
    if d <= 2 and (len(points) == 0 or params.potential.cutoff == 0.0):
        X, W = _fixed_rule(d, tuple(map(float, region[0])), tuple(map(float, region[1])),
                           tuple(tuple(map(float, e)) for e in edges), n_outer, n_inner)
        return X, W * params.z
    if d == 1:
        X, W = _rule_1d(points, params, region, edges, n_inner if n_inner > 1 else n_outer)
    elif d == 2:
        X, W = _rule_2d(points, params, region, edges, n_outer, n_inner)
    else:
        raise ValueError("tensor rules exist for d <= 2 only")
    E = energy_field(X, points, params.box, params.potential)
    W = W * params.z * np.exp(-E)
    return X, W


def _normalize_region(params: ModelParams, region):
    sides = params.box.side_array
    if region is None:
        return np.zeros_like(sides), sides.copy()
    lo, hi = (np.asarray(v, dtype=float) for v in region)
    return np.maximum(lo, 0.0), np.minimum(hi, sides)


def birth_integral(fn: Callable[[np.ndarray], np.ndarray], points, params: ModelParams,
                   region=None, edges: Sequence[Sequence[float]] | None = None,
                   quad: QuadratureSpec = QuadratureSpec(),
                   piecewise_constant: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """``int_region z exp(-E(x, points)) fn(x) dx`` with an error estimate.

    ``fn`` maps an (N, d) array of locations to an (N,) or (N, k) array;
    ``edges`` lists, per axis, coordinates where ``fn`` may jump.  With
    ``piecewise_constant`` the inner rule uses one node per piece (exact when
    both ``fn`` and the potential are piecewise constant).

    Returns ``(value, error)`` arrays of shape (k,) (or scalars' 0-d arrays).
    Raises AccuracyError when the tolerance is not met.
    """
    d = params.box.dim
    lo, hi = _normalize_region(params, region)
    if np.any(hi <= lo):
        return np.asarray(0.0), np.asarray(0.0)
    edges = [list(e) for e in (edges or [[] for _ in range(d)])]
    pts = np.asarray(points, dtype=float).reshape(-1, d)
    if d == 3:
        return _birth_integral_qmc(fn, pts, params, lo, hi, quad)
    region = (lo, hi)
    prev = None
    for level in range(quad.max_level + 1):
        n_outer = quad.order * 2**level
        n_inner = 1 if piecewise_constant else quad.inner_order * 2**level
        if d == 1:
            n_outer = n_inner = (1 if piecewise_constant else quad.inner_order * 2**level)
        X, W = birth_rule(pts, params, region, edges, n_outer, n_inner)
        vals = np.asarray(fn(X), dtype=float)
        cur = np.tensordot(W, vals, axes=(0, 0))
        if d == 1 and piecewise_constant:
            return cur, np.zeros_like(cur)
        if prev is not None:
            err = np.abs(cur - prev)
            if np.all(err <= quad.tol):
                return cur, err
        prev = cur
    raise AccuracyError(f"birth integral not resolved to {quad.tol:g}: "
                        f"last change {np.max(err):.3g} at level {quad.max_level}")


def _birth_integral_qmc(fn, pts, params, lo, hi, quad):
    vol = float(np.prod(hi - lo))
    reps = []
    for r in range(quad.qmc_replicates):
        sob = qmc.Sobol(d=3, scramble=True, seed=quad.seed + r)
        X = lo + (hi - lo) * sob.random(quad.qmc_points)
        E = energy_field(X, pts, params.box, params.potential)
        vals = np.asarray(fn(X), dtype=float)
        w = params.z * np.exp(-E) * vol / len(X)
        reps.append(np.tensordot(w, vals, axes=(0, 0)))
    reps = np.asarray(reps)
    est = reps.mean(axis=0)
    err = reps.std(axis=0, ddof=1) / math.sqrt(len(reps))
    if np.any(err > quad.qmc_tol):
        raise AccuracyError(f"quasi-random birth integral error {np.max(err):.3g} above {quad.qmc_tol:g}")
    return est, err
