"""Gradients, the generator and the Dirichlet form on cylinder observables.

Sign conventions: ``D-_x F(g) = F(g - x) - F(g)`` for ``x`` in ``g`` and
``D+_x F(g) = F(g) - F(g + x)`` for ``x`` not in ``g``.  The generator

    HF(g) = int z exp(-E(x, g)) D+_x F(g) dx - sum_{x in g} D-_x F(g)

is nonnegative; for ``phi = 0`` it is the number operator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ModelError, ParameterError
from .geometry import Box, Configuration, ModelParams
from .quadrature import QuadratureSpec, birth_integral
from .stats import Estimate, SampleSet, batch_mean, batch_mean_columns


def _points(gamma) -> np.ndarray:
    return gamma.points if isinstance(gamma, Configuration) else np.asarray(gamma, dtype=float)


@dataclass(frozen=True)
class Window:
    """A window function on the box: the indicator of ``[lo, hi)`` or a cosine bump on it."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    shape: str = "indicator"

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi) or any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ParameterError(f"invalid window [{self.lo}, {self.hi})")
        if self.shape not in ("indicator", "bump"):
            raise ParameterError(f"window shape must be 'indicator' or 'bump', got {self.shape!r}")

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def integral(self) -> float:
        """Lebesgue integral of the window function."""
        return self.volume if self.shape == "indicator" else self.volume / 2 ** len(self.lo)

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, len(self.lo))
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        inside = (X[:, 0] >= lo[0]) & (X[:, 0] < hi[0])
        for k in range(1, len(lo)):
            inside &= (X[:, k] >= lo[k]) & (X[:, k] < hi[k])
        if self.shape == "indicator":
            return inside.astype(float)
        u = np.clip((X - lo) / (hi - lo), 0.0, 1.0)
        bump = np.prod((1.0 - np.cos(2 * np.pi * u)) / 2.0, axis=1)
        return np.where(inside, bump, 0.0)


class Observable:
    """A local function of configurations.

    Subclasses provide ``values``; the vectorized helpers below fall back to
    loops and are overridden by cylinder observables.
    """

    name = "observable"
    support: tuple[np.ndarray, np.ndarray] | None = None
    bound: float | None = None
    piecewise_constant = False

    def values(self, points: np.ndarray) -> float:
        raise NotImplementedError

    def __call__(self, gamma) -> float:
        return float(self.values(_points(gamma)))

    def edges(self, d: int) -> list[list[float]]:
        if self.support is None:
            return [[] for _ in range(d)]
        lo, hi = self.support
        return [[float(lo[k]), float(hi[k])] for k in range(d)]

    def added(self, points: np.ndarray, X: np.ndarray) -> np.ndarray:
        """``F(gamma + x)`` for each row of ``X``."""
        return np.array([self.values(np.vstack([points, x[None, :]])) for x in X])

    def removed(self, points: np.ndarray) -> np.ndarray:
        """``F(gamma - x_i)`` for every point ``x_i``."""
        n = len(points)
        return np.array([self.values(np.delete(points, i, axis=0)) for i in range(n)])

    def removed_pairs(self, points: np.ndarray) -> np.ndarray:
        """``F(gamma - {x_i, x_j})`` as an (n, n) array (diagonal: ``F(gamma - x_i)``)."""
        n = len(points)
        out = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                out[i, j] = self.values(np.delete(points, [i] if i == j else [i, j], axis=0))
        return out


class CylinderObservable(Observable):
    """``F(gamma) = g(<f_1, gamma>, ..., <f_N, gamma>)`` for window functions ``f_k``."""

    def __init__(self, windows: Sequence[Window], g: Callable[[np.ndarray], np.ndarray],
                 name: str = "cylinder", bound: float | None = None):
        self.windows = tuple(windows)
        self.g = g
        self.name = name
        self.bound = bound
        if self.windows:
            lo = np.min([w.lo for w in self.windows], axis=0)
            hi = np.max([w.hi for w in self.windows], axis=0)
            self.support = (lo, hi)
        else:
            self.support = None
        self.piecewise_constant = all(w.shape == "indicator" for w in self.windows)

    def __repr__(self):
        return f"CylinderObservable({self.name!r})"

    def edges(self, d):
        out = [[] for _ in range(d)]
        for w in self.windows:
            for k in range(d):
                out[k].extend([w.lo[k], w.hi[k]])
        return [sorted(set(e)) for e in out]

    def window_values(self, points: np.ndarray) -> np.ndarray:
        """(n, N) array of ``f_k(x_i)``."""
        points = np.asarray(points, dtype=float)
        if not self.windows:
            return np.zeros((len(points), 0))
        return np.stack([w(points) for w in self.windows], axis=1)

    def counts(self, points) -> np.ndarray:
        return self.window_values(points).sum(axis=0)

    def values(self, points):
        return float(self.g(self.counts(points)[None, :])[0])

    def added(self, points, X):
        c = self.counts(points)
        return np.asarray(self.g(c[None, :] + self.window_values(X)), dtype=float)

    def removed(self, points):
        fv = self.window_values(points)
        return np.asarray(self.g(fv.sum(axis=0)[None, :] - fv), dtype=float)

    def removed_pairs(self, points):
        fv = self.window_values(points)
        c = fv.sum(axis=0)
        pair = c[None, None, :] - fv[:, None, :] - fv[None, :, :]
        n = len(points)
        idx = np.arange(n)
        pair[idx, idx] = c[None, :] - fv
        return np.asarray(self.g(pair.reshape(n * n, -1)), dtype=float).reshape(n, n)


# -- the shipped family ------------------------------------------------------

def constant(value: float = 1.0) -> CylinderObservable:
    return CylinderObservable((), lambda c: np.full(len(c), float(value)), f"const({value:g})", abs(value))


def linear(window: Window) -> CylinderObservable:
    """Window count ``<f, gamma>``."""
    return CylinderObservable((window,), lambda c: c[:, 0], f"count[{window.shape}]")


def product(w1: Window, w2: Window) -> CylinderObservable:
    return CylinderObservable((w1, w2), lambda c: c[:, 0] * c[:, 1], "count*count")


def squared(window: Window) -> CylinderObservable:
    return CylinderObservable((window,), lambda c: c[:, 0] ** 2, "count^2")


def smoothed(window: Window, scale: float = 2.0) -> CylinderObservable:
    """``tanh(<f, gamma> / scale)``, bounded by 1."""
    return CylinderObservable((window,), lambda c: np.tanh(c[:, 0] / scale), f"tanh(count/{scale:g})", 1.0)


def sigmoid_product(w1: Window, w2: Window, scale: float = 1.5) -> CylinderObservable:
    """``tanh(c1/scale) * (1 + c2) / (2 + c2)``, a bounded nonlinear mix of two windows."""
    def g(c):
        return np.tanh(c[:, 0] / scale) * (1.0 + c[:, 1]) / (2.0 + c[:, 1])
    return CylinderObservable((w1, w2), g, "tanh*saturated", 1.0)


def battery(box: Box) -> list[CylinderObservable]:
    """Five fixture observables spanning linear and nonlinear cylinder functions."""
    L = np.asarray(box.sides)
    d = box.dim
    w_left = Window(tuple([0.0] * d), tuple(L * np.r_[0.5, [1.0] * (d - 1)]))
    w_mid = Window(tuple(L * 0.25), tuple(L * 0.75))
    w_corner = Window(tuple(L * 0.5), tuple(L * 1.0))
    w_bump = Window(tuple(L * 0.1), tuple(L * 0.9), "bump")
    return [
        linear(w_left),
        product(w_left, w_mid),
        smoothed(w_mid, 2.0),
        linear(w_bump),
        sigmoid_product(w_corner, w_left),
    ]


# -- gradients ---------------------------------------------------------------

def _locate(points: np.ndarray, x) -> int:
    hits = np.flatnonzero(np.all(points == np.asarray(x, dtype=float), axis=1)) if len(points) else []
    return int(hits[0]) if len(hits) else -1


def d_minus(F: Observable, gamma, x) -> float:
    """``F(gamma - x) - F(gamma)``; ``x`` must belong to ``gamma``."""
    pts = _points(gamma)
    i = _locate(pts, x)
    if i < 0:
        raise DomainError(f"{np.asarray(x)} is not a point of the configuration")
    return F.values(np.delete(pts, i, axis=0)) - F.values(pts)


def d_plus(F: Observable, gamma, x) -> float:
    """``F(gamma) - F(gamma + x)``; ``x`` must not belong to ``gamma``."""
    pts = _points(gamma)
    x = np.asarray(x, dtype=float)
    if _locate(pts, x) >= 0:
        raise DomainError(f"{x} is already a point of the configuration")
    return F.values(pts) - F.values(np.vstack([pts.reshape(-1, len(x)), x[None, :]]))


def second_gradient(F: Observable, gamma, x, y) -> float:
    """``D-_x D-_y F(gamma)``; on the diagonal this is ``-D-_x F(gamma)``."""
    pts = _points(gamma)
    i, j = _locate(pts, x), _locate(pts, y)
    if i < 0 or j < 0:
        raise DomainError("both points must belong to the configuration")
    if i == j:
        return -d_minus(F, pts, x)
    # grouped as (a + d) - (b + c) so that swapping x and y gives the same rounding
    return ((F.values(np.delete(pts, [i, j], axis=0)) + F.values(pts))
            - (F.values(np.delete(pts, i, axis=0)) + F.values(np.delete(pts, j, axis=0))))


# -- the generator -----------------------------------------------------------

def apply_generator(F: Observable, gamma, params: ModelParams,
                    quad: QuadratureSpec = QuadratureSpec()) -> tuple[float, float]:
    """``HF(gamma)`` and the quadrature error estimate of its birth term."""
    pts = _points(gamma)
    f0 = F.values(pts)
    death = float(np.sum(F.removed(pts) - f0)) if len(pts) else 0.0
    pc = F.piecewise_constant and params.potential.piecewise_constant
    birth, err = birth_integral(lambda X: f0 - F.added(pts, X), pts, params, F.support,
                                F.edges(params.box.dim), quad, pc)
    return float(birth) - death, float(err)


class SampleTerms:
    """Per-sample quantities for a list of observables, computed with one birth rule per sample.

    Attributes (n = samples, k = observables):
        F (n, k), HF (n, k) (None unless ``need_hf``), quad_err (n,),
        dir_a (n, k, k): sum over points of D-F_i D-F_j,
        dir_b (n, k, k): birth integral of D+F_i D+F_j,
        trace (n, k), cross (n, k): the two terms of the coercivity identity.
    """

    def __init__(self, observables: Sequence[Observable], samples, params: ModelParams,
                 quad: QuadratureSpec = QuadratureSpec(), need_b: bool = True,
                 need_coercivity: bool = True, need_hf: bool = True):
        self.observables = list(observables)
        self.samples = SampleSet(samples)
        self.params = params
        k = len(self.observables)
        n = len(self.samples)
        d = params.box.dim
        self.F = np.zeros((n, k))
        self.HF = np.zeros((n, k)) if need_hf else None
        need_b = need_b and need_hf
        self.quad_err = np.zeros(n)
        self.dir_a = np.zeros((n, k, k))
        self.dir_b = np.zeros((n, k, k)) if need_b else None
        self.trace = np.zeros((n, k)) if need_coercivity else None
        self.cross = np.zeros((n, k)) if need_coercivity else None
        edges = [sorted({e for F in self.observables for e in F.edges(d)[a]}) for a in range(d)]
        region = _union_support(self.observables, params.box)
        pc = params.potential.piecewise_constant and all(F.piecewise_constant for F in self.observables)
        bank = _WindowBank(self.observables)
        iu = np.triu_indices(k)
        for s, gamma in enumerate(self.samples):
            pts = gamma.points
            f0 = np.array([F.values(pts) for F in self.observables])
            self.F[s] = f0
            if len(pts):
                dm = np.stack([F.removed(pts) - f0[j] for j, F in enumerate(self.observables)], axis=1)
            else:
                dm = np.zeros((0, k))
            self.dir_a[s] = dm.T @ dm
            if need_coercivity:
                self.trace[s], self.cross[s] = _coercivity_sample(self.observables, pts, f0, dm, params)
            if not need_hf:
                continue
            counts = bank.counts(pts)

            def integrand(X, pts=pts, f0=f0, counts=counts):
                dp = f0[None, :] - bank.added(pts, X, counts)
                if not need_b:
                    return dp
                return np.concatenate([dp, dp[:, iu[0]] * dp[:, iu[1]]], axis=1)

            val, err = birth_integral(integrand, pts, params, region, edges, quad, pc)
            val = np.atleast_1d(val)
            self.quad_err[s] = float(np.max(err)) if np.size(err) else 0.0
            self.HF[s] = val[:k] - dm.sum(axis=0)
            if need_b:
                B = np.zeros((k, k))
                B[iu] = val[k:]
                B = B + np.triu(B, 1).T
                self.dir_b[s] = B

    @property
    def chain(self):
        return self.samples.chain


class _WindowBank:
    """Evaluates every distinct window of a set of observables once per node set."""

    def __init__(self, observables):
        self.observables = observables
        self.windows: list[Window] = []
        self.columns: list[list[int] | None] = []
        self._cache: dict = {}
        for F in observables:
            if isinstance(F, CylinderObservable):
                cols = []
                for w in F.windows:
                    if w not in self.windows:
                        self.windows.append(w)
                    cols.append(self.windows.index(w))
                self.columns.append(cols)
            else:
                self.columns.append(None)

    def values(self, X) -> np.ndarray:
        if not self.windows:
            return np.zeros((len(X), 0))
        return np.stack([w(X) for w in self.windows], axis=1)

    def node_values(self, X) -> np.ndarray:
        # read-only node arrays come from the shared rule cache and recur across samples
        if X.flags.writeable:
            return self.values(X)
        hit = self._cache.get(id(X))
        if hit is None or hit[0] is not X:
            hit = (X, self.values(X))
            if len(self._cache) > 16:
                self._cache.clear()
            self._cache[id(X)] = hit
        return hit[1]

    def counts(self, pts) -> np.ndarray:
        return self.values(pts).sum(axis=0)

    def added(self, pts, X, counts) -> np.ndarray:
        """(N, k) array of ``F_j(gamma + x)``."""
        wv = self.node_values(X)
        out = np.empty((len(X), len(self.observables)))
        for j, (F, cols) in enumerate(zip(self.observables, self.columns)):
            if cols is None:
                out[:, j] = F.added(pts, X)
            else:
                out[:, j] = F.g(counts[cols][None, :] + wv[:, cols])
        return out


def _union_support(observables, box: Box):
    lo = np.zeros(box.dim)
    hi = np.asarray(box.sides, dtype=float)
    supports = [F.support for F in observables]
    if any(s is None for s in supports) or not supports:
        return (lo, hi)
    return (np.min([s[0] for s in supports], axis=0), np.max([s[1] for s in supports], axis=0))


def _coercivity_sample(observables, pts, f0, dm, params: ModelParams):
    k = len(observables)
    n = len(pts)
    trace = np.zeros(k)
    cross = np.zeros(k)
    if n == 0:
        return trace, cross
    disp = params.box.displacement(pts[:, None, :], pts[None, :, :])
    phi = params.potential.evaluate(disp)
    weight = np.expm1(phi)
    off = ~np.eye(n, dtype=bool)
    for j, F in enumerate(observables):
        rp = F.removed_pairs(pts)           # F(g - {x, y}); diagonal F(g - x)
        r1 = np.diag(rp)                    # F(g - x)
        second = rp - r1[:, None] - r1[None, :] + f0[j]
        trace[j] = float(np.sum(second[off] ** 2) + np.sum(dm[:, j] ** 2))
        a = rp - r1[:, None]                # F(g - {x,y}) - F(g - x)
        b = rp - r1[None, :]                # F(g - {x,y}) - F(g - y)
        prod = a * b
        w = np.where(prod == 0.0, 0.0, weight)
        cross[j] = float(np.sum((w * prod)[off]))
    return trace, cross


# -- Monte Carlo forms -------------------------------------------------------

@dataclass(frozen=True)
class DirichletEstimate:
    pointwise: Estimate      # sum over points of D-F D-G
    birth_side: Estimate     # birth integral of D+F D+G
    difference: Estimate     # pointwise - birth_side


def dirichlet_form_mc(F: Observable, G: Observable, samples, params: ModelParams,
                      quad: QuadratureSpec = QuadratureSpec()) -> DirichletEstimate:
    """Both Monte Carlo representations of ``E(F, G)`` and their paired difference."""
    ss = SampleSet(samples)
    terms = SampleTerms([F, G], ss, params, quad, need_b=True, need_coercivity=False)
    a = terms.dir_a[:, 0, 1]
    b = terms.dir_b[:, 0, 1]
    return DirichletEstimate(batch_mean(a, ss.chain), batch_mean(b, ss.chain), batch_mean(a - b, ss.chain))


@dataclass(frozen=True)
class CoercivityEstimate:
    lhs: Estimate
    trace: Estimate
    cross: Estimate
    defect: Estimate         # lhs - trace - cross, paired per sample


def coercivity_terms(F: Observable, samples, params: ModelParams,
                     quad: QuadratureSpec = QuadratureSpec()) -> CoercivityEstimate:
    """Monte Carlo terms of ``int (HF)^2 = int [trace + cross]``."""
    if not params.potential.positive:
        raise ModelError("the coercivity terms need a nonnegative potential")
    ss = SampleSet(samples)
    terms = SampleTerms([F], ss, params, quad, need_b=False, need_coercivity=True)
    return coercivity_from_terms(terms, 0)


def coercivity_from_terms(terms: SampleTerms, j: int) -> CoercivityEstimate:
    lhs = terms.HF[:, j] ** 2
    tr, cr = terms.trace[:, j], terms.cross[:, j]
    ch = terms.chain
    return CoercivityEstimate(batch_mean(lhs, ch), batch_mean(tr, ch), batch_mean(cr, ch),
                              batch_mean(lhs - tr - cr, ch))


def symmetry_defect(F: Observable, G: Observable, samples, params: ModelParams,
                    quad: QuadratureSpec = QuadratureSpec()) -> Estimate:
    """Monte Carlo estimate of ``int HF G dmu - E(F, G)`` (pointwise representation)."""
    ss = SampleSet(samples)
    terms = SampleTerms([F, G], ss, params, quad, need_b=False, need_coercivity=False)
    return symmetry_from_terms(terms, 0, 1)


def symmetry_from_terms(terms: SampleTerms, i: int, j: int) -> Estimate:
    vals = terms.HF[:, i] * terms.F[:, j] - terms.dir_a[:, i, j]
    return batch_mean(vals, terms.chain)


def gap_inequality_from_terms(terms: SampleTerms, j: int, delta: float) -> Estimate:
    """Paired estimate of ``||HF||^2 - (1 - delta) (HF, F)``; nonnegative under the gap bound."""
    hf, f = terms.HF[:, j], terms.F[:, j]
    return batch_mean(hf**2 - (1.0 - delta) * hf * f, terms.chain)


def generator_mean(terms: SampleTerms) -> tuple[np.ndarray, np.ndarray]:
    """Batch-means average of ``HF`` per observable; zero in equilibrium."""
    return batch_mean_columns(terms.HF, terms.chain)
