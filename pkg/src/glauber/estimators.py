"""Statistical checks of the Gibbs structure and of the dynamics.

Every error bar is a batch-means standard error over the chains that
produced the samples (see ``stats.batch_mean``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

from . import kernels
from .calculus import CylinderObservable, Observable, SampleTerms, Window, _WindowBank
from .dynamics import ChainState
from .errors import EstimationError, ModelError, ParameterError
from .geometry import ModelParams
from .potentials import ball_volume
from .quadrature import QuadratureSpec, birth_integral
from .stats import Estimate, SampleSet, batch_mean, batch_mean_columns

MIN_CORRELATION_SAMPLES = 100


# -- correlation functions ---------------------------------------------------

@dataclass
class CorrelationEstimate:
    """Binned one-point density ``k1`` and radial two-point function ``k2``."""

    k1_edges: list[np.ndarray]
    k1: np.ndarray
    k1_se: np.ndarray
    r_edges: np.ndarray
    k2: np.ndarray
    k2_se: np.ndarray
    n_samples: int
    pair_counts: np.ndarray = field(default=None)

    @property
    def r_mid(self) -> np.ndarray:
        return (self.r_edges[:-1] + self.r_edges[1:]) / 2

    def total(self) -> float:
        """Integral of ``k1`` over the box: the mean particle number."""
        vol = np.prod(np.meshgrid(*[np.diff(e) for e in self.k1_edges], indexing="ij"), axis=0)
        return float(np.sum(self.k1 * vol))

    def write_csv(self, k1_path, k2_path) -> None:
        import csv
        d = len(self.k1_edges)
        with open(k1_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"lo{k}" for k in range(d)] + [f"hi{k}" for k in range(d)] + ["k1", "stderr"])
            for idx in np.ndindex(self.k1.shape):
                lo = [self.k1_edges[k][i] for k, i in enumerate(idx)]
                hi = [self.k1_edges[k][i + 1] for k, i in enumerate(idx)]
                w.writerow([repr(float(v)) for v in lo + hi] + [repr(float(self.k1[idx])), repr(float(self.k1_se[idx]))])
        with open(k2_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r_lo", "r_hi", "k2", "stderr", "pairs"])
            for i in range(len(self.k2)):
                w.writerow([repr(float(self.r_edges[i])), repr(float(self.r_edges[i + 1])),
                            repr(float(self.k2[i])), repr(float(self.k2_se[i])), int(self.pair_counts[i])])


def estimate_correlations(samples, params: ModelParams, k1_bins: int | Sequence[int] = 4,
                          r_bins: int | Sequence[float] = 20, r_max: float | None = None,
                          min_batches: int = 32) -> CorrelationEstimate:
    """Estimate ``k1`` on a regular grid and ``k2(r)`` on distance shells.

    ``k2`` counts distinct ordered pairs per shell.  With periodic boundaries
    each pair has weight ``1/|box|``; with empty boundaries it gets the
    translation weight ``1/prod(L_k - |dx_k|)``.  Shell counts are divided by
    the shell volume.  ``r_max`` defaults to half the shortest side.
    """
    if isinstance(samples, (list, tuple)) and len(samples) == 0:
        raise ParameterError("no samples")
    ss = SampleSet(samples)
    if len(ss) < MIN_CORRELATION_SAMPLES:
        raise ParameterError(f"correlation estimates need at least {MIN_CORRELATION_SAMPLES} samples, got {len(ss)}")
    box = params.box
    d = box.dim
    L = box.side_array
    nb = np.broadcast_to(np.asarray(k1_bins, dtype=int), (d,))
    k1_edges = [np.linspace(0.0, L[k], nb[k] + 1) for k in range(d)]
    if r_max is None:
        r_max = float(L.min()) / 2
    r_edges = (np.linspace(0.0, r_max, int(r_bins) + 1) if np.ndim(r_bins) == 0
               else np.asarray(r_bins, dtype=float))
    nr = len(r_edges) - 1
    cell_vol = float(np.prod([e[1] - e[0] for e in k1_edges]))
    shell = ball_volume(d, r_edges[1:]) - ball_volume(d, r_edges[:-1])

    n = len(ss)
    counts = np.zeros((n, int(np.prod(nb))))
    pairs = np.zeros((n, nr))
    raw_pairs = np.zeros(nr, dtype=np.int64)
    for s, gamma in enumerate(ss):
        pts = gamma.points
        m = len(pts)
        if m == 0:
            continue
        cell = np.minimum((pts / (L / nb)).astype(int), nb - 1)
        counts[s] = np.bincount(np.ravel_multi_index(cell.T, tuple(nb)), minlength=counts.shape[1])
        if m < 2:
            continue
        i, j = np.triu_indices(m, 1)
        disp = box.displacement(pts[i], pts[j])
        r = np.sqrt(np.sum(disp * disp, axis=1))
        if box.periodic:
            w = np.full(len(r), 1.0 / box.volume)
        else:
            w = 1.0 / np.prod(L - np.abs(disp), axis=1)
        b = np.searchsorted(r_edges, r, side="right") - 1
        ok = (b >= 0) & (b < nr) & (r < r_edges[-1])
        # each unordered pair stands for two ordered pairs
        pairs[s] = 2.0 * np.bincount(b[ok], weights=w[ok], minlength=nr)
        raw_pairs += 2 * np.bincount(b[ok], minlength=nr)
    k1, k1_se = batch_mean_columns(counts / cell_vol, ss.chain, min_batches)
    k2, k2_se = batch_mean_columns(pairs / shell, ss.chain, min_batches)
    return CorrelationEstimate(k1_edges, k1.reshape(tuple(nb)), k1_se.reshape(tuple(nb)),
                               r_edges, k2, k2_se, n, raw_pairs)


@dataclass(frozen=True)
class RuelleReport:
    k1_pass: bool
    k2_pass: bool
    k1_max_excess: float      # max over bins of (k1 - z) / stderr
    k2_max_excess: float

    @property
    def passed(self) -> bool:
        return self.k1_pass and self.k2_pass


def _excess(values, se, bound, k):
    v, se = np.ravel(values), np.ravel(se)
    ok = v <= bound + k * np.nan_to_num(se)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (v - bound) / se, np.where(v > bound, np.inf, -np.inf))
    return bool(np.all(ok)), float(np.max(z)) if len(z) else -math.inf


def ruelle_check(est: CorrelationEstimate, params: ModelParams, k: float = 3.0) -> RuelleReport:
    """``k1 <= z`` and ``k2 <= z^2`` per bin, up to ``k`` standard errors."""
    if not params.potential.positive:
        raise ModelError("the Ruelle bound check assumes a nonnegative potential")
    p1, e1 = _excess(est.k1, est.k1_se, params.z, k)
    p2, e2 = _excess(est.k2, est.k2_se, params.z**2, k)
    return RuelleReport(p1, p2, e1, e2)


# -- GNZ identity ------------------------------------------------------------

class PointTest:
    """Test function ``F(gamma, x) = f_W(x) * h(<f_V, gamma>)`` for the GNZ identity.

    ``W`` is the declared window; with ``count_window=None`` the test is
    just ``f_W(x)``.  ``h`` defaults to the identity on the count.
    """

    def __init__(self, window: Window, count_window: Window | None = None,
                 h: Callable[[np.ndarray], np.ndarray] | None = None, name: str | None = None):
        self.window = window
        self.count_window = count_window
        self.h = (lambda c: c) if h is None else h
        self.name = name or ("1_W(x)" if count_window is None else "1_W(x)*count")

    @property
    def piecewise_constant(self) -> bool:
        ws = [self.window] + ([self.count_window] if self.count_window is not None else [])
        return all(w.shape == "indicator" for w in ws)

    def edges(self, d):
        ws = [self.window] + ([self.count_window] if self.count_window is not None else [])
        return [sorted({v for w in ws for v in (w.lo[k], w.hi[k])}) for k in range(d)]

    def lhs(self, points: np.ndarray) -> float:
        """``sum_{x in gamma} F(gamma, x)``."""
        if len(points) == 0:
            return 0.0
        fw = self.window(points)
        if self.count_window is None:
            return float(fw.sum())
        c = self.count_window(points).sum()
        return float(np.sum(fw) * self.h(np.asarray([c]))[0])

    def added(self, points: np.ndarray, X: np.ndarray) -> np.ndarray:
        """``F(gamma + x, x)`` at every row of ``X``."""
        fw = self.window(X)
        if self.count_window is None:
            return fw
        c = self.count_window(points).sum() if len(points) else 0.0
        return fw * self.h(c + self.count_window(X))


@dataclass(frozen=True)
class GNZDefect:
    lhs: Estimate
    rhs: Estimate
    defect: Estimate

    @property
    def normalized(self) -> float:
        return self.defect.zscore(0.0)


def gnz_defect(test: PointTest, samples, params: ModelParams,
               quad: QuadratureSpec = QuadratureSpec()) -> GNZDefect:
    """Paired Monte Carlo estimate of ``E sum_x F(g, x) - E int z e^{-E(x,g)} F(g + x, x) dx``."""
    ss = SampleSet(samples)
    d = params.box.dim
    region = (np.asarray(test.window.lo), np.asarray(test.window.hi))
    edges = test.edges(d)
    pc = params.potential.piecewise_constant and test.piecewise_constant
    lhs = np.empty(len(ss))
    rhs = np.empty(len(ss))
    for s, gamma in enumerate(ss):
        pts = gamma.points
        lhs[s] = test.lhs(pts)
        val, _ = birth_integral(lambda X, pts=pts: test.added(pts, X), pts, params, region, edges, quad, pc)
        rhs[s] = float(val)
    ch = ss.chain
    return GNZDefect(batch_mean(lhs, ch), batch_mean(rhs, ch), batch_mean(lhs - rhs, ch))


def gnz_battery(box) -> list[PointTest]:
    """Two fixture tests: a window indicator and indicator times window count."""
    L = np.asarray(box.sides)
    d = box.dim
    w = Window(tuple(L * 0.2), tuple(L * 0.7))
    v = Window(tuple([0.0] * d), tuple(L * np.r_[0.6, [1.0] * (d - 1)]))
    return [PointTest(w), PointTest(w, v)]


# -- Poincare inequality -----------------------------------------------------

@dataclass(frozen=True)
class PoincareReport:
    variance: Estimate
    dirichlet: Estimate
    margin: Estimate          # dirichlet - (1 - delta) variance, paired per sample
    bound: float              # 1 - delta
    passed: bool

    @property
    def ratio(self) -> float:
        return self.dirichlet.estimate / self.variance.estimate if self.variance.estimate > 0 else math.inf


def _require_gap_regime(params: ModelParams) -> float:
    if not params.potential.positive:
        raise ModelError("the gap bound needs a nonnegative potential")
    delta = params.delta
    if delta >= 1.0:
        raise ModelError(f"delta = {delta:.6g} >= 1: the Poincare bound is vacuous")
    return delta


def poincare_from_terms(terms: SampleTerms, j: int, params: ModelParams, k: float = 3.0) -> PoincareReport:
    delta = _require_gap_regime(params)
    f = terms.F[:, j]
    dev2 = (f - f.mean()) ** 2 * (len(f) / max(len(f) - 1, 1))
    dirichlet = terms.dir_a[:, j, j]
    ch = terms.chain
    var = batch_mean(dev2, ch)
    dir_ = batch_mean(dirichlet, ch)
    margin = batch_mean(dirichlet - (1.0 - delta) * dev2, ch)
    se = 0.0 if math.isnan(margin.stderr) else margin.stderr
    return PoincareReport(var, dir_, margin, 1.0 - delta, margin.estimate >= -k * se)


def poincare_check(F: Observable, samples, params: ModelParams, k: float = 3.0) -> PoincareReport:
    """Checks ``E(F, F) >= (1 - delta) Var(F)`` up to ``k`` standard errors of the paired margin."""
    _require_gap_regime(params)
    terms = SampleTerms([F], samples, params, need_b=False, need_coercivity=False, need_hf=False)
    return poincare_from_terms(terms, 0, params, k)


# -- time correlations -------------------------------------------------------

@dataclass(frozen=True)
class AutocorrConfig:
    chains: int = 8
    burn_in: float = 20.0
    horizon: float = 2000.0       # stationary run length per chain
    dt: float = 0.05              # sampling grid
    max_lag: float = 6.0
    fit_hi: float = 0.8           # fit where the normalized autocovariance falls from fit_hi ...
    fit_lo: float = 0.2           # ... to fit_lo
    seed: int = 0
    initial: str = "empty"
    level: float = 0.95           # confidence level of the reported interval


@dataclass
class AutocorrEstimate:
    lags: np.ndarray
    values: np.ndarray            # pooled C(t) / C(0)
    stderr: np.ndarray            # spread of per-chain curves
    rate: float                   # fitted decay rate
    ci: float                     # half-width of the confidence interval
    chain_rates: np.ndarray
    fit_range: tuple[float, float]

    def monotone(self, k: float = 3.0) -> bool:
        """No increase between consecutive lags beyond ``k`` standard errors."""
        inc = np.diff(self.values)
        se = np.sqrt(self.stderr[1:] ** 2 + self.stderr[:-1] ** 2)
        return bool(np.all(inc <= k * se + 1e-12))

    def write_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lag", "acf", "stderr"])
            for t, v, s in zip(self.lags, self.values, self.stderr):
                w.writerow([repr(float(t)), repr(float(v)), repr(float(s))])


def observable_series(F: Observable, snapshots: Sequence[np.ndarray]) -> np.ndarray:
    """``F`` evaluated on a list of point arrays (vectorized for cylinder observables)."""
    if isinstance(F, CylinderObservable) and F.windows:
        sizes = np.fromiter((len(p) for p in snapshots), dtype=np.int64, count=len(snapshots))
        d = len(F.windows[0].lo)
        allpts = np.concatenate([np.asarray(p).reshape(-1, d) for p in snapshots]) if len(snapshots) else np.zeros((0, d))
        owner = np.repeat(np.arange(len(snapshots)), sizes)
        wv = F.window_values(allpts)
        c = np.stack([np.bincount(owner, weights=wv[:, k], minlength=len(snapshots))
                      for k in range(wv.shape[1])], axis=1)
        return np.asarray(F.g(c), dtype=float)
    return np.array([F.values(np.asarray(p)) for p in snapshots])


def _autocov(x: np.ndarray, nlag: int) -> np.ndarray:
    """Overlapping-window autocovariance at lags ``0..nlag-1`` (mean removed)."""
    n = len(x)
    y = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, size)
    ac = np.fft.irfft(f * np.conj(f), size)[:nlag]
    return ac / (n - np.arange(nlag))


def _fit_rate(lags, acf, lo_t, hi_t):
    sel = (lags >= lo_t) & (lags <= hi_t) & (acf > 0)
    if sel.sum() < 2:
        return math.nan
    slope = np.polyfit(lags[sel], np.log(acf[sel]), 1)[0]
    return -slope


def chain_series(observables: Sequence[Observable], params: ModelParams, cfg: AutocorrConfig,
                 chain: int, backend: str | None = None) -> np.ndarray:
    """(n_grid, k) values of each observable on the grid of one stationary run."""
    state = ChainState.start(params, cfg.seed, chain, cfg.initial)
    grid = cfg.burn_in + cfg.dt * np.arange(int(round(cfg.horizon / cfg.dt)) + 1)
    _, _, _, snaps = kernels.simulate(state.config, params, 0.0, 2**62, float(grid[-1]), grid,
                                      state.rng, False, backend=backend)
    return np.stack([observable_series(F, snaps) for F in observables], axis=1)


def autocorrelation_from_series(series: Sequence[np.ndarray], cfg: AutocorrConfig) -> AutocorrEstimate:
    """Pooled normalized autocovariance and fitted decay rate from per-chain series."""
    nlag = int(round(cfg.max_lag / cfg.dt)) + 1
    lags = cfg.dt * np.arange(nlag)
    covs = []
    for x in series:
        x = np.asarray(x, dtype=float)
        if len(x) < 2 * nlag:
            raise ParameterError("run horizon too short for the requested lag range")
        covs.append(_autocov(x, nlag))
    covs = np.asarray(covs)
    c0 = covs[:, 0].mean()
    if not c0 > 1e-14 * max(1.0, float(np.mean([np.mean(np.abs(np.asarray(x))) for x in series])) ** 2):
        raise EstimationError("observable has zero variance along the trajectory")
    acf = covs.mean(axis=0) / c0
    per_chain = covs / np.where(covs[:, :1] > 0, covs[:, :1], np.nan)
    m = len(series)
    se = (np.nanstd(per_chain, axis=0, ddof=1) / math.sqrt(m)) if m > 1 else np.zeros(nlag)
    below_hi = np.flatnonzero(acf <= cfg.fit_hi)
    below_lo = np.flatnonzero(acf <= cfg.fit_lo)
    if len(below_lo) == 0 or len(below_hi) == 0:
        raise EstimationError(f"normalized autocovariance does not decay to {cfg.fit_lo} within lag {cfg.max_lag}")
    t1 = lags[max(below_hi[0] - 1, 0)]
    t2 = lags[below_lo[0]]
    rate = _fit_rate(lags, acf, t1, t2)
    rates = np.array([_fit_rate(lags, pc, t1, t2) for pc in per_chain])
    if not rate > 0:
        raise EstimationError(f"fitted decay rate {rate:.4g} is not positive")
    good = rates[np.isfinite(rates)]
    if len(good) > 1:
        ci = float(sps.t.ppf(0.5 + cfg.level / 2, len(good) - 1) * good.std(ddof=1) / math.sqrt(len(good)))
    else:
        ci = math.inf
    return AutocorrEstimate(lags, acf, se, float(rate), ci, rates, (float(t1), float(t2)))


def autocorrelation(observable: Observable, params: ModelParams, cfg: AutocorrConfig = AutocorrConfig(),
                    backend: str | None = None) -> AutocorrEstimate:
    """Decay rate of ``Cov(F(X_s), F(X_{s+t}))`` over independent stationary chains."""
    if cfg.chains < 1:
        raise ParameterError("need at least one chain")
    series = [chain_series([observable], params, cfg, c, backend)[:, 0] for c in range(cfg.chains)]
    return autocorrelation_from_series(series, cfg)


def autocorrelation_battery(observables: Sequence[Observable], params: ModelParams,
                            cfg: AutocorrConfig = AutocorrConfig()) -> list[AutocorrEstimate]:
    """One estimate per observable, all read off the same chains."""
    per_chain = [chain_series(observables, params, cfg, c) for c in range(cfg.chains)]
    return [autocorrelation_from_series([s[:, j] for s in per_chain], cfg) for j in range(len(observables))]


@dataclass(frozen=True)
class GapReport:
    rates: tuple[float, ...]
    cis: tuple[float, ...]
    min_rate: float
    min_ci: float
    bound: float
    passed: bool


def gap_check(estimates: Sequence[AutocorrEstimate], params: ModelParams) -> GapReport:
    """Slowest fitted decay over the battery against ``1 - delta`` (passes when ``min rate >= bound - CI``)."""
    delta = _require_gap_regime(params)
    rates = [e.rate for e in estimates]
    j = int(np.argmin(rates))
    bound = 1.0 - delta
    return GapReport(tuple(rates), tuple(e.ci for e in estimates), rates[j], estimates[j].ci,
                     bound, rates[j] >= bound - estimates[j].ci)
