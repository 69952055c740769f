"""Exact finite-state surrogate of the dynamics on a cell lattice.

States are occupancy patterns of ``m`` cells (at most one point per cell,
at most ``K`` points in total), stored as integer bit masks.  A birth into
an empty cell ``i`` happens at rate ``z a exp(-E(c_i, state))`` with ``c_i``
the cell center and ``a`` the cell volume; each occupied cell empties at
rate 1.  The simulator in lattice mode realizes exactly this chain.

The rate matrix is stored sparse so that stationary laws can be solved for
up to ``MAX_STATES`` states; eigen-decompositions are dense and limited to
``MAX_DENSE_STATES``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as splinalg

from .errors import CapacityError, ModelError, NumericalError, ParameterError
from .geometry import Box, Lattice, ModelParams

MAX_STATES = 200_000
MAX_DENSE_STATES = 5_000
MAX_CELLS = 62


@dataclass(frozen=True)
class DiscreteModel:
    params: ModelParams

    def __post_init__(self):
        if self.params.lattice is None:
            raise ModelError("the discrete model needs lattice parameters (cell shape and cap)")
        if self.m > MAX_CELLS:
            raise CapacityError(f"{self.m} cells exceed the bit-mask limit of {MAX_CELLS}")

    @classmethod
    def build(cls, z: float, potential, box: Box, shape: Sequence[int], cap: int) -> "DiscreteModel":
        return cls(ModelParams(z, potential, box, Lattice(tuple(shape), cap)))

    @property
    def m(self) -> int:
        return self.params.lattice.size

    @property
    def cap(self) -> int:
        return min(self.params.lattice.cap, self.m)

    @property
    def a(self) -> float:
        return self.params.lattice.cell_volume(self.params.box)

    @property
    def z(self) -> float:
        return self.params.z

    @property
    def centers(self) -> np.ndarray:
        return self.params.lattice.centers(self.params.box)

    def state_count(self) -> int:
        return sum(math.comb(self.m, k) for k in range(self.cap + 1))

    def pair_matrix(self) -> np.ndarray:
        """``phi(c_i - c_j)`` for all cells (diagonal unused)."""
        c = self.centers
        disp = self.params.box.displacement(c[:, None, :], c[None, :, :])
        return self.params.potential.evaluate(disp)

    def configuration(self, mask: int) -> np.ndarray:
        """Cell centers of the occupied cells of ``mask``."""
        return self.centers[cells_of(mask, self.m)]

    def mask_of(self, points) -> int:
        pts = np.asarray(points, dtype=float).reshape(-1, self.params.box.dim)
        if len(pts) == 0:
            return 0
        idx = self.params.lattice.index(pts, self.params.box)
        if len(np.unique(idx)) != len(idx):
            raise ModelError("two points share a cell")
        return int(sum(1 << int(i) for i in idx))


def cells_of(mask: int, m: int) -> np.ndarray:
    return np.array([i for i in range(m) if mask >> i & 1], dtype=int)


def enumerate_states(model: DiscreteModel) -> np.ndarray:
    """All admissible masks in increasing order."""
    n = model.state_count()
    if n > MAX_STATES:
        raise CapacityError(f"{n} states exceed the oracle capacity of {MAX_STATES}")
    masks = [0]
    for k in range(1, model.cap + 1):
        for combo in itertools.combinations(range(model.m), k):
            masks.append(sum(1 << i for i in combo))
    return np.sort(np.asarray(masks, dtype=np.int64))


def _occupancy(masks: np.ndarray, m: int) -> np.ndarray:
    return ((masks[:, None] >> np.arange(m, dtype=np.int64)[None, :]) & 1).astype(bool)


@dataclass
class RateMatrix:
    """Generator ``Q`` of the discrete chain (rows sum to zero)."""

    Q: sparse.csr_matrix
    states: np.ndarray
    model: DiscreteModel

    @property
    def size(self) -> int:
        return len(self.states)

    def dense(self) -> np.ndarray:
        if self.size > MAX_DENSE_STATES:
            raise CapacityError(f"{self.size} states are too many for a dense matrix (limit {MAX_DENSE_STATES})")
        return self.Q.toarray()

    def index(self, mask: int) -> int:
        i = int(np.searchsorted(self.states, mask))
        if i >= self.size or self.states[i] != mask:
            raise ModelError(f"mask {mask} is not an admissible state")
        return i


def build_rate_matrix(model: DiscreteModel) -> RateMatrix:
    states = enumerate_states(model)
    m, n = model.m, len(states)
    occ = _occupancy(states, m)
    phi = model.pair_matrix()
    hard = np.isinf(phi)
    np.fill_diagonal(hard, False)
    soft = np.where(hard, 0.0, phi)
    np.fill_diagonal(soft, 0.0)
    occf = occ.astype(float)
    energy = occf @ soft
    blocked = (occf @ hard.astype(float)) > 0
    rate = model.z * model.a * np.exp(-energy)
    rate[blocked] = 0.0
    size = occ.sum(axis=1)
    can_birth = ~occ & (size < model.cap)[:, None]
    rows, cols, vals = [], [], []
    # births
    si, ci = np.nonzero(can_birth & (rate > 0))
    targets = states[si] | (np.int64(1) << ci.astype(np.int64))
    rows.append(si)
    cols.append(np.searchsorted(states, targets))
    vals.append(rate[si, ci])
    # deaths
    si, ci = np.nonzero(occ)
    targets = states[si] & ~(np.int64(1) << ci.astype(np.int64))
    rows.append(si)
    cols.append(np.searchsorted(states, targets))
    vals.append(np.ones(len(si)))
    r, c, v = (np.concatenate(x) for x in (rows, cols, vals))
    off = sparse.csr_matrix((v, (r, c)), shape=(n, n))
    out = np.asarray(off.sum(axis=1)).ravel()
    Q = (off - sparse.diags(out)).tocsr()
    return RateMatrix(Q, states, model)


def reachable_from_empty(rm: RateMatrix) -> np.ndarray:
    """Boolean mask of the states reachable from the empty configuration."""
    graph = rm.Q.copy()
    graph.setdiag(0)
    graph.eliminate_zeros()
    order = csgraph.breadth_first_order(graph, 0, directed=True, return_predecessors=False)
    keep = np.zeros(rm.size, dtype=bool)
    keep[order] = True
    return keep


def stationary_distribution(rm: RateMatrix, tol: float = 1e-10) -> np.ndarray:
    """Solve ``pi Q = 0``, ``sum pi = 1`` on the class of the empty state (zero elsewhere)."""
    keep = reachable_from_empty(rm)
    idx = np.flatnonzero(keep)
    Qr = rm.Q[idx][:, idx]
    n = len(idx)
    A = Qr.T.tolil()
    A[n - 1, :] = np.ones(n)
    b = np.zeros(n)
    b[n - 1] = 1.0
    with np.errstate(all="ignore"):
        x = splinalg.spsolve(A.tocsc(), b) if n > 1 else np.ones(1)
    pi = np.zeros(rm.size)
    pi[idx] = x
    resid = float(np.max(np.abs(rm.Q.T @ pi))) if rm.size else 0.0
    if not np.all(np.isfinite(pi)) or resid >= tol or np.min(pi) < -tol:
        raise NumericalError(f"stationary solve failed: residual {resid:.3g}")
    return np.clip(pi, 0.0, None)


def gibbs_weights(model: DiscreteModel) -> dict[int, float]:
    """Normalized ``(z a)^{|s|} exp(-U(s))`` by direct enumeration of cell subsets."""
    phi = model.pair_matrix()
    za = model.z * model.a
    w = {}
    for k in range(model.cap + 1):
        for combo in itertools.combinations(range(model.m), k):
            u = 0.0
            for i, j in itertools.combinations(combo, 2):
                u += phi[i, j]
            w[sum(1 << i for i in combo)] = za**k * math.exp(-u)
    total = math.fsum(w.values())
    return {s: v / total for s, v in w.items()}


def detailed_balance_defect(rm: RateMatrix, pi: np.ndarray) -> float:
    D = sparse.diags(pi) @ rm.Q
    diff = (D - D.T).tocoo()
    return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0


def spectral_gap_eig(rm: RateMatrix, pi: np.ndarray, tol: float = 1e-10) -> float:
    """Smallest nonzero eigenvalue magnitude of ``Q`` restricted to the support of ``pi``."""
    defect = detailed_balance_defect(rm, pi)
    if defect >= tol:
        raise ModelError(f"rate matrix is not reversible: detailed-balance defect {defect:.3g}")
    idx = np.flatnonzero(pi > 0)
    if len(idx) > MAX_DENSE_STATES:
        raise CapacityError(f"{len(idx)} states are too many for a dense eigensolve (limit {MAX_DENSE_STATES})")
    if len(idx) < 2:
        raise ModelError("a single-state chain has no spectral gap")
    Q = rm.Q[idx][:, idx].toarray()
    # for a reversible chain pi^{1/2} Q pi^{-1/2} has off-diagonal entries sqrt(Q_ij Q_ji);
    # forming them directly avoids ratios of tiny stationary weights
    S = np.sqrt(Q * Q.T)
    np.fill_diagonal(S, np.diag(Q))
    ev = np.sort(-np.linalg.eigvalsh(S))
    return float(ev[1])


def delta_discrete(model: DiscreteModel) -> float:
    """``z a sum_i (1 - exp(-phi(c_i - c_ref)))``, maximized over the reference cell.

    The self term uses ``phi(0)``.  With periodic boundaries every reference
    cell gives the same value.
    """
    phi = model.pair_matrix()
    vals = model.z * model.a * np.sum(-np.expm1(-phi), axis=1)
    return float(np.max(vals))


def observable_vector(rm: RateMatrix, F: Callable[[np.ndarray], float]) -> np.ndarray:
    """``F`` evaluated on the cell-center configuration of every state."""
    return np.array([F(rm.model.configuration(int(s))) for s in rm.states])


def discrete_generator(rm: RateMatrix, fvec: np.ndarray) -> np.ndarray:
    """Discrete analogue of ``HF``: ``-(Q F)``."""
    return -(rm.Q @ fvec)


def empirical_law(rm: RateMatrix, samples) -> np.ndarray:
    """Frequencies of the states visited by lattice-mode samples."""
    counts = np.zeros(rm.size)
    for c in samples:
        pts = c.points if hasattr(c, "points") else c
        counts[rm.index(rm.model.mask_of(pts))] += 1
    if counts.sum() == 0:
        raise ParameterError("no samples")
    return counts / counts.sum()


def tv_distance(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


@dataclass(frozen=True)
class OracleReport:
    state_count: int
    gap: float | None
    delta_discrete: float
    tv_distance_vs_mc: float | None

    def to_record(self) -> dict:
        return {"state_count": self.state_count, "gap": self.gap,
                "delta_discrete": self.delta_discrete, "tv_distance_vs_mc": self.tv_distance_vs_mc}
