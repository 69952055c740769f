"""Boxes, configurations with a cell grid, model parameters and the relative energy."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError, ModelError
from .potentials import PairPotential, ball_volume

BOUNDARIES = ("periodic", "empty")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[0, L_1) x ... x [0, L_d)``."""

    sides: tuple[float, ...]
    boundary: str = "periodic"

    def __post_init__(self):
        sides = tuple(float(s) for s in self.sides)
        object.__setattr__(self, "sides", sides)
        if len(sides) not in (1, 2, 3):
            raise ModelError(f"dimension must be 1, 2 or 3, got {len(sides)}")
        if not all(s > 0 and math.isfinite(s) for s in sides):
            raise ModelError(f"box sides must be positive and finite, got {sides}")
        if self.boundary not in BOUNDARIES:
            raise ModelError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")

    @property
    def dim(self) -> int:
        return len(self.sides)

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @cached_property
    def side_array(self) -> np.ndarray:
        return np.asarray(self.sides, dtype=float)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(x.shape == (self.dim,) and np.all(np.isfinite(x))
                    and np.all(x >= 0.0) and np.all(x < self.side_array))

    def displacement(self, a, b):
        """``a - b`` under the box convention (minimum image when periodic); broadcasts."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if self.periodic:
            L = self.side_array
            d = d - L * np.floor(d / L + 0.5)
        return d

    def distance(self, a, b):
        d = self.displacement(a, b)
        return np.sqrt(np.sum(d * d, axis=-1))

    def uniform(self, u) -> np.ndarray:
        """Map uniforms in [0, 1)^d to a point of the box."""
        x = np.asarray(u, dtype=float) * self.side_array
        # guard against rounding up to the open upper face
        return np.minimum(x, np.nextafter(self.side_array, 0.0))


class CellGrid:
    """Uniform grid of cells at least ``cutoff`` wide, with neighbor-cell tables."""

    def __init__(self, box: Box, cutoff: float):
        self.box = box
        self.cutoff = float(cutoff)
        if self.cutoff > 0 and math.isfinite(self.cutoff):
            self.shape = tuple(max(1, int(math.floor(L / self.cutoff))) for L in box.sides)
        else:
            self.shape = (1,) * box.dim
        self.widths = np.asarray(box.sides) / np.asarray(self.shape)
        per_axis = []
        for n in self.shape:
            if box.periodic and n >= 3:
                per_axis.append(("wrap", (-1, 0, 1)))
            elif box.periodic:
                per_axis.append(("all", tuple(range(n))))
            else:
                per_axis.append(("clip", (-1, 0, 1)))
        self._per_axis = per_axis
        self._neighbor_cache: dict[tuple[int, ...], tuple[tuple[int, ...], ...]] = {}

    def cell_of(self, x) -> tuple[int, ...]:
        idx = np.floor(np.asarray(x, dtype=float) / self.widths).astype(int)
        idx = np.minimum(np.maximum(idx, 0), np.asarray(self.shape) - 1)
        return tuple(int(i) for i in idx)

    def neighbor_cells(self, cell: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
        cached = self._neighbor_cache.get(cell)
        if cached is not None:
            return cached
        axes = []
        for c, n, (mode, offsets) in zip(cell, self.shape, self._per_axis):
            if mode == "all":
                axes.append(offsets)
            elif mode == "wrap":
                axes.append(tuple((c + o) % n for o in offsets))
            else:
                axes.append(tuple(c + o for o in offsets if 0 <= c + o < n))
        cells = tuple(itertools.product(*axes))
        self._neighbor_cache[cell] = cells
        return cells


class Configuration:
    """A finite set of distinct points in a box, indexed by a cell grid.

    Points live in a contiguous array; removal swaps the last point into the
    freed slot, so indices are stable only between mutations.
    """

    def __init__(self, box: Box, points=None, cutoff: float = 0.0, time: float | None = None):
        self.box = box
        self.grid = CellGrid(box, cutoff)
        self.time = time
        d = box.dim
        pts = np.zeros((0, d)) if points is None else np.asarray(points, dtype=float).reshape(-1, d)
        self._pts = np.empty((max(8, 2 * len(pts)), d))
        self._n = 0
        self._cell_of: list[tuple[int, ...]] = []
        self._cells: dict[tuple[int, ...], list[int]] = {}
        for p in pts:
            self.add(p)

    # -- basic protocol -------------------------------------------------
    def __len__(self) -> int:
        return self._n

    def __iter__(self) -> Iterator[np.ndarray]:
        for i in range(self._n):
            yield self._pts[i].copy()

    def __repr__(self) -> str:
        return f"Configuration(n={self._n}, box={self.box.sides}, {self.box.boundary})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        if self.box != other.box or len(self) != len(other):
            return False
        a = self.points[np.lexsort(self.points.T[::-1])] if len(self) else self.points
        b = other.points[np.lexsort(other.points.T[::-1])] if len(other) else other.points
        return bool(np.array_equal(a, b))

    @property
    def points(self) -> np.ndarray:
        """Read-only view of the current points, shape (n, d)."""
        v = self._pts[: self._n]
        v.flags.writeable = False
        return v

    def copy(self) -> "Configuration":
        new = Configuration(self.box, None, self.grid.cutoff, self.time)
        new._pts = self._pts.copy()
        new._n = self._n
        new._cell_of = list(self._cell_of)
        new._cells = {k: list(v) for k, v in self._cells.items()}
        new.grid = self.grid
        return new

    # -- lookup ---------------------------------------------------------
    def index_of(self, x) -> int:
        """Index of the point equal to ``x``, or -1."""
        x = np.asarray(x, dtype=float)
        cand = self._cells.get(self.grid.cell_of(x), ())
        if not cand:
            return -1
        cand = np.asarray(cand)
        hit = np.flatnonzero(np.all(self._pts[cand] == x, axis=1))
        return int(cand[hit[0]]) if len(hit) else -1

    def __contains__(self, x) -> bool:
        return self.index_of(x) >= 0

    def candidates(self, x) -> Iterable[int]:
        """Indices of points in the cells adjacent to ``x`` (all points for an infinite cutoff)."""
        if not (self.grid.cutoff > 0 and math.isfinite(self.grid.cutoff)):
            return range(self._n)
        out: list[int] = []
        for c in self.grid.neighbor_cells(self.grid.cell_of(x)):
            out.extend(self._cells.get(c, ()))
        return out

    # -- mutation -------------------------------------------------------
    def add(self, x) -> int:
        x = np.asarray(x, dtype=float)
        if not self.box.contains(x):
            raise DomainError(f"point {x} lies outside the box {self.box.sides}")
        if self.index_of(x) >= 0:
            raise DomainError(f"point {x} is already in the configuration")
        if self._n == len(self._pts):
            grown = np.empty((2 * len(self._pts), self.box.dim))
            grown[: self._n] = self._pts[: self._n]
            self._pts = grown
        i = self._n
        self._pts[i] = x
        cell = self.grid.cell_of(x)
        self._cell_of.append(cell)
        self._cells.setdefault(cell, []).append(i)
        self._n += 1
        return i

    def remove_index(self, i: int) -> np.ndarray:
        """Remove point ``i`` (swap-with-last); returns its coordinates."""
        if not 0 <= i < self._n:
            raise DomainError(f"index {i} out of range for {self._n} points")
        removed = self._pts[i].copy()
        last = self._n - 1
        cell = self._cell_of[i]
        members = self._cells[cell]
        members.remove(i)
        if not members:
            del self._cells[cell]
        if i != last:
            self._pts[i] = self._pts[last]
            last_cell = self._cell_of[last]
            lst = self._cells[last_cell]
            lst[lst.index(last)] = i
            self._cell_of[i] = last_cell
        self._cell_of.pop()
        self._n -= 1
        return removed

    def remove(self, x) -> np.ndarray:
        i = self.index_of(x)
        if i < 0:
            raise DomainError(f"point {np.asarray(x)} is not in the configuration")
        return self.remove_index(i)

    def with_point(self, x) -> "Configuration":
        new = self.copy()
        new.add(x)
        return new

    def without(self, x) -> "Configuration":
        new = self.copy()
        new.remove(x)
        return new

    def _reset(self, points) -> None:
        """Replace all points, keeping their order (used after a compiled run)."""
        self._pts = np.empty((max(8, 2 * len(points)), self.box.dim))
        self._n = 0
        self._cell_of = []
        self._cells = {}
        for p in np.asarray(points, dtype=float).reshape(-1, self.box.dim):
            i = self._n
            self._pts[i] = p
            cell = self.grid.cell_of(p)
            self._cell_of.append(cell)
            self._cells.setdefault(cell, []).append(i)
            self._n += 1

    # -- invariants -----------------------------------------------------
    def grid_consistent(self) -> bool:
        """Compare the incremental grid against a full rebuild."""
        rebuilt: dict[tuple[int, ...], list[int]] = {}
        for i in range(self._n):
            if self._cell_of[i] != self.grid.cell_of(self._pts[i]):
                return False
            rebuilt.setdefault(self._cell_of[i], []).append(i)
        mine = {k: sorted(v) for k, v in self._cells.items()}
        return mine == rebuilt and len(self._cell_of) == self._n


@dataclass(frozen=True)
class Lattice:
    """Cell partition of the box used to embed the discrete oracle chain.

    In lattice mode a birth proposal is snapped to the center of its cell and
    rejected if that cell is occupied or the configuration already holds
    ``cap`` points.
    """

    shape: tuple[int, ...]
    cap: int

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if any(s < 1 for s in self.shape) or self.cap < 0:
            raise ModelError(f"invalid lattice shape {self.shape} / cap {self.cap}")

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def cell_volume(self, box: Box) -> float:
        return box.volume / self.size

    def centers(self, box: Box) -> np.ndarray:
        axes = [(np.arange(n) + 0.5) * (L / n) for n, L in zip(self.shape, box.sides)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def index(self, x, box: Box):
        """Flat cell index (C order) of one point or an array of points."""
        x = np.asarray(x, dtype=float)
        shape = np.asarray(self.shape)
        idx = np.floor(x / (box.side_array / shape)).astype(int)
        idx = np.clip(idx, 0, shape - 1)
        return np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), self.shape)

    def snap(self, x, box: Box) -> np.ndarray:
        return self.centers(box)[self.index(x, box)]


@dataclass(frozen=True)
class ModelParams:
    z: float
    potential: PairPotential
    box: Box
    lattice: Lattice | None = None

    def __post_init__(self):
        if not (self.z >= 0 and math.isfinite(self.z)):
            raise ModelError(f"activity z must be nonnegative and finite, got {self.z}")

    @cached_property
    def delta(self) -> float:
        return delta_integral(self.potential, self.z, self.box.dim)

    def empty(self) -> Configuration:
        return Configuration(self.box, None, self.potential.cutoff)

    def configuration(self, points, trusted: bool = False) -> Configuration:
        """Configuration over this box; ``trusted`` skips the per-point checks (kernel output)."""
        if not trusted:
            return Configuration(self.box, points, self.potential.cutoff)
        c = Configuration(self.box, None, self.potential.cutoff)
        c._reset(points)
        return c


def relative_energy(x, gamma: Configuration, params: ModelParams) -> float:
    """Interaction energy of a point ``x`` with ``gamma`` (excluding ``x`` itself if present).

    Only points in neighboring cells are visited; returns ``inf`` on the
    first infinite term.
    """
    x = np.asarray(x, dtype=float)
    if not params.box.contains(x):
        raise DomainError(f"point {x} lies outside the box {params.box.sides}")
    pot = params.potential
    if pot.cutoff == 0.0:
        return 0.0
    pts = gamma._pts
    total = 0.0
    for i in gamma.candidates(x):
        y = pts[i]
        disp = params.box.displacement(x, y)
        r = math.sqrt(float(np.dot(disp, disp)))
        if r == 0.0:
            continue
        if r >= pot.cutoff:
            continue
        v = float(pot.radial(r))
        if v == math.inf:
            return math.inf
        total += v
    return total


def energy_field(X, points, box: Box, potential: PairPotential) -> np.ndarray:
    """Vectorized relative energy of many locations ``X`` (N, d) against ``points`` (n, d).

    Like ``relative_energy``, a location coinciding with a point ignores it.
    """
    X = np.asarray(X, dtype=float).reshape(-1, box.dim)
    P = np.asarray(points, dtype=float).reshape(-1, box.dim)
    if len(P) == 0 or potential.cutoff == 0.0:
        return np.zeros(len(X))
    disp = box.displacement(X[:, None, :], P[None, :, :])
    r = np.sqrt(np.sum(disp * disp, axis=-1))
    vals = np.where(r == 0.0, 0.0, potential.radial(r))
    return np.sum(vals, axis=1)


def delta_integral(potential: PairPotential, z: float, d: int) -> float:
    """``z * integral over R^d of (1 - exp(-phi(x))) dx``.

    Closed form for step potentials; otherwise radial adaptive quadrature
    with an absolute error of at most 1e-8.
    """
    closed = potential.delta_closed_form(z, d)
    if closed is not None:
        return float(closed)
    sphere = d * ball_volume(d, 1.0)

    def integrand(r):
        return -math.expm1(-float(potential.radial(r))) * r ** (d - 1)

    upper = potential.cutoff
    if upper == 0.0:
        return 0.0
    value, err = integrate.quad(integrand, 0.0, upper, epsabs=1e-12, epsrel=1e-12, limit=200)
    value, err = z * sphere * value, z * sphere * err
    if not math.isfinite(value):
        raise ModelError(f"delta integral diverges for {potential}")
    if err > 1e-8:
        raise ModelError(f"delta integral for {potential} not resolved: error estimate {err:.2e}")
    return float(value)
