"""Birth-death dynamics: exact event simulation and perfect sampling.

Births are proposed uniformly in the box at rate ``z|box|`` and accepted
with probability ``exp(-E(x, gamma))``; every particle dies at rate 1.
Rejected proposals advance the clock, which keeps the embedded process an
exact realization of the continuous-time chain.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .errors import CoalescenceError, ModelError, ParameterError
from .geometry import Configuration, ModelParams
from .rng import UniformStream, chain_seed

KIND_NAMES = {kernels.BIRTH: "birth", kernels.DEATH: "death", kernels.REJECTED: "rejected_birth"}


@dataclass
class ChainState:
    config: Configuration
    rng: UniformStream
    time: float = 0.0

    @classmethod
    def start(cls, params: ModelParams, seed: int = 0, chain_index: int = 0,
              initial: str = "empty") -> "ChainState":
        """Fresh chain at time 0 from the empty configuration or a Poisson(z) draw."""
        rng = UniformStream(seed, chain_index)
        config = params.empty()
        if initial == "poisson":
            gen = rng.spawn("initial").generator
            n = gen.poisson(params.z * params.box.volume)
            for u in gen.random((n, params.box.dim)):
                config.add(params.box.uniform(u))
        elif initial != "empty":
            raise ParameterError(f"initial condition must be 'empty' or 'poisson', got {initial!r}")
        return cls(config, rng, 0.0)


@dataclass(frozen=True)
class Event:
    kind: str
    location: np.ndarray
    at_time: float
    index: int = -1


@dataclass
class Trajectory:
    """Initial configuration, event list and snapshots of one run."""

    box: object
    initial: np.ndarray
    start_time: float
    kinds: np.ndarray
    times: np.ndarray
    locs: np.ndarray
    idx: np.ndarray
    snapshot_times: np.ndarray
    snapshots: list[np.ndarray]
    final_time: float
    counts: tuple[int, int, int] = (0, 0, 0)

    def __len__(self) -> int:
        return len(self.kinds)

    def events(self) -> Iterator[Event]:
        for k, t, x, i in zip(self.kinds, self.times, self.locs, self.idx):
            yield Event(KIND_NAMES[int(k)], x.copy(), float(t), int(i))

    def replay(self, times: Sequence[float] | None = None) -> list[np.ndarray]:
        """Rebuild the configuration at ``times`` (default: the snapshot schedule) from the events."""
        times = self.snapshot_times if times is None else np.asarray(times, dtype=float)
        pts = [p.copy() for p in self.initial]
        out = []
        j = 0
        for s in times:
            while j < len(self.kinds) and self.times[j] <= s:
                k = self.kinds[j]
                if k == kernels.BIRTH:
                    pts.append(self.locs[j].copy())
                elif k == kernels.DEATH:
                    i = int(self.idx[j])
                    pts[i] = pts[-1]
                    pts.pop()
                j += 1
            out.append(np.asarray(pts, dtype=float).reshape(-1, self.initial.shape[1]))
        return out

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for k, t, x in zip(self.kinds, self.times, self.locs):
                fh.write(json.dumps({"t": float(t), "kind": KIND_NAMES[int(k)],
                                     "x": [float(v) for v in x]}) + "\n")

    def write_snapshots_csv(self, path) -> None:
        d = self.initial.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["snapshot", "t"] + [f"x{k}" for k in range(d)])
            for s, (t, pts) in enumerate(zip(self.snapshot_times, self.snapshots)):
                for p in pts:
                    w.writerow([s, repr(float(t))] + [repr(float(v)) for v in p])


def step_event(state: ChainState, params: ModelParams) -> tuple[ChainState, Event | None]:
    """Advance the chain by exactly one event (birth, death or rejected birth).

    Returns ``None`` for the event when the chain is absorbed (``z = 0`` and
    no particles left).
    """
    t, counts, ev, _ = kernels.simulate(state.config, params, state.time, 1, math.inf, (),
                                        state.rng, True)
    if len(ev[0]) == 0:
        return state, None
    state.time = t
    kind, times, locs, idx = ev
    return state, Event(KIND_NAMES[int(kind[0])], locs[0], float(times[0]), int(idx[0]))


def run(state: ChainState, params: ModelParams, *, events: int | None = None,
        until: float | None = None, snapshots: Sequence[float] = (), record: bool = True,
        backend: str | None = None) -> Trajectory:
    """Run the chain for a number of events or up to a process time.

    The returned trajectory always starts with a snapshot of the initial
    configuration; scheduled snapshot times carry the state of the last
    event at or before them.
    """
    if (events is None) == (until is None):
        raise ParameterError("give exactly one of events= or until=")
    if events is not None and events < 0:
        raise ParameterError(f"event horizon must be nonnegative, got {events}")
    if until is not None and not until >= state.time:
        raise ParameterError(f"time horizon {until} precedes the current time {state.time}")
    max_events = int(events) if events is not None else 2**62
    t_end = float(until) if until is not None else math.inf
    sched = np.asarray(sorted(float(s) for s in snapshots), dtype=float)
    if len(sched) and sched[0] < state.time:
        raise ParameterError("snapshot times must not precede the current time")
    initial = state.config.points.copy()
    t0 = state.time
    t, counts, ev, snaps = kernels.simulate(state.config, params, t0, max_events, t_end, sched,
                                            state.rng, record, backend=backend)
    state.time = t
    if ev is None:
        d = params.box.dim
        ev = (np.zeros(0, np.int8), np.zeros(0), np.zeros((0, d)), np.zeros(0, np.int64))
    snap_t = np.concatenate([[t0], sched[: len(snaps)]])
    return Trajectory(params.box, initial, t0, *ev, snapshot_times=snap_t,
                      snapshots=[initial] + list(snaps), final_time=t, counts=tuple(counts))


def sample_equilibrium(params: ModelParams, burn_in: float, n_samples: int, spacing: float,
                       seed: int = 0, chain_index: int = 0, initial: str = "empty",
                       backend: str | None = None) -> list[Configuration]:
    """Configurations of one chain at ``burn_in + k * spacing``, ``k = 0..n_samples-1``.

    Each returned configuration carries its process time in ``.time``.
    """
    if not burn_in > 0:
        raise ParameterError(f"burn_in must be positive, got {burn_in}")
    if not spacing > 0:
        raise ParameterError(f"spacing must be positive, got {spacing}")
    if n_samples < 0:
        raise ParameterError(f"n_samples must be nonnegative, got {n_samples}")
    state = ChainState.start(params, seed, chain_index, initial)
    times = burn_in + spacing * np.arange(n_samples)
    if n_samples == 0:
        return []
    _, _, _, snaps = kernels.simulate(state.config, params, 0.0, 2**62, float(times[-1]), times,
                                      state.rng, False, backend=backend)
    out = []
    for t, pts in zip(times, snaps):
        c = params.configuration(pts, trusted=True)
        c.time = float(t)
        out.append(c)
    return out


def sample_chains(params: ModelParams, burn_in: float, n_per_chain: int, spacing: float,
                  seed: int = 0, chains: int = 8, initial: str = "empty") -> list[list[Configuration]]:
    """Independent seeded chains, one list of samples per chain (chain ``i`` uses stream ``(seed, i)``)."""
    if chains < 1:
        raise ParameterError(f"need at least one chain, got {chains}")
    return [sample_equilibrium(params, burn_in, n_per_chain, spacing, seed, i, initial)
            for i in range(chains)]


class _DominatingPath:
    """Stationary free birth-death path, extended backwards in time on demand."""

    def __init__(self, params: ModelParams, gen: np.random.Generator):
        self.params = params
        self.gen = gen
        self.rate = params.z * params.box.volume
        n0 = gen.poisson(self.rate)
        d = params.box.dim
        self.locs = [params.box.uniform(u) for u in gen.random((n0, d))]
        self.marks = list(gen.random(n0))
        self.births = [-math.inf] * n0
        self.deaths = [math.inf] * n0
        self.alive = list(range(n0))   # alive at the current backward time
        self.s = 0.0

    def extend(self, horizon: float) -> None:
        gen = self.gen
        box = self.params.box
        while True:
            total = len(self.alive) + self.rate
            if total == 0.0:
                self.s = horizon
                return
            s_new = self.s + gen.exponential(1.0 / total)
            if s_new > horizon:
                self.s = horizon
                return
            self.s = s_new
            if gen.random() * total < len(self.alive):
                # seen backwards, a forward birth
                k = int(gen.random() * len(self.alive))
                k = min(k, len(self.alive) - 1)
                i = self.alive[k]
                self.alive[k] = self.alive[-1]
                self.alive.pop()
                self.births[i] = -s_new
            else:
                # seen backwards, a forward death
                self.locs.append(box.uniform(gen.random(box.dim)))
                self.marks.append(gen.random())
                self.births.append(-math.inf)
                self.deaths.append(-s_new)
                self.alive.append(len(self.locs) - 1)

    def arrays(self):
        d = self.params.box.dim
        return (np.asarray(self.locs, dtype=float).reshape(-1, d), np.asarray(self.births),
                np.asarray(self.deaths), np.asarray(self.marks, dtype=float))


def cftp_sample(params: ModelParams, seed: int = 0, chain_index: int = 0, *,
                initial_window: float = 1.0, max_window: float = 2.0**20,
                backend: str | None = None) -> Configuration:
    """Exact draw from the finite-volume Gibbs measure by dominated coupling from the past.

    The dominating process is the free birth-death process (births at rate
    ``z|box|``, unit deaths).  Upper and lower processes use the crossover
    rule for repulsive interactions; the window doubles until they meet.
    """
    if not params.potential.positive:
        raise ModelError("coupling from the past needs a nonnegative potential")
    if params.lattice is not None:
        raise ModelError("coupling from the past does not support lattice mode")
    gen = np.random.Generator(np.random.PCG64(chain_seed(seed, chain_index).spawn(1)[0]))
    path = _DominatingPath(params, gen)
    T = float(initial_window)
    while T <= max_window:
        path.extend(T)
        locs, births, deaths, marks = path.arrays()
        upper, lower = kernels.cftp_sweep(locs, births, deaths, marks, -T, params, backend=backend)
        if np.array_equal(upper, lower):
            c = params.configuration(locs[lower])
            c.time = 0.0
            return c
        T *= 2.0
    raise CoalescenceError(f"no coalescence within a window of {max_window} time units")
