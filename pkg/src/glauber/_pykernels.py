"""Pure-Python simulation kernels.

Reference implementation of the event loop and of the coupling-from-the-past
sweep.  The compiled module ``_ckernels`` mirrors these functions and must
consume the uniform stream in exactly the same order.
"""
from __future__ import annotations

import math

import numpy as np

from .geometry import Configuration, ModelParams, relative_energy

BIRTH, DEATH, REJECTED = 0, 1, 2


class EventLog:
    __slots__ = ("kinds", "times", "locs", "idx")

    def __init__(self):
        self.kinds: list[int] = []
        self.times: list[float] = []
        self.locs: list[np.ndarray] = []
        self.idx: list[int] = []

    def append(self, kind, t, loc, i):
        self.kinds.append(kind)
        self.times.append(t)
        self.locs.append(loc)
        self.idx.append(i)

    def arrays(self, d):
        locs = np.asarray(self.locs, dtype=float).reshape(-1, d)
        return (np.asarray(self.kinds, dtype=np.int8), np.asarray(self.times, dtype=float),
                locs, np.asarray(self.idx, dtype=np.int64))


def simulate(config: Configuration, params: ModelParams, t0: float, max_events: int,
             t_end: float, snap_times, stream, record: bool):
    """Advance ``config`` in place.

    Stops after ``max_events`` events (all kinds counted) or when the next
    event would fall after ``t_end``; in the latter case the clock is set to
    ``t_end``.  Returns ``(time, counts, events, snapshots)`` where
    ``counts = [births, deaths, rejected]``, ``events`` is a tuple of arrays
    (or None) and ``snapshots`` lists point arrays for every snapshot time
    not after the final clock.
    """
    box = params.box
    d = box.dim
    volume_rate = params.z * box.volume
    lattice = params.lattice
    centers = lattice.centers(box) if lattice is not None else None
    snap_times = np.asarray(snap_times, dtype=float)
    snaps: list[np.ndarray] = []
    k_snap = 0
    log = EventLog() if record else None
    counts = [0, 0, 0]
    t = float(t0)
    done = 0
    nxt = stream.next
    while done < max_events:
        n = len(config)
        total = n + volume_rate
        if total <= 0.0:
            t = t_end if math.isfinite(t_end) else t
            break
        u = nxt()
        t_new = t - math.log1p(-u) / total
        if t_new > t_end:
            t = t_end
            break
        while k_snap < len(snap_times) and snap_times[k_snap] < t_new:
            snaps.append(config.points.copy())
            k_snap += 1
        t = t_new
        done += 1
        if nxt() * total < n:
            i = int(nxt() * n)
            if i >= n:
                i = n - 1
            loc = config.remove_index(i)
            counts[1] += 1
            if record:
                log.append(DEATH, t, loc, i)
            continue
        x = box.uniform([nxt() for _ in range(d)])
        accept_u = nxt()
        if lattice is not None:
            x = centers[lattice.index(x, box)]
            blocked = n >= lattice.cap or config.index_of(x) >= 0
        else:
            blocked = config.index_of(x) >= 0
        if not blocked and accept_u < math.exp(-relative_energy(x, config, params)):
            config.add(x)
            counts[0] += 1
            if record:
                log.append(BIRTH, t, x.copy(), n)
        else:
            counts[2] += 1
            if record:
                log.append(REJECTED, t, np.array(x, dtype=float), -1)
    while k_snap < len(snap_times) and snap_times[k_snap] <= t:
        snaps.append(config.points.copy())
        k_snap += 1
    events = log.arrays(d) if record else None
    return t, counts, events, snaps


def cftp_sweep(locs, births, deaths, marks, t_start, box, potential):
    """Forward pass of dominated CFTP over the window ``[t_start, 0]``.

    ``locs`` (N, d), ``births``/``deaths`` (N,) and ``marks`` (N,) describe
    every point of the dominating path.  Upper process starts as the points
    alive at ``t_start``, lower process empty.  A birth at ``x`` with mark
    ``u`` enters the upper process if ``u < exp(-E(x, lower))`` and the lower
    one if ``u < exp(-E(x, upper))``; deaths remove the point from both.
    Returns boolean membership arrays ``(upper, lower)`` at time 0.
    """
    N = len(births)
    upper = np.zeros(N, dtype=bool)
    lower = np.zeros(N, dtype=bool)
    upper[(births <= t_start) & (deaths > t_start)] = True
    ev_t = []
    ev_i = []
    ev_k = []
    for i in range(N):
        if t_start < births[i] <= 0.0:
            ev_t.append(births[i]); ev_i.append(i); ev_k.append(0)
        if t_start < deaths[i] <= 0.0:
            ev_t.append(deaths[i]); ev_i.append(i); ev_k.append(1)
    order = np.lexsort((np.asarray(ev_k), np.asarray(ev_t)))
    L = box.side_array
    periodic = box.periodic
    cutoff = potential.cutoff
    up_set: set[int] = set(np.flatnonzero(upper).tolist())
    lo_set: set[int] = set()

    def energy(x, members):
        if cutoff == 0.0 or not members:
            return 0.0
        idx = np.fromiter(members, dtype=np.int64, count=len(members))
        disp = x - locs[idx]
        if periodic:
            disp = disp - L * np.floor(disp / L + 0.5)
        r = np.sqrt(np.sum(disp * disp, axis=1))
        return float(np.sum(potential.radial(r)))

    for j in order:
        i = ev_i[j]
        if ev_k[j] == 1:
            up_set.discard(i)
            lo_set.discard(i)
            continue
        x = locs[i]
        u = marks[i]
        to_upper = u < math.exp(-energy(x, lo_set))
        to_lower = u < math.exp(-energy(x, up_set))
        if to_upper:
            up_set.add(i)
        if to_lower:
            lo_set.add(i)
    upper[:] = False
    lower[:] = False
    upper[list(up_set)] = True
    lower[list(lo_set)] = True
    return upper, lower
