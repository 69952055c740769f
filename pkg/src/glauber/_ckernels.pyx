# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loop and CFTP sweep.

Same algorithms and the same order of uniform draws as ``_pykernels``; the
cell grid is a set of doubly linked lists over a flat cell index.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, sqrt, floor, INFINITY

cnp.import_array()

DEF ZERO = 0
DEF STRAUSS = 1
DEF HARDCORE = 2
DEF SOFTGAUSSIAN = 3


cdef inline double radial(int code, double p0, double p1, double cutoff, double r2) nogil:
    if code == ZERO:
        return 0.0
    if r2 >= cutoff * cutoff:
        return 0.0
    if code == STRAUSS:
        return p0
    if code == HARDCORE:
        return INFINITY
    return p0 * exp(-r2 / (2.0 * p1 * p1))


cdef class _Grid:
    cdef public object pts_arr
    cdef double[:, ::1] pts
    cdef long[::1] head
    cdef long[::1] nxt
    cdef long[::1] prv
    cdef long[::1] cellof
    cdef public long n
    cdef long cap
    cdef int d
    cdef long shape[3]
    cdef double width[3]
    cdef double side[3]
    cdef int periodic
    cdef int use_grid
    cdef int code
    cdef double p0, p1, cutoff

    def __init__(self, points, sides, bint periodic, int code, double p0, double p1, double cutoff):
        cdef int k
        cdef long i
        self.d = len(sides)
        self.periodic = periodic
        self.code = code
        self.p0 = p0
        self.p1 = p1
        self.cutoff = cutoff
        self.use_grid = 1 if cutoff > 0.0 else 0
        cdef long total = 1
        for k in range(3):
            self.shape[k] = 1
            self.side[k] = 1.0
            self.width[k] = 1.0
        for k in range(self.d):
            self.side[k] = sides[k]
            if cutoff > 0.0:
                self.shape[k] = max(1, <long> floor(sides[k] / cutoff))
            self.width[k] = sides[k] / self.shape[k]
            total *= self.shape[k]
        pts = np.asarray(points, dtype=np.float64).reshape(-1, self.d)
        self.cap = max(16, 2 * pts.shape[0])
        self.pts_arr = np.empty((self.cap, self.d), dtype=np.float64)
        self.pts = self.pts_arr
        self.head = np.full(total, -1, dtype=np.int64)
        self.nxt = np.full(self.cap, -1, dtype=np.int64)
        self.prv = np.full(self.cap, -1, dtype=np.int64)
        self.cellof = np.full(self.cap, -1, dtype=np.int64)
        self.n = 0
        for i in range(pts.shape[0]):
            self.add(pts[i, 0], pts[i, 1] if self.d > 1 else 0.0, pts[i, 2] if self.d > 2 else 0.0)

    cdef long cell_index(self, double x0, double x1, double x2):
        cdef double xs[3]
        cdef long c = 0, ck
        cdef int k
        xs[0] = x0; xs[1] = x1; xs[2] = x2
        for k in range(self.d):
            ck = <long> floor(xs[k] / self.width[k])
            if ck < 0:
                ck = 0
            if ck >= self.shape[k]:
                ck = self.shape[k] - 1
            c = c * self.shape[k] + ck
        return c

    cdef void grow(self):
        cdef long newcap = 2 * self.cap
        arr = np.empty((newcap, self.d), dtype=np.float64)
        arr[: self.n] = self.pts_arr[: self.n]
        self.pts_arr = arr
        self.pts = arr
        nx = np.full(newcap, -1, dtype=np.int64); nx[: self.cap] = np.asarray(self.nxt)
        pv = np.full(newcap, -1, dtype=np.int64); pv[: self.cap] = np.asarray(self.prv)
        co = np.full(newcap, -1, dtype=np.int64); co[: self.cap] = np.asarray(self.cellof)
        self.nxt = nx
        self.prv = pv
        self.cellof = co
        self.cap = newcap

    cdef void link(self, long i, long c):
        self.cellof[i] = c
        self.prv[i] = -1
        self.nxt[i] = self.head[c]
        if self.head[c] >= 0:
            self.prv[self.head[c]] = i
        self.head[c] = i

    cdef void unlink(self, long i):
        cdef long c = self.cellof[i]
        if self.prv[i] >= 0:
            self.nxt[self.prv[i]] = self.nxt[i]
        else:
            self.head[c] = self.nxt[i]
        if self.nxt[i] >= 0:
            self.prv[self.nxt[i]] = self.prv[i]

    cdef long add(self, double x0, double x1, double x2):
        if self.n == self.cap:
            self.grow()
        cdef long i = self.n
        self.pts[i, 0] = x0
        if self.d > 1:
            self.pts[i, 1] = x1
        if self.d > 2:
            self.pts[i, 2] = x2
        self.link(i, self.cell_index(x0, x1, x2))
        self.n += 1
        return i

    cdef void remove(self, long i):
        cdef long last = self.n - 1
        cdef int k
        cdef long c
        self.unlink(i)
        if i != last:
            for k in range(self.d):
                self.pts[i, k] = self.pts[last, k]
            c = self.cellof[last]
            self.unlink(last)
            self.link(i, c)
        self.n -= 1

    cdef double energy(self, double x0, double x1, double x2):
        cdef double xs[3]
        cdef long lo[3]
        cdef long hi[3]
        cdef long cc[3]
        cdef long a, b, c, ia, ib, ic, cell, j
        cdef int k
        cdef double total = 0.0, r2, dk, v
        if self.code == ZERO or self.n == 0:
            return 0.0
        xs[0] = x0; xs[1] = x1; xs[2] = x2
        if not self.use_grid:
            for j in range(self.n):
                r2 = 0.0
                for k in range(self.d):
                    dk = xs[k] - self.pts[j, k]
                    if self.periodic:
                        dk = dk - self.side[k] * floor(dk / self.side[k] + 0.5)
                    r2 += dk * dk
                if r2 == 0.0:
                    continue
                v = radial(self.code, self.p0, self.p1, self.cutoff, r2)
                if v == INFINITY:
                    return INFINITY
                total += v
            return total
        for k in range(3):
            if k < self.d:
                cc[k] = <long> floor(xs[k] / self.width[k])
                if cc[k] < 0:
                    cc[k] = 0
                if cc[k] >= self.shape[k]:
                    cc[k] = self.shape[k] - 1
                if self.periodic and self.shape[k] < 3:
                    lo[k] = 0
                    hi[k] = self.shape[k] - 1
                elif self.periodic:
                    lo[k] = cc[k] - 1
                    hi[k] = cc[k] + 1
                else:
                    lo[k] = cc[k] - 1 if cc[k] > 0 else 0
                    hi[k] = cc[k] + 1 if cc[k] + 1 < self.shape[k] else self.shape[k] - 1
            else:
                lo[k] = 0
                hi[k] = 0
        for a in range(lo[0], hi[0] + 1):
            ia = (a + self.shape[0]) % self.shape[0]
            for b in range(lo[1], hi[1] + 1):
                ib = (b + self.shape[1]) % self.shape[1]
                for c in range(lo[2], hi[2] + 1):
                    ic = (c + self.shape[2]) % self.shape[2]
                    cell = (ia * self.shape[1] + ib) * self.shape[2] + ic
                    j = self.head[cell]
                    while j >= 0:
                        r2 = 0.0
                        for k in range(self.d):
                            dk = xs[k] - self.pts[j, k]
                            if self.periodic:
                                dk = dk - self.side[k] * floor(dk / self.side[k] + 0.5)
                            r2 += dk * dk
                        if r2 != 0.0:
                            v = radial(self.code, self.p0, self.p1, self.cutoff, r2)
                            if v == INFINITY:
                                return INFINITY
                            total += v
                        j = self.nxt[j]
        return total

    def points(self):
        return np.array(self.pts_arr[: self.n], copy=True)

    def py_energy(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.energy(x[0], x[1] if self.d > 1 else 0.0, x[2] if self.d > 2 else 0.0)

    def py_add(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.add(x[0], x[1] if self.d > 1 else 0.0, x[2] if self.d > 2 else 0.0)

    def py_remove(self, long i):
        self.remove(i)


def simulate(points, sides, bint periodic, int code, double p0, double p1, double cutoff,
             double z, double t0, long max_events, double t_end, snap_times, stream, bint record):
    """Compiled twin of ``_pykernels.simulate`` working on raw arrays.

    Returns ``(points, time, counts, events, snapshots)``.
    """
    cdef _Grid g = _Grid(points, sides, periodic, code, p0, p1, cutoff)
    cdef int d = len(sides)
    cdef double volume = 1.0
    cdef int k
    for k in range(d):
        volume *= sides[k]
    cdef double volume_rate = z * volume
    cdef double[::1] snaps_t = np.ascontiguousarray(snap_times, dtype=np.float64)
    cdef long n_snap = snaps_t.shape[0]
    cdef long k_snap = 0
    snaps = []
    cdef double[::1] buf = stream.buf
    cdef long pos = stream.pos
    cdef long blen = buf.shape[0]
    cdef double t = t0, t_new, total, u, acc
    cdef long done = 0, n, i
    cdef long births = 0, deaths = 0, rejected = 0
    cdef double xs[3]
    cdef double sd[3]
    for k in range(3):
        sd[k] = sides[k] if k < d else 1.0

    cdef long ecap = 1024 if record else 1
    kinds_a = np.empty(ecap, dtype=np.int8)
    times_a = np.empty(ecap, dtype=np.float64)
    locs_a = np.empty((ecap, d), dtype=np.float64)
    idx_a = np.empty(ecap, dtype=np.int64)
    cdef signed char[::1] kinds = kinds_a
    cdef double[::1] times = times_a
    cdef double[:, ::1] locs = locs_a
    cdef long[::1] idxs = idx_a
    cdef long ne = 0

    while done < max_events:
        n = g.n
        total = n + volume_rate
        if total <= 0.0:
            if t_end < INFINITY:
                t = t_end
            break
        if pos == blen:
            buf = stream.refill(); pos = 0; blen = buf.shape[0]
        u = buf[pos]; pos += 1
        t_new = t - log1p(-u) / total
        if t_new > t_end:
            t = t_end
            break
        while k_snap < n_snap and snaps_t[k_snap] < t_new:
            snaps.append(g.points())
            k_snap += 1
        t = t_new
        done += 1
        if record and ne == ecap:
            ecap *= 2
            kinds_a = np.resize(kinds_a, ecap); kinds = kinds_a
            times_a = np.resize(times_a, ecap); times = times_a
            locs_new = np.empty((ecap, d), dtype=np.float64); locs_new[:ne] = locs_a[:ne]
            locs_a = locs_new; locs = locs_a
            idx_a = np.resize(idx_a, ecap); idxs = idx_a
        if pos == blen:
            buf = stream.refill(); pos = 0; blen = buf.shape[0]
        u = buf[pos]; pos += 1
        if u * total < n:
            if pos == blen:
                buf = stream.refill(); pos = 0; blen = buf.shape[0]
            u = buf[pos]; pos += 1
            i = <long> (u * n)
            if i >= n:
                i = n - 1
            if record:
                kinds[ne] = 1; times[ne] = t; idxs[ne] = i
                for k in range(d):
                    locs[ne, k] = g.pts[i, k]
                ne += 1
            g.remove(i)
            deaths += 1
            continue
        for k in range(3):
            xs[k] = 0.0
        for k in range(d):
            if pos == blen:
                buf = stream.refill(); pos = 0; blen = buf.shape[0]
            xs[k] = buf[pos] * sd[k]; pos += 1
            if xs[k] >= sd[k]:
                xs[k] = np.nextafter(sd[k], 0.0)
        if pos == blen:
            buf = stream.refill(); pos = 0; blen = buf.shape[0]
        acc = buf[pos]; pos += 1
        if acc < exp(-g.energy(xs[0], xs[1], xs[2])):
            if record:
                kinds[ne] = 0; times[ne] = t; idxs[ne] = g.n
                for k in range(d):
                    locs[ne, k] = xs[k]
                ne += 1
            g.add(xs[0], xs[1], xs[2])
            births += 1
        else:
            if record:
                kinds[ne] = 2; times[ne] = t; idxs[ne] = -1
                for k in range(d):
                    locs[ne, k] = xs[k]
                ne += 1
            rejected += 1
    while k_snap < n_snap and snaps_t[k_snap] <= t:
        snaps.append(g.points())
        k_snap += 1
    stream.pos = pos
    events = None
    if record:
        events = (kinds_a[:ne].copy(), times_a[:ne].copy(), locs_a[:ne].copy(), idx_a[:ne].copy())
    return g.points(), t, [births, deaths, rejected], events, snaps


def cftp_sweep(locs, births, deaths, marks, double t_start, sides, bint periodic,
               int code, double p0, double p1, double cutoff):
    """Compiled twin of ``_pykernels.cftp_sweep``; returns ``(upper, lower)`` masks."""
    cdef double[:, ::1] X = np.ascontiguousarray(locs, dtype=np.float64)
    cdef double[::1] tb = np.ascontiguousarray(births, dtype=np.float64)
    cdef double[::1] td = np.ascontiguousarray(deaths, dtype=np.float64)
    cdef double[::1] mk = np.ascontiguousarray(marks, dtype=np.float64)
    cdef long N = tb.shape[0]
    cdef int d = X.shape[1]
    cdef double sd[3]
    cdef int k
    for k in range(3):
        sd[k] = sides[k] if k < d else 1.0
    up_a = np.zeros(N, dtype=np.uint8)
    lo_a = np.zeros(N, dtype=np.uint8)
    cdef unsigned char[::1] up = up_a
    cdef unsigned char[::1] lo = lo_a
    cdef long i, j, m, e
    ev_t = []
    ev_k = []
    ev_i = []
    for i in range(N):
        if tb[i] <= t_start and td[i] > t_start:
            up[i] = 1
        if t_start < tb[i] <= 0.0:
            ev_t.append(tb[i]); ev_k.append(0); ev_i.append(i)
        if t_start < td[i] <= 0.0:
            ev_t.append(td[i]); ev_k.append(1); ev_i.append(i)
    order_a = np.lexsort((np.asarray(ev_k, dtype=np.int64), np.asarray(ev_t, dtype=np.float64))).astype(np.int64)
    cdef long[::1] order = order_a
    cdef long[::1] eki = np.asarray(ev_k, dtype=np.int64) if ev_k else np.zeros(0, dtype=np.int64)
    cdef long[::1] eii = np.asarray(ev_i, dtype=np.int64) if ev_i else np.zeros(0, dtype=np.int64)
    # member lists with swap-remove; pos arrays give each point's slot
    up_list_a = np.empty(N, dtype=np.int64)
    lo_list_a = np.empty(N, dtype=np.int64)
    up_pos_a = np.full(N, -1, dtype=np.int64)
    lo_pos_a = np.full(N, -1, dtype=np.int64)
    cdef long[::1] up_list = up_list_a
    cdef long[::1] lo_list = lo_list_a
    cdef long[::1] up_pos = up_pos_a
    cdef long[::1] lo_pos = lo_pos_a
    cdef long n_up = 0, n_lo = 0
    for i in range(N):
        if up[i]:
            up_list[n_up] = i; up_pos[i] = n_up; n_up += 1
    cdef double e_lo, e_up, r2, dk, v, u
    cdef bint to_up, to_lo
    for e in range(order.shape[0]):
        j = order[e]
        i = eii[j]
        if eki[j] == 1:
            if up_pos[i] >= 0:
                m = up_list[n_up - 1]; up_list[up_pos[i]] = m; up_pos[m] = up_pos[i]; up_pos[i] = -1; n_up -= 1
            if lo_pos[i] >= 0:
                m = lo_list[n_lo - 1]; lo_list[lo_pos[i]] = m; lo_pos[m] = lo_pos[i]; lo_pos[i] = -1; n_lo -= 1
            continue
        u = mk[i]
        e_lo = 0.0
        if code != ZERO:
            for m in range(n_lo):
                r2 = 0.0
                for k in range(d):
                    dk = X[i, k] - X[lo_list[m], k]
                    if periodic:
                        dk = dk - sd[k] * floor(dk / sd[k] + 0.5)
                    r2 += dk * dk
                v = radial(code, p0, p1, cutoff, r2)
                e_lo += v
                if v == INFINITY:
                    break
        e_up = 0.0
        if code != ZERO:
            for m in range(n_up):
                r2 = 0.0
                for k in range(d):
                    dk = X[i, k] - X[up_list[m], k]
                    if periodic:
                        dk = dk - sd[k] * floor(dk / sd[k] + 0.5)
                    r2 += dk * dk
                v = radial(code, p0, p1, cutoff, r2)
                e_up += v
                if v == INFINITY:
                    break
        to_up = u < exp(-e_lo)
        to_lo = u < exp(-e_up)
        if to_up:
            up_list[n_up] = i; up_pos[i] = n_up; n_up += 1
        if to_lo:
            lo_list[n_lo] = i; lo_pos[i] = n_lo; n_lo += 1
    up_out = np.zeros(N, dtype=bool)
    lo_out = np.zeros(N, dtype=bool)
    for m in range(n_up):
        up_out[up_list[m]] = True
    for m in range(n_lo):
        lo_out[lo_list[m]] = True
    return up_out, lo_out
