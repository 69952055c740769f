"""Kernel selection.

The compiled kernels are used when the extension imports and
``GLAUBER_PURE_PYTHON`` is not set; otherwise the pure-Python reference
kernels run.  Both consume the uniform stream identically.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels
from .geometry import Configuration, ModelParams

try:
    if os.environ.get("GLAUBER_PURE_PYTHON") == "1":
        raise ImportError("pure Python requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

BIRTH, DEATH, REJECTED = _pykernels.BIRTH, _pykernels.DEATH, _pykernels.REJECTED


def compiled_available() -> bool:
    return _ckernels is not None


def simulate(config: Configuration, params: ModelParams, t0: float, max_events: int,
             t_end: float, snap_times, stream, record: bool, backend: str | None = None):
    """Run the event loop on ``config`` (mutated in place); see ``_pykernels.simulate``."""
    use_c = _pick(backend) and params.lattice is None
    if not use_c:
        return _pykernels.simulate(config, params, t0, max_events, t_end, snap_times, stream, record)
    code, p0, p1, cutoff = params.potential.kernel_params()
    pts, t, counts, events, snaps = _ckernels.simulate(
        config.points, params.box.sides, params.box.periodic, code, p0, p1, cutoff,
        params.z, float(t0), int(min(max_events, 2**62)), float(t_end),
        np.asarray(snap_times, dtype=float), stream, bool(record))
    config._reset(pts)
    return t, counts, events, snaps


def cftp_sweep(locs, births, deaths, marks, t_start, params: ModelParams, backend: str | None = None):
    if _pick(backend):
        code, p0, p1, cutoff = params.potential.kernel_params()
        return _ckernels.cftp_sweep(locs, births, deaths, marks, float(t_start),
                                    params.box.sides, params.box.periodic, code, p0, p1, cutoff)
    return _pykernels.cftp_sweep(locs, births, deaths, marks, t_start, params.box, params.potential)


def _pick(backend: str | None) -> bool:
    if backend is None:
        return _ckernels is not None
    if backend == "python":
        return False
    if backend == "compiled":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        return True
    raise ValueError(f"unknown backend {backend!r}")
