"""Pair potentials.

Every potential is an immutable, isotropic function of the displacement
``r`` between two points.  It carries a finite interaction cutoff (beyond
which it is exactly zero), a positivity flag, and the radii at which it
jumps, which the quadrature code uses as breakpoints.

All shipped variants are nonnegative, so ``exp(-phi) <= 1`` and the free
birth-death process dominates the interacting one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, ClassVar, Mapping

import numpy as np

from .errors import ModelError

# integer codes understood by the compiled kernel
ZERO, STRAUSS, HARDCORE, SOFTGAUSSIAN = 0, 1, 2, 3

GAUSSIAN_TAIL = 1e-12


def ball_volume(d: int, radius: float) -> float:
    """Lebesgue measure of a d-dimensional ball."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * radius**d


@dataclass(frozen=True)
class PairPotential:
    kind: ClassVar[str] = "abstract"
    code: ClassVar[int] = -1

    @property
    def cutoff(self) -> float:
        raise NotImplementedError

    @property
    def positive(self) -> bool:
        return True

    @property
    def jump_radii(self) -> tuple[float, ...]:
        return ()

    @property
    def piecewise_constant(self) -> bool:
        return False

    def radial(self, r):
        """Potential as a function of the distance ``|r|`` (vectorized)."""
        raise NotImplementedError

    def evaluate(self, displacement):
        """phi(r) for a displacement vector, or an array of them along the last axis."""
        disp = np.asarray(displacement, dtype=float)
        if disp.ndim == 0:
            r = np.abs(disp)
        else:
            r = np.sqrt(np.sum(disp * disp, axis=-1))
        out = self.radial(r)
        return float(out) if np.ndim(out) == 0 else out

    def kernel_params(self) -> tuple[int, float, float, float]:
        """(code, p0, p1, cutoff) for the compiled kernels."""
        raise NotImplementedError

    def delta_closed_form(self, z: float, d: int) -> float | None:
        return None

    def to_record(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(PairPotential):
    kind: ClassVar[str] = "zero"
    code: ClassVar[int] = ZERO

    @property
    def cutoff(self) -> float:
        return 0.0

    @property
    def piecewise_constant(self) -> bool:
        return True

    def radial(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def kernel_params(self):
        return (ZERO, 0.0, 0.0, 0.0)

    def delta_closed_form(self, z, d):
        return 0.0

    def to_record(self):
        return {"type": "zero"}


@dataclass(frozen=True)
class Strauss(PairPotential):
    """Step potential ``beta * 1[|r| < range]`` (open ball)."""

    beta: float
    range: float
    kind: ClassVar[str] = "strauss"
    code: ClassVar[int] = STRAUSS

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ModelError(f"strauss beta must be positive and finite, got {self.beta}")
        if not (self.range > 0 and math.isfinite(self.range)):
            raise ModelError(f"strauss range must be positive and finite, got {self.range}")

    @property
    def cutoff(self) -> float:
        return self.range

    @property
    def jump_radii(self):
        return (self.range,)

    @property
    def piecewise_constant(self) -> bool:
        return True

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.range, self.beta, 0.0)

    def kernel_params(self):
        return (STRAUSS, self.beta, self.range, self.range)

    def delta_closed_form(self, z, d):
        return z * (1.0 - math.exp(-self.beta)) * ball_volume(d, self.range)

    def to_record(self):
        return {"type": "strauss", "beta": self.beta, "range": self.range}


@dataclass(frozen=True)
class HardCore(PairPotential):
    """``+inf`` inside the open ball of radius ``range``, zero outside."""

    range: float
    kind: ClassVar[str] = "hardcore"
    code: ClassVar[int] = HARDCORE

    def __post_init__(self):
        if not (self.range > 0 and math.isfinite(self.range)):
            raise ModelError(f"hardcore range must be positive and finite, got {self.range}")

    @property
    def cutoff(self) -> float:
        return self.range

    @property
    def jump_radii(self):
        return (self.range,)

    @property
    def piecewise_constant(self) -> bool:
        return True

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.range, np.inf, 0.0)

    def kernel_params(self):
        return (HARDCORE, 0.0, self.range, self.range)

    def delta_closed_form(self, z, d):
        return z * ball_volume(d, self.range)

    def to_record(self):
        return {"type": "hardcore", "range": self.range}


@dataclass(frozen=True)
class SoftGaussian(PairPotential):
    """``theta * exp(-|r|^2 / (2 sigma^2))``, truncated where it drops below 1e-12."""

    theta: float
    sigma: float
    kind: ClassVar[str] = "softgaussian"
    code: ClassVar[int] = SOFTGAUSSIAN

    def __post_init__(self):
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise ModelError(f"softgaussian theta must be positive and finite, got {self.theta}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ModelError(f"softgaussian sigma must be positive and finite, got {self.sigma}")

    @property
    def cutoff(self) -> float:
        if self.theta <= GAUSSIAN_TAIL:
            return 0.0
        return self.sigma * math.sqrt(2.0 * math.log(self.theta / GAUSSIAN_TAIL))

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        val = self.theta * np.exp(-(r * r) / (2.0 * self.sigma**2))
        return np.where(r < self.cutoff, val, 0.0)

    def kernel_params(self):
        return (SOFTGAUSSIAN, self.theta, self.sigma, self.cutoff)

    def to_record(self):
        return {"type": "softgaussian", "theta": self.theta, "sigma": self.sigma}


_REGISTRY = {cls.kind: cls for cls in (Zero, Strauss, HardCore, SoftGaussian)}
_FIELDS = {
    "zero": (),
    "strauss": ("beta", "range"),
    "hardcore": ("range",),
    "softgaussian": ("theta", "sigma"),
}


def from_record(record: Mapping[str, Any]) -> PairPotential:
    """Build a potential from a tagged record such as ``{"type": "strauss", "beta": 1, "range": 0.5}``."""
    if "type" not in record:
        raise ModelError("potential record is missing field 'type'")
    kind = str(record["type"]).lower()
    if kind not in _REGISTRY:
        raise ModelError(f"unknown potential type {kind!r}; expected one of {sorted(_REGISTRY)}")
    kwargs = {}
    for name in _FIELDS[kind]:
        if name not in record:
            raise ModelError(f"potential record of type {kind!r} is missing field {name!r}")
        kwargs[name] = float(record[name])
    extra = set(record) - {"type", *_FIELDS[kind]}
    if extra:
        raise ModelError(f"unexpected field(s) {sorted(extra)} for potential type {kind!r}")
    return _REGISTRY[kind](**kwargs)
