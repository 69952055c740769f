"""Machine-readable check records and reports."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import __version__


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else str(v)


@dataclass
class Check:
    """One statistic with its pass flag; ``threshold`` is how the flag was decided."""

    statistic: str
    estimate: float
    stderr: float | None
    threshold: str
    passed: bool
    extra: dict[str, Any] = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {"statistic": self.statistic, "estimate": _num(self.estimate),
               "stderr": _num(self.stderr), "threshold": self.threshold, "pass": bool(self.passed)}
        rec.update({k: (_num(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v)
                    for k, v in self.extra.items()})
        return rec


def within(statistic: str, est, sigma: float, target: float = 0.0, **extra) -> Check:
    """Passes when ``|estimate - target| <= sigma * stderr``."""
    e, s = float(est.estimate), float(est.stderr)
    ok = abs(e - target) <= sigma * (0.0 if math.isnan(s) else s)
    return Check(statistic, e, s, f"|estimate - {target:g}| <= {sigma:g} stderr", ok, dict(extra))


def at_least(statistic: str, est, sigma: float, bound: float = 0.0, **extra) -> Check:
    """Passes when ``estimate >= bound - sigma * stderr``."""
    e, s = float(est.estimate), float(est.stderr)
    ok = e >= bound - sigma * (0.0 if math.isnan(s) else s)
    return Check(statistic, e, s, f"estimate >= {bound:g} - {sigma:g} stderr", ok, dict(extra))


@dataclass
class Report:
    command: str
    config_hash: str
    checks: list[Check] = field(default_factory=list)
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def to_record(self) -> dict:
        return {"command": self.command, "version": __version__, "config_hash": self.config_hash,
                "pass": self.passed, "checks": [c.to_record() for c in self.checks], "info": self.info}

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_record(), indent=2, sort_keys=False) + "\n")
        return path
