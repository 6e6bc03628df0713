"""Result records shared by the experiment drivers."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


@dataclass
class MomentRecord:
    tree: str
    theta_id: str
    lam: float
    p: int
    samples: int
    moment: float  # empirical E|<Pi tau, psi^lam>|^{2p}
    stderr: float
    eps: float = float("nan")
    seed: int = 0
    envelope_violations: int = -1  # samples with |<Pi Xi, psi>| > <|xi|, |psi|> (monopoles only)


@dataclass
class ScalingFit:
    slope: float
    intercept: float
    slope_stderr: float
    r2: float
    lambdas: tuple = ()
    target: Optional[float] = None
    tolerance: Optional[float] = None

    @property
    def passed(self) -> Optional[bool]:
        if self.target is None or self.tolerance is None:
            return None
        return self.within(self.target, self.tolerance)

    def within(self, target: float, tol: float) -> bool:
        return abs(self.slope - target) <= tol


def fit_loglog(x: Sequence[float], y: Sequence[float], weights: Optional[Sequence[float]] = None) -> ScalingFit:
    """Least-squares slope of log y against log x (weights are 1/variance of log y)."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    if len(lx) < 2:
        raise ValueError("a scaling fit needs at least two points")
    w = np.ones_like(lx) if weights is None else np.asarray(weights, dtype=float)
    W = np.sum(w)
    mx, my = np.sum(w * lx) / W, np.sum(w * ly) / W
    sxx = np.sum(w * (lx - mx) ** 2)
    slope = float(np.sum(w * (lx - mx) * (ly - my)) / sxx)
    icpt = float(my - slope * mx)
    resid = ly - (icpt + slope * lx)
    dof = max(len(lx) - 2, 1)
    if weights is None:
        se = math.sqrt(float(np.sum(resid ** 2)) / dof / sxx) if len(lx) > 2 else 0.0
    else:
        se = math.sqrt(1.0 / sxx)
    tot = float(np.sum(w * (ly - my) ** 2))
    r2 = 1.0 - float(np.sum(w * resid ** 2)) / tot if tot > 0 else 1.0
    return ScalingFit(slope, icpt, se, r2)


@dataclass
class ExperimentReport:
    name: str
    rows: list = field(default_factory=list)
    fit: Optional[ScalingFit] = None
    target: Optional[float] = None
    tolerance: Optional[float] = None
    passed: Optional[bool] = None
    notes: dict = field(default_factory=dict)

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if not self.rows:
            path.write_text("")
            return path
        first = self.rows[0]
        cols = list(asdict(first).keys()) if hasattr(first, "__dataclass_fields__") else list(first.keys())
        with path.open("w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=cols)
            wr.writeheader()
            for r in self.rows:
                wr.writerow(asdict(r) if hasattr(r, "__dataclass_fields__") else r)
        return path

    def summary(self) -> str:
        s = f"{self.name}:"
        if self.fit is not None:
            s += f" slope={self.fit.slope:.4f} (se {self.fit.slope_stderr:.3g})"
        if self.target is not None:
            s += f" target={self.target:.4f}"
        if self.tolerance is not None:
            s += f" tol={self.tolerance:.3g}"
        if self.passed is not None:
            s += " PASS" if self.passed else " FAIL"
        return s
