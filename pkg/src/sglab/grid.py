"""
Discretization of R x T^2 with the unit torus.

Fields are stored as numpy arrays.  A spatial snapshot is an (n, n) array,
a space-time field is an (frames, n, n) array whose frame k sits at time
t0 + k*dt.  The small wrapper types below only carry the metadata needed to
keep grids, times and parameters consistent between modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid: n points per spatial direction on the unit torus, frames t0 + k*dt, k=0..steps."""

    n: int
    dt: float
    t0: float = 0.0
    steps: int = 1

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and _is_pow2(int(self.n)) and self.n >= 8):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.steps) < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")

    @property
    def dx(self) -> float:
        return 1.0 / self.n

    @property
    def frames(self) -> int:
        return self.steps + 1

    @property
    def T(self) -> float:
        return self.steps * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.frames)

    def coords(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer wavenumbers (k1, k2) broadcast to (n, n)."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        return np.meshgrid(k, k, indexing="ij")

    def k_abs(self) -> np.ndarray:
        k1, k2 = self.wavenumbers()
        return np.sqrt(k1 ** 2 + k2 ** 2)

    def heat_rate(self, m2: float) -> np.ndarray:
        """Per-mode decay rate m^2 + |2 pi k|^2 / 2 of the operator -(-m^2 + Delta/2)."""
        k1, k2 = self.wavenumbers()
        return m2 + 2.0 * math.pi ** 2 * (k1 ** 2 + k2 ** 2)

    def with_steps(self, steps: int, t0: Optional[float] = None) -> "GridSpec":
        return replace(self, steps=int(steps), t0=self.t0 if t0 is None else t0)

    def refined_time(self, factor: int = 2) -> "GridSpec":
        return replace(self, dt=self.dt / factor, steps=self.steps * factor)

    def torus_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Minimum-image signed offsets of grid points from the origin, shape (n, n) each."""
        x = self.coords()
        x = np.where(x >= 0.5, x - 1.0, x)
        return np.meshgrid(x, x, indexing="ij")


@dataclass
class FieldSnapshot:
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("snapshot values must be a square (n, n) array")
        if not np.all(np.isfinite(v)):
            raise ValueError("snapshot contains non-finite entries")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class SpaceTimeField:
    grid: GridSpec
    values: np.ndarray  # shape (grid.frames, n, n)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.grid.frames, self.grid.n, self.grid.n):
            raise ValueError(
                f"values shape {v.shape} does not match grid "
                f"({self.grid.frames}, {self.grid.n}, {self.grid.n})"
            )
        self.values = v

    def times(self) -> np.ndarray:
        return self.grid.times()

    def frame(self, k: int) -> FieldSnapshot:
        return FieldSnapshot(self.values[k], float(self.grid.t0 + k * self.grid.dt))

    def __iter__(self):
        for k in range(self.grid.frames):
            yield self.frame(k)

    def is_real(self, tol: float = 0.0) -> bool:
        if not np.iscomplexobj(self.values):
            return True
        return float(np.max(np.abs(self.values.imag), initial=0.0)) <= tol

    def like(self, values: np.ndarray) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, values)

    @classmethod
    def zeros(cls, grid: GridSpec, dtype=float) -> "SpaceTimeField":
        return cls(grid, np.zeros((grid.frames, grid.n, grid.n), dtype=dtype))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "SpaceTimeField":
        t = grid.times()[:, None, None]
        x = grid.coords()
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        return cls(grid, np.asarray(fn(t, X1[None], X2[None])) * np.ones((grid.frames, 1, 1)))


PI = math.pi
BETA2_MAX = 6.0 * math.pi


@dataclass(frozen=True)
class ModelParams:
    """beta^2 (absolute), m^2, eps and the derived exponents kappa, beta_bar, mu, eta."""

    beta2: float
    m2: float = 1.0
    eps: float = 2.0 ** -4
    eta: Optional[float] = None
    kappa: float = field(init=False)
    beta_bar: float = field(init=False)
    mu: float = field(init=False)

    def __post_init__(self):
        if not (0.0 <= self.beta2 < BETA2_MAX):
            raise ValueError(
                f"unsupported regime: beta^2/pi = {self.beta2 / PI:.6g}; scope is 0 < beta^2 < 6 pi"
            )
        if not self.m2 > 0:
            raise ValueError(f"m^2 must be positive, got {self.m2}")
        if not (0 < self.eps <= 1):
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")
        kappa = 1e-3 * (BETA2_MAX - self.beta2)
        beta_bar = self.beta2 / (4 * PI) + kappa
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "beta_bar", beta_bar)
        object.__setattr__(self, "mu", beta_bar + kappa)
        lo = beta_bar / 2 - 1
        if self.eta is None:
            object.__setattr__(self, "eta", lo / 2)
        elif not (lo < self.eta < 0):
            raise ValueError(
                f"eta = {self.eta} outside the admissible interval ({lo:.6g}, 0) = (beta_bar/2 - 1, 0)"
            )

    @property
    def beta(self) -> float:
        return math.sqrt(self.beta2)

    @classmethod
    def from_beta2_pi(cls, beta2_pi: float, **kw) -> "ModelParams":
        return cls(beta2=beta2_pi * PI, **kw)

    def with_(self, **kw) -> "ModelParams":
        d = dict(beta2=self.beta2, m2=self.m2, eps=self.eps, eta=self.eta)
        if "beta2" in kw and "eta" not in kw:
            d["eta"] = None  # re-derive the default for the new beta^2
        d.update(kw)
        return ModelParams(**d)
