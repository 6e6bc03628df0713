"""
Space-time white noise on grid cells and the mollifier rho_eps.

Noise cell (k, i, j) covers [t_k, t_k + dt) x (square of side dx centred at
x_{ij}); its value is the cell average of white noise, hence N(0, 1/(dt dx^2)).

Random streams use a counter-based generator (Philox) keyed by
(master seed, replica index, stream id), so any replica can be regenerated
on its own and in any order.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft as sfft

from .grid import GridSpec, SpaceTimeField

STREAM_NOISE = 0
STREAM_AUX = 1


@dataclass(frozen=True)
class SeedLineage:
    master: int
    replica: int = 0
    stream: int = STREAM_NOISE

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.master), spawn_key=(int(self.replica), int(self.stream)))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, replica: int, stream: Optional[int] = None) -> "SeedLineage":
        return SeedLineage(self.master, replica, self.stream if stream is None else stream)


def fresh_master_seed() -> int:
    return int(np.random.SeedSequence().entropy % (2 ** 63))


@dataclass
class NoiseRealization:
    lineage: SeedLineage
    zeta: SpaceTimeField
    zeta_eps: Optional[SpaceTimeField] = None


def sample_white_noise(grid: GridSpec, lineage: SeedLineage) -> NoiseRealization:
    """iid N(0, 1/(dt dx^2)) per space-time cell, one cell per frame of ``grid``."""
    rng = lineage.generator()
    sd = 1.0 / math.sqrt(grid.dt * grid.dx ** 2)
    z = rng.standard_normal((grid.frames, grid.n, grid.n)) * sd
    return NoiseRealization(lineage, SpaceTimeField(grid, z))


def coarsen_noise_time(zeta: np.ndarray, factor: int) -> np.ndarray:
    """Cell averages on a grid with dt*factor from cell averages at dt (exact coupling)."""
    M = (zeta.shape[0] // factor) * factor
    return zeta[:M].reshape(M // factor, factor, *zeta.shape[1:]).mean(axis=1)


def coarsen_noise_space(zeta: np.ndarray, factor: int) -> np.ndarray:
    """
    Spatial cell averages on an n/factor grid.  Cells are centred at grid points,
    so the coarse cell centred at x_{I} collects the fine cells with offsets
    -factor/2 .. factor/2 - 1 around it, which needs an even factor.
    """
    if factor == 1:
        return zeta
    if factor % 2:
        raise ValueError("spatial coarsening factor must be even")
    z = np.roll(zeta, factor // 2, axis=(-2, -1))
    n = z.shape[-1]
    m = n // factor
    return z.reshape(*z.shape[:-2], m, factor, m, factor).mean(axis=(-3, -1))


# ---------------------------------------------------------------------------
# mollifier
# ---------------------------------------------------------------------------


def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    out[m] = np.exp(-1.0 / (1.0 - s[m] ** 2))
    return out


@dataclass(frozen=True)
class MollifierSpec:
    """
    rho(t, x) = b(t) B(|x|): b a bump on (-t_support, 0), B a radial bump on |x| < x_support.
    With t_support = 1/4 and x_support = 1/2 the support sits in the parabolic unit
    ball (sqrt(1/4) + 1/2 = 1) at strictly negative times.  Discretely the kernel is
    cell-averaged and renormalized to mass one.
    """

    profile: str = "product-bump"
    t_support: float = 0.25
    x_support: float = 0.5
    subsamples: int = 12

    def __post_init__(self):
        if self.profile != "product-bump":
            raise ValueError(f"unknown mollifier profile {self.profile!r}")
        if math.sqrt(self.t_support) + self.x_support > 1 + 1e-12:
            raise ValueError("mollifier support must lie in the parabolic unit ball")

    def density(self, t, x1, x2):
        t = np.asarray(t, dtype=float)
        bt = _bump((t + self.t_support / 2) / (self.t_support / 2))
        bx = _bump(np.sqrt(np.asarray(x1) ** 2 + np.asarray(x2) ** 2) / self.x_support)
        return np.where(t < 0, bt * bx, 0.0)

    def content_hash(self) -> str:
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


DEFAULT_RHO = MollifierSpec()


def min_resolvable_eps(grid: GridSpec) -> float:
    return 2.0 * max(grid.dx, math.sqrt(grid.dt))


def mollifier_lookahead(rho: MollifierSpec, eps: float, dt: float) -> int:
    """Number of noise cells (the current one included) that rho_eps reads ahead."""
    return max(1, int(math.ceil(rho.t_support * eps ** 2 / dt - 1e-12)))


def mollifier_table(grid: GridSpec, rho: MollifierSpec, eps: float) -> np.ndarray:
    """
    Discrete weights w[l, x] (l = 0..L-1, offset layout in x): cell average of rho_eps
    over time lags (l dt, (l+1) dt] into the future and the spatial cell at offset x.
    Normalized so that sum w dt dx^2 = 1.
    """
    if eps < min_resolvable_eps(grid) - 1e-15:
        raise ValueError(
            f"eps = {eps:.6g} is below the resolvable scale; minimum admissible eps is "
            f"{min_resolvable_eps(grid):.6g} (= 2 max(dx, sqrt(dt)))"
        )
    Lt = mollifier_lookahead(rho, eps, grid.dt)
    n, dx, dt = grid.n, grid.dx, grid.dt
    S = rho.subsamples
    sub = (np.arange(S) + 0.5) / S - 0.5  # sub-cell offsets in units of dx
    X1, X2 = grid.torus_offsets()
    w = np.zeros((Lt, n, n))
    # only offsets within reach of the spatial support matter
    reach = rho.x_support * eps + dx
    near = np.sqrt(X1 ** 2 + X2 ** 2) <= reach
    idx = np.argwhere(near)
    xs1 = X1[near][:, None, None] + sub[None, :, None] * dx
    xs2 = X2[near][:, None, None] + sub[None, None, :] * dx
    St = 8 * S
    for l in range(Lt):
        ts = -(l + (np.arange(St) + 0.5) / St) * dt  # rho_eps evaluated at t - s, s in future cell
        acc = np.zeros(len(idx))
        for tv in ts:
            acc += rho.density(tv / eps ** 2, xs1 / eps, xs2 / eps).mean(axis=(1, 2))
        w[l][near] = acc / St
    mass = w.sum() * dt * dx ** 2
    if mass <= 0:
        raise ValueError("mollifier is not resolved on this grid")
    return w / mass


def mollify(zeta: SpaceTimeField, rho: MollifierSpec, eps: float, periodic: bool = False) -> SpaceTimeField:
    """
    zeta_eps(t_k) = sum_{l, y} w[l, x - y] zeta[k + l, y] dt dx^2.

    zeta_eps(t_k, .) reads noise cells k .. k+L-1, i.e. times in [t_k, t_k + L dt),
    never the past.  Without ``periodic`` the last L-1 frames have no complete
    future and are dropped: the result lives on a grid with steps - (L-1).
    """
    g = zeta.grid
    w = mollifier_table(g, rho, eps)
    Lt = w.shape[0]
    what = sfft.fft2(w, axes=(1, 2)) * g.dx ** 2
    zh = sfft.fft2(zeta.values, axes=(1, 2))
    M = g.frames if periodic else g.frames - (Lt - 1)
    if M < 2:
        raise ValueError("noise window too short for the mollifier look-ahead")
    acc = np.zeros((M, g.n, g.n), dtype=complex)
    for l in range(Lt):
        if periodic:
            acc += what[l] * np.roll(zh, -l, axis=0)
        else:
            acc += what[l] * zh[l: l + M]
    out = sfft.ifft2(acc, axes=(1, 2)).real * g.dt
    return SpaceTimeField(g.with_steps(M - 1), out)


def mollifier_hat(grid: GridSpec, rho: MollifierSpec, eps: float) -> np.ndarray:
    """Spatial transforms dt * dx^2 * FFT(w[l]) of the mollifier lag table."""
    w = mollifier_table(grid, rho, eps)
    return sfft.fft2(w, axes=(1, 2)) * grid.dx ** 2 * grid.dt
