"""
Heat kernel G of (d_t - Delta/2 + m^2) on the unit torus, its cut-off version
K = chi * G and the smooth remainder G - K.

The cutoff chi is a C^infinity function of the smooth parabolic gauge
rho(t, x) = 2^{3/4} (t^2 + |x|^4)^{1/4}, equal to 1 for rho <= 1/4 and 0 for
rho >= 1/2.  Since ||z||_s = |t|^{1/2} + |x| <= rho(z), K is supported in the
parabolic ball of radius 1/2 (in fact t <= 2^{-7/2} and |x| <= 2^{-7/4}), and
using a smooth gauge instead of ||.||_s keeps K smooth away from the origin.

Grid tables use the band-limited heat kernel G_n(t) = sum_{|k| resolvable}
e^{-t(m^2 + 2 pi^2 |k|^2)} e^{2 pi i k x}, so that convolving a grid field with
G_n(t) reproduces the spectral heat semigroup exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.fft as sfft

from .grid import GridSpec

CHI_INNER = 0.25
CHI_OUTER = 0.5
GAUGE_C = 2.0 ** 0.75
# largest time lag with chi > 0: GAUGE_C * sqrt(t) = 1/2
K_TIME_SUPPORT = (CHI_OUTER / GAUGE_C) ** 2
K_SPACE_SUPPORT = CHI_OUTER / GAUGE_C


def _smooth_step(s):
    """C^inf step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def parabolic_norm(t, x1, x2):
    """||z||_s = |t|^{1/2} + |x| (x already a minimum-image offset)."""
    return np.sqrt(np.abs(t)) + np.sqrt(np.asarray(x1) ** 2 + np.asarray(x2) ** 2)


def parabolic_gauge(t, x1, x2):
    r2 = np.asarray(x1) ** 2 + np.asarray(x2) ** 2
    return GAUGE_C * (np.asarray(t) ** 2 + r2 ** 2) ** 0.25


def cutoff_chi(t, x1, x2):
    """Smooth cutoff, zero for t <= 0."""
    t = np.asarray(t, dtype=float)
    rho = parabolic_gauge(t, x1, x2)
    chi = 1.0 - _smooth_step((rho - CHI_INNER) / (CHI_OUTER - CHI_INNER))
    return np.where(t > 0, chi, 0.0)


def _min_image(x):
    x = np.asarray(x, dtype=float)
    return x - np.round(x)


def kernel_G(t, x1, x2, m2: float = 1.0, eps_reg: float = 0.0):
    """
    Continuum periodic heat kernel by image summation,
    e^{-m^2 t} sum_{p in Z^2} (2 pi t)^{-1} exp(-|x + p|^2 / (2 t)) for t > 0, else 0.
    eps_reg > 0 evaluates at t + eps_reg^2 (a parabolic core regularization).
    """
    t = np.asarray(t, dtype=float)
    x1 = _min_image(x1)
    x2 = _min_image(x2)
    tt = np.where(t > 0, t + eps_reg ** 2, 1.0)
    R = int(math.ceil(6.0 * math.sqrt(float(np.max(tt))))) + 1
    acc = np.zeros(np.broadcast(tt, x1, x2).shape)
    for p1 in range(-R, R + 1):
        for p2 in range(-R, R + 1):
            acc = acc + np.exp(-((x1 + p1) ** 2 + (x2 + p2) ** 2) / (2 * tt))
    g = np.exp(-m2 * tt) * acc / (2 * math.pi * tt)
    return np.where(t > 0, g, 0.0)


def kernel_K(t, x1, x2, m2: float = 1.0, eps_reg: float = 0.0):
    return cutoff_chi(t, _min_image(x1), _min_image(x2)) * kernel_G(t, x1, x2, m2, eps_reg)


def kernel_G_minus_K(t, x1, x2, m2: float = 1.0, eps_reg: float = 0.0):
    chi = cutoff_chi(t, _min_image(x1), _min_image(x2))
    return (1.0 - chi) * kernel_G(t, x1, x2, m2, eps_reg)


# ---------------------------------------------------------------------------
# grid tables
# ---------------------------------------------------------------------------


def bandlimited_heat(grid: GridSpec, t: float, m2: float) -> np.ndarray:
    """G_n(t, x_i) on the grid in offset layout (index i <-> offset i*dx)."""
    lam = grid.heat_rate(m2)
    return sfft.ifft2(np.exp(-t * lam)).real * grid.n ** 2


def kernel_lags(dt: float) -> int:
    """Number of positive time lags on which K can be nonzero."""
    return int(math.ceil(K_TIME_SUPPORT / dt))


def _bump(s):
    """C^inf bump on (-1, 1)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    out[m] = np.exp(-1.0 / (1.0 - s[m] ** 2))
    return out


@dataclass
class KernelTable:
    """
    Real-space lag tables of K (or G, G-K) on a grid: ``real[j]`` is the kernel at
    time lag j*dt in offset layout; ``hat[j] = dx^2 * FFT(real[j])`` so that spatial
    convolution against a field is ``ifft(hat * fft(f))``.  Lag 0 is zero (causality).
    """

    grid: GridSpec
    m2: float
    kind: str
    real: np.ndarray
    hat: np.ndarray

    @property
    def lags(self) -> int:
        return self.real.shape[0] - 1

    @classmethod
    def build(cls, grid: GridSpec, m2: float, kind: str = "K", lags: Optional[int] = None,
              moment_corrected: bool = False) -> "KernelTable":
        if kind not in ("K", "G", "G-K"):
            raise ValueError(f"unknown kernel kind {kind!r}")
        J = kernel_lags(grid.dt) if lags is None else int(lags)
        X1, X2 = grid.torus_offsets()
        lam = grid.heat_rate(m2)
        n = grid.n
        real = np.zeros((J + 1, n, n))
        kreal = np.zeros((J + 1, n, n)) if moment_corrected else None
        for j in range(1, J + 1):
            t = j * grid.dt
            g = sfft.ifft2(np.exp(-t * lam)).real * n ** 2
            if kind == "G":
                real[j] = g
            else:
                chi = cutoff_chi(t, X1, X2)
                real[j] = chi * g if kind == "K" else (1.0 - chi) * g
                if kreal is not None:
                    kreal[j] = chi * g
        if moment_corrected:
            if kind == "G":
                raise ValueError("moment correction applies to K and G-K only")
            corr = _moment_correction(grid, kreal, m2)
            real += -corr if kind == "K" else corr
        hat = sfft.fft2(real, axes=(1, 2)) * grid.dx ** 2
        return cls(grid, m2, kind, real, hat)

    def derivative(self, axis: int) -> "KernelTable":
        """Spectral spatial derivative D_{x_axis} of the table (axis in {1, 2})."""
        k1, k2 = self.grid.wavenumbers()
        kk = (k1 if axis == 1 else k2).copy()
        kk[np.abs(kk) == self.grid.n // 2] = 0.0  # keep the table real: drop the Nyquist derivative
        hat = self.hat * (2j * math.pi * kk)[None]
        real = sfft.ifft2(hat, axes=(1, 2)).real / self.grid.dx ** 2
        return KernelTable(self.grid, self.m2, f"D{axis}{self.kind}", real, hat)

    def times_field(self, w: np.ndarray, kind: str) -> "KernelTable":
        """Pointwise product with a lag table w of the same shape (e.g. K * J^-)."""
        real = self.real * w[: self.real.shape[0]]
        hat = sfft.fft2(real, axes=(1, 2)) * self.grid.dx ** 2
        return KernelTable(self.grid, self.m2, kind, real, hat)


def _moment_correction(grid: GridSpec, Kreal: np.ndarray, m2: float) -> np.ndarray:
    """
    Smooth compactly supported P = sum_a c_a phi_a whose discrete moments against
    1, t and x_1^2 match those of K, so that K - P has vanishing moments of
    parabolic degree <= 2 (odd moments vanish by symmetry).
    """
    J = Kreal.shape[0] - 1
    X1, X2 = grid.torus_offsets()
    r2 = X1 ** 2 + X2 ** 2
    t = np.arange(J + 1)[:, None, None] * grid.dt
    tmid, thw = 0.5 * K_TIME_SUPPORT, 0.35 * K_TIME_SUPPORT
    base = _bump((t - tmid) / thw) * _bump(np.sqrt(r2) / (0.8 * K_SPACE_SUPPORT))[None]
    phis = [base, base * t, base * r2[None]]
    w = grid.dt * grid.dx ** 2
    mom = lambda f: np.array([np.sum(f) * w, np.sum(f * t) * w, np.sum(f * X1[None] ** 2) * w])
    A = np.stack([mom(p) for p in phis], axis=1)
    c = np.linalg.solve(A, mom(Kreal))
    return sum(ci * p for ci, p in zip(c, phis))


def causal_convolve(table: KernelTable, f: np.ndarray, history: str = "constant",
                    f_hat: Optional[np.ndarray] = None) -> np.ndarray:
    """
    (k * f)(t_i, x) = dt * sum_{j=1}^{J} sum_y k(j dt, x - y) f(t_{i-j}, y) dx^2.

    ``history`` fixes f before the first frame: "constant" (frame 0 repeated),
    "zero", or "periodic" (f is one period of a time-periodic field).
    Returns an array shaped like f (complex if f or the kernel is complex).
    """
    M = f.shape[0]
    J = table.lags
    dt = table.grid.dt
    fh = sfft.fft2(f, axes=(1, 2)) if f_hat is None else f_hat
    if history == "periodic":
        if J >= M:
            khat = np.zeros((M,) + table.hat.shape[1:], dtype=complex)
            for j in range(J + 1):
                khat[j % M] += table.hat[j]
        else:
            khat = np.zeros((M,) + table.hat.shape[1:], dtype=complex)
            khat[: J + 1] = table.hat
        out = sfft.ifft(sfft.fft(khat, axis=0) * sfft.fft(fh, axis=0), axis=0)
    else:
        if history == "constant":
            pad = np.repeat(fh[:1], J, axis=0)
        elif history == "zero":
            pad = np.zeros((J,) + fh.shape[1:], dtype=fh.dtype)
        else:
            raise ValueError(f"unknown history mode {history!r}")
        g = np.concatenate([pad, fh], axis=0)
        L = sfft.next_fast_len(g.shape[0] + J + 1)
        out = sfft.ifft(sfft.fft(table.hat, n=L, axis=0) * sfft.fft(g, n=L, axis=0), axis=0)
        out = out[J: J + M]
    res = sfft.ifft2(out, axes=(1, 2)) * dt
    if not np.iscomplexobj(f) and not np.iscomplexobj(table.real):
        return res.real
    return res
