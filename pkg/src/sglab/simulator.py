"""
The regularized sine-Gordon dynamics

    (d_t - Delta/2 + m^2) u = C sin(beta u) + zeta_eps,   u(0) = u0_eps,

stepped per Fourier mode by exponential Euler: the linear part is exact, the
renormalized sine and the mollified noise are frozen over each step.  Long
horizons are cut into unit windows; the state and the mollifier look-ahead are
carried across window boundaries.

Also here: the Ansatz split u = Phi + theta - G Phi(t0) + w with its w-equation
residual, the exact Gaussian oracles for beta = 0, the global-bound /
memory-loss experiment and the eps-convergence study.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .gmc import GmcBundle, build_gmc, q_zero_streaming, renorm_constant
from .grid import FieldSnapshot, GridSpec, ModelParams, SpaceTimeField
from .noise import (DEFAULT_RHO, MollifierSpec, NoiseRealization, SeedLineage, min_resolvable_eps,
                    mollifier_hat, mollifier_lookahead, mollify, sample_white_noise)
from .reports import ExperimentReport, fit_loglog
from .spectral import besov_norm, besov_norm_frames, heat_semigroup

BLOWUP_THRESHOLD = 1e6
WINDOW = 1.0
NOISE_BLOCK_BYTES = 2.5e8  # cap on one block of mollified noise transforms


def mollify_initial(u0, eps: float) -> np.ndarray:
    """u0_eps = e^{eps^2 Delta / 2} u0 (heat smoothing at the parabolic scale eps)."""
    return np.asarray(heat_semigroup(np.asarray(u0, dtype=float), eps ** 2, 0.0))


def _rates(n: int, m2: float) -> np.ndarray:
    """m^2 + |2 pi k|^2 / 2 on the rfft2 half-plane."""
    k1 = np.fft.fftfreq(n, d=1.0 / n)[:, None]
    k2 = np.fft.rfftfreq(n, d=1.0 / n)[None, :]
    return m2 + 2.0 * math.pi ** 2 * (k1 ** 2 + k2 ** 2)


@dataclass
class _Stepper:
    n: int
    dt: float
    m2: float
    a: np.ndarray = field(init=False)
    phi1: np.ndarray = field(init=False)
    phi2: np.ndarray = field(init=False)

    def __post_init__(self):
        lam = _rates(self.n, self.m2)
        h = self.dt
        self.a = np.exp(-lam * h)
        self.phi1 = -np.expm1(-lam * h) / lam  # int_0^h e^{-lam (h-s)} ds
        self.phi2 = (h - self.phi1) / (lam * h)  # (1/h) int_0^h e^{-lam (h-s)} s ds


def renorm_for(n: int, dt: float, params: ModelParams, rho: MollifierSpec = DEFAULT_RHO) -> float:
    return renorm_constant(params.beta2, q_zero_streaming(n, dt, params.m2, params.eps, rho))


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------


@dataclass
class SgRun:
    params: ModelParams
    noise: NoiseRealization
    u: SpaceTimeField
    zeta_eps: SpaceTimeField
    u0: FieldSnapshot  # the mollified initial datum actually used
    c_renorm: float
    blew_up: bool = False
    blowup_time: float = float("nan")
    scheme: dict = field(default_factory=dict)

    @property
    def grid(self) -> GridSpec:
        return self.u.grid


def make_noise(n: int, dt: float, T: float, params: ModelParams, lineage: SeedLineage,
               rho: MollifierSpec = DEFAULT_RHO) -> NoiseRealization:
    """Raw white noise on [0, T] plus the mollifier look-ahead past T."""
    steps = int(round(T / dt))
    extra = mollifier_lookahead(rho, params.eps, dt)
    return sample_white_noise(GridSpec(n, dt, 0.0, steps + extra), lineage)


def solve_regularized_sg(u0, noise: NoiseRealization, params: ModelParams, T: float,
                         scheme: str = "exp-euler", rho: MollifierSpec = DEFAULT_RHO,
                         mollify_u0: bool = True, c_renorm: Optional[float] = None) -> SgRun:
    """
    One path on [0, T] driven by ``noise`` (raw cells; mollified here unless
    ``noise.zeta_eps`` is already set).  Blow-up (sup |u| > 1e6) stops the run and
    is reported on the result, never raised.
    """
    if scheme != "exp-euler":
        raise ValueError(f"unknown scheme {scheme!r}; only 'exp-euler' is implemented")
    g0 = noise.zeta.grid
    n, dt = g0.n, g0.dt
    if params.eps < min_resolvable_eps(g0) - 1e-15:
        raise ValueError(f"eps = {params.eps:.6g} is not resolvable on n={n}, dt={dt:.4g}; "
                         f"need eps >= {min_resolvable_eps(g0):.6g}")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T = {T} is not a positive multiple of dt = {dt}")
    if noise.zeta_eps is None:
        noise.zeta_eps = mollify(noise.zeta, rho, params.eps)
    ze = noise.zeta_eps.values
    if ze.shape[0] < steps + 1:
        raise ValueError(f"noise covers {ze.shape[0] - 1} steps, the run needs {steps}")
    u0 = np.asarray(u0.values if isinstance(u0, FieldSnapshot) else u0, dtype=float)
    if u0.shape != (n, n):
        raise ValueError(f"u0 has shape {u0.shape}, grid is {n}x{n}")
    u0e = mollify_initial(u0, params.eps) if mollify_u0 else u0.copy()
    c = renorm_for(n, dt, params, rho) if c_renorm is None else c_renorm
    st = _Stepper(n, dt, params.m2)
    beta = params.beta
    grid = GridSpec(n, dt, 0.0, steps)
    u = np.zeros((steps + 1, n, n))
    u[0] = u0e
    uh = sfft.rfft2(u0e)
    blew, t_blow = False, float("nan")
    for k in range(steps):
        F = sfft.rfft2(c * np.sin(beta * u[k]) + ze[k]) if beta else sfft.rfft2(ze[k])
        uh = st.a * uh + st.phi1 * F
        u[k + 1] = sfft.irfft2(uh, s=(n, n))
        if not np.isfinite(u[k + 1]).all() or np.max(np.abs(u[k + 1])) > BLOWUP_THRESHOLD:
            blew, t_blow = True, (k + 1) * dt
            u[k + 2:] = np.nan
            break
    return SgRun(params, noise, SpaceTimeField(grid, u), SpaceTimeField(grid, ze[: steps + 1].copy()),
                 FieldSnapshot(u0e, 0.0), c, blew, t_blow,
                 dict(integrator="exponential Euler", order=1, dt=dt, n=n, rho=rho.content_hash()))


# ---------------------------------------------------------------------------
# beta = 0 oracles
# ---------------------------------------------------------------------------


def ou_pathwise_oracle(run: SgRun) -> np.ndarray:
    """
    Exact per-mode solution of the linear equation (beta = 0) driven by the
    piecewise-linear interpolant of the same zeta_eps frames.  The solver freezes
    the forcing instead, so the two differ by O(dt).
    """
    g = run.grid
    st = _Stepper(g.n, g.dt, run.params.m2)
    zh = sfft.rfft2(run.zeta_eps.values)
    out = np.zeros_like(run.u.values)
    uh = sfft.rfft2(run.u0.values)
    out[0] = run.u0.values
    for k in range(g.steps):
        uh = st.a * uh + st.phi1 * zh[k] + st.phi2 * (zh[k + 1] - zh[k])
        out[k + 1] = sfft.irfft2(uh, s=(g.n, g.n))
    return out


def ou_variance_oracle(n: int, dt: float, params: ModelParams, steps: Optional[int] = None,
                       rho: MollifierSpec = DEFAULT_RHO) -> float:
    """
    E ||u(t_K)||_{L^2}^2 for the beta = 0 scheme from u0 = 0 (K = ``steps``; None
    is the stationary limit).  Per mode the scheme is u_{k+1} = a u_k + phi1 eta_k
    with eta a moving average of iid cells, so

        E|u_K|^2 = phi1^2 sum_h gamma(h) a^|h| (1 - a^{2(K - |h|)}) / (1 - a^2).
    """
    g = GridSpec(n, dt, 0.0, 1)
    H = mollifier_hat(g, rho, params.eps)  # (Lt, n, n)
    Lt = H.shape[0]
    lam = g.heat_rate(params.m2)
    a = np.exp(-lam * dt)
    phi1 = -np.expm1(-lam * dt) / lam
    var_cell = n ** 2 / (dt * g.dx ** 2)  # E|fft2 of one raw frame|^2 per mode
    tot = np.zeros((n, n))
    for h in range(-(Lt - 1), Lt):
        gam = np.zeros((n, n), dtype=complex)
        for l in range(Lt):
            if 0 <= l + h < Lt:
                gam += H[l] * np.conj(H[l + h])
        gam = (gam * var_cell).real
        if steps is None:
            w = a ** abs(h) / (1 - a ** 2)
        else:
            if steps - abs(h) <= 0:
                continue
            w = a ** abs(h) * (1 - a ** (2 * (steps - abs(h)))) / (1 - a ** 2)
        tot += gam * w
    return float(np.sum(phi1 ** 2 * tot) / n ** 4)


def continuum_stationary_l2(n: int, params: ModelParams, rho: MollifierSpec = DEFAULT_RHO,
                            dt_ref: Optional[float] = None) -> float:
    """sum_k |rho_hat_eps(k)|^2 / (2 (m^2 + |2 pi k|^2 / 2)), the dt -> 0 value (spatial mollifier factor only)."""
    dt_ref = dt_ref or params.eps ** 2 / 64
    g = GridSpec(n, dt_ref, 0.0, 1)
    H = mollifier_hat(g, rho, params.eps)
    spatial = np.abs(H.sum(axis=0)) ** 2  # transform of the time-integrated mollifier (1 at k = 0)
    lam = g.heat_rate(params.m2)
    return float(np.sum(spatial / (2 * lam)))


# ---------------------------------------------------------------------------
# Ansatz decomposition
# ---------------------------------------------------------------------------


@dataclass
class AnsatzDecomposition:
    phi: np.ndarray  # Phi_eps = K * zeta_eps
    theta: np.ndarray  # resonant solution from u0_eps
    gphi0: np.ndarray  # heat flow of Phi_eps(t0)
    w: np.ndarray
    residual: np.ndarray  # mild w-equation residual per unit time, one frame per step
    residual_rms: float
    forcing_rms: float

    def recombine(self) -> np.ndarray:
        return self.phi + self.theta - self.gphi0 + self.w


def ansatz_decompose(run: SgRun, resonant, bundle: Optional[GmcBundle] = None) -> AnsatzDecomposition:
    """
    Split u = Phi + theta - G Phi(t0) + w and measure the w-equation

        (d_t - Delta/2 + m^2) w = (1/2i)(xi_+^theta e^{i beta v} - xi_-^theta e^{-i beta v})
                                   + zeta_eps - (d_t - Delta/2 + m^2) Phi - Res(theta),

    v = w - G Phi(t0), in mild form: per step, w_{k+1} - a w_k minus a second-order
    (linear-interpolation) exponential quadrature of the right side, plus the exact
    mild increment Phi_{k+1} - a Phi_k of the Phi term.  Divided by dt, this residual
    carries the first-order error of the two exponential Euler solvers.
    ``bundle`` defaults to build_gmc on the run's zeta_eps with zero history.
    """
    from .resonant import resonant_operator

    g = run.grid
    params = run.params
    if run.blew_up:
        raise ValueError("cannot decompose a run that blew up")
    th = resonant.theta.values if hasattr(resonant, "theta") else np.asarray(resonant)
    if th.shape != run.u.values.shape:
        raise ValueError(f"resonant solution has shape {th.shape}, run has {run.u.values.shape}")
    if hasattr(resonant, "theta") and abs(resonant.theta.grid.dt - g.dt) > 1e-15:
        raise ValueError("resonant solution and run use different dt")
    if not np.allclose(th[0], run.u0.values, atol=1e-12):
        raise ValueError("resonant solution does not start from the run's initial datum")
    if bundle is None:
        bundle = build_gmc(run.zeta_eps, params, history="zero", with_remainder=False)
    if bundle.grid.n != g.n or abs(bundle.grid.dt - g.dt) > 1e-15 or bundle.phi.shape != th.shape:
        raise ValueError("bundle grid does not match the run grid")
    if not math.isclose(bundle.c_renorm, run.c_renorm, rel_tol=1e-12):
        raise ValueError("bundle and run use different renormalization constants (different eps or seeds?)")
    phi = bundle.phi
    u = run.u.values
    lam = g.heat_rate(params.m2)
    tk = (np.arange(g.frames) * g.dt)[:, None, None]
    gphi0 = np.fft.ifft2(np.fft.fft2(phi[0])[None] * np.exp(-tk * lam[None])).real
    w = u - phi - th + gphi0
    v = w - gphi0
    beta = params.beta
    xp = bundle.xi_plus * np.exp(1j * beta * th)
    xm = bundle.xi_minus * np.exp(-1j * beta * th)
    N = ((xp * np.exp(1j * beta * v) - xm * np.exp(-1j * beta * v)) / 2j).real
    res = resonant_operator(th, bundle, history="constant")
    res = res.values if isinstance(res, SpaceTimeField) else np.asarray(res)
    F = N - res.real
    st = _Stepper(g.n, g.dt, params.m2)
    Fh = sfft.rfft2(F)
    zh = sfft.rfft2(run.zeta_eps.values)
    wh = sfft.rfft2(w)
    ph = sfft.rfft2(phi)
    # zeta_eps is a cell average, constant over each step: its mild integral is exact
    r = (wh[1:] - st.a * wh[:-1] - st.phi1 * (Fh[:-1] + zh[:-1]) - st.phi2 * (Fh[1:] - Fh[:-1])
         + ph[1:] - st.a * ph[:-1])
    r = sfft.irfft2(r, s=(g.n, g.n)) / g.dt
    return AnsatzDecomposition(phi, th, gphi0, w, r, float(np.sqrt(np.mean(r ** 2))),
                               float(np.sqrt(np.mean(F ** 2))))


# ---------------------------------------------------------------------------
# batched replicas
# ---------------------------------------------------------------------------


class _NoiseStream:
    """Transforms of zeta_eps frame blocks for a batch of replicas, drawn window by window."""

    def __init__(self, n: int, dt: float, eps: float, lineages: Sequence[SeedLineage],
                 rho: MollifierSpec = DEFAULT_RHO):
        g = GridSpec(n, dt, 0.0, 1)
        self.n = n
        self.sd = 1.0 / math.sqrt(dt * g.dx ** 2)
        self.H = mollifier_hat(g, rho, eps)[..., : n // 2 + 1]
        self.gens = [lin.generator() for lin in lineages]
        self.carry = None  # raw transforms read ahead but not yet consumed

    def _raw(self, M: int) -> np.ndarray:
        z = np.stack([gen.standard_normal((M, self.n, self.n)) for gen in self.gens], axis=1) * self.sd
        return sfft.rfft2(z)

    def block(self, M: int) -> np.ndarray:
        Lt = self.H.shape[0]
        need = M + Lt - 1
        have = 0 if self.carry is None else self.carry.shape[0]
        fresh = self._raw(need - have)
        Z = fresh if self.carry is None else np.concatenate([self.carry, fresh], axis=0)
        out = np.zeros((M,) + Z.shape[1:], dtype=complex)
        for l in range(Lt):
            out += self.H[l] * Z[l: l + M]
        self.carry = Z[M:]
        return out


def simulate_batch(u0s: np.ndarray, params: ModelParams, n: int, dt: float, T: float,
                   lineages: Sequence[SeedLineage], record_every: int, eta: Optional[float] = None,
                   rho: MollifierSpec = DEFAULT_RHO, mollify_u0: bool = True):
    """
    Run every initial datum in ``u0s`` (shape (U, n, n)) against every noise lineage
    (synchronous coupling: datum i and datum j see the same noise in replica r).
    Returns (times, norms (U, R, len(times)) of ||u||_{C^eta}, L2 norms squared, blown-up mask (U, R)).
    """
    eta = params.eta if eta is None else eta
    steps = int(round(T / dt))
    U, R = u0s.shape[0], len(lineages)
    c = renorm_for(n, dt, params, rho)
    st = _Stepper(n, dt, params.m2)
    beta = params.beta
    u = np.stack([mollify_initial(x, params.eps) if mollify_u0 else np.asarray(x, float) for x in u0s])
    u = np.broadcast_to(u[:, None], (U, R, n, n)).copy()
    uh = sfft.rfft2(u)
    stream = _NoiseStream(n, dt, params.eps, lineages, rho)
    win = max(1, int(round(WINDOW / dt)))
    # draws are chunk invariant, so the block length only bounds memory
    per_frame = R * n * (n // 2 + 1) * 16
    win = max(1, min(win, int(NOISE_BLOCK_BYTES // per_frame)))
    times, norms, l2 = [0.0], [besov_norm_frames(u, eta)], [np.mean(u ** 2, axis=(-2, -1))]
    dead = np.zeros((U, R), dtype=bool)
    k = 0
    while k < steps:
        M = min(win, steps - k)
        Z = stream.block(M)
        for j in range(M):
            uh *= st.a
            if beta:
                s = np.multiply(u, beta, out=u)
                np.sin(s, out=s)
                s *= c
                F = sfft.rfft2(s)
                F += Z[j][None]
                F *= st.phi1
                uh += F
            else:
                uh += st.phi1 * Z[j][None]
            u = sfft.irfft2(uh, s=(n, n))
            k += 1
            # NaN fails the comparison, so it counts as a blow-up too
            top = np.maximum(u.max(axis=(-2, -1)), -u.min(axis=(-2, -1)))
            big = ~(top <= BLOWUP_THRESHOLD)
            if big.any():
                dead |= big
                u[dead] = 0.0
                uh[dead] = 0.0
            if k % record_every == 0 or k == steps:
                nb = besov_norm_frames(u, eta)
                nb[dead] = np.nan
                times.append(k * dt)
                norms.append(nb)
                l2v = np.mean(u ** 2, axis=(-2, -1))
                l2v[dead] = np.nan
                l2.append(l2v)
    return np.array(times), np.stack(norms, axis=-1), np.stack(l2, axis=-1), dead


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


@dataclass
class GwpRow:
    T: float
    p: int
    u0_id: str
    moment: float
    stderr: float
    replicas: int


@dataclass
class GwpReport:
    rows: list
    u0_norms: dict
    blowups: dict
    replicas: int
    p: int
    merge: list = field(default_factory=list)  # (T, |m_a - m_b|, joint stderr)
    timings: dict = field(default_factory=dict)

    def curve(self, u0_id: str) -> tuple:
        r = [x for x in self.rows if x.u0_id == u0_id]
        return (np.array([x.T for x in r]), np.array([x.moment for x in r]), np.array([x.stderr for x in r]))

    def merged_at(self, T: float, n_se: float = 2.0) -> bool:
        for t, d, se in self.merge:
            if abs(t - T) < 1e-9:
                return d <= n_se * se
        raise KeyError(f"no record at T = {T}")

    @property
    def total_blowups(self) -> int:
        return int(sum(self.blowups.values()))


def gwp_experiment(u0_set: dict, params: ModelParams, horizon: float, replicas: int = 200, p: int = 2,
                   seed: int = 0, n: int = 64, dt: Optional[float] = None, record: float = 0.25,
                   batch: int = 50, rho: MollifierSpec = DEFAULT_RHO) -> GwpReport:
    """
    E ||u(T)||_{C^eta}^p curves for each initial datum, all data driven by the same
    replica noises, plus blow-up counts and the merge statistic between the first
    two data (difference of the curves against their joint standard error).
    """
    if len(u0_set) < 2:
        raise ValueError("need at least two initial data")
    if replicas < 100:
        raise ValueError("at least 100 replicas are required")
    names = list(u0_set)
    u0s = np.stack([np.asarray(u0_set[k], dtype=float) for k in names])
    nrm = {k: besov_norm(u0_set[k], params.eta) for k in names}
    ratio = max(nrm.values()) / max(min(nrm.values()), 1e-300)
    if ratio < 10:
        raise ValueError(f"initial data C^eta norms differ by a factor {ratio:.3g}; need >= 10")
    dt = dt or 2.0 ** math.floor(math.log2(params.eps ** 2 / 4))
    rec = max(1, int(round(record / dt)))
    root = SeedLineage(seed)
    t0 = time.perf_counter()
    parts = []
    for b0 in range(0, replicas, batch):
        lins = [root.child(r) for r in range(b0, min(replicas, b0 + batch))]
        parts.append(simulate_batch(u0s, params, n, dt, horizon, lins, rec, rho=rho))
    times = parts[0][0]
    norms = np.concatenate([x[1] for x in parts], axis=1)  # (U, R, times)
    dead = np.concatenate([x[3] for x in parts], axis=1)
    rows = []
    for ui, name in enumerate(names):
        for ti, t in enumerate(times):
            v = norms[ui, :, ti] ** p
            v = v[np.isfinite(v)]
            rows.append(GwpRow(float(t), p, name, float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(len(v))),
                               len(v)))
    merge = []
    a, b = names[0], names[1]
    for ti, t in enumerate(times):
        ra = next(x for x in rows if x.u0_id == a and x.T == t)
        rb = next(x for x in rows if x.u0_id == b and x.T == t)
        merge.append((float(t), abs(ra.moment - rb.moment), math.hypot(ra.stderr, rb.stderr)))
    return GwpReport(rows, nrm, {k: int(dead[i].sum()) for i, k in enumerate(names)}, replicas, p, merge,
                     dict(simulate=time.perf_counter() - t0))


def stationary_check(params: ModelParams, n: int = 32, dt: Optional[float] = None, T: float = 4.0,
                     replicas: int = 200, seed: int = 0, rho: MollifierSpec = DEFAULT_RHO) -> dict:
    """beta = 0, u0 = 0: empirical E||u(T)||_{L^2}^2 against the exact scheme oracle."""
    if params.beta2 != 0:
        raise ValueError("the Gaussian oracle needs beta = 0")
    dt = dt or 2.0 ** math.floor(math.log2(params.eps ** 2 / 4))
    steps = int(round(T / dt))
    root = SeedLineage(seed)
    vals = []
    for b0 in range(0, replicas, 50):
        lins = [root.child(r) for r in range(b0, min(replicas, b0 + 50))]
        _, _, l2, _ = simulate_batch(np.zeros((1, n, n)), params, n, dt, T, lins, steps)
        vals.append(l2[0, :, -1])
    v = np.concatenate(vals)
    m, se = float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(len(v)))
    exact = ou_variance_oracle(n, dt, params, steps, rho)
    return dict(empirical=m, stderr=se, oracle=exact, stationary=ou_variance_oracle(n, dt, params, None, rho),
                continuum=continuum_stationary_l2(n, params, rho), z=(m - exact) / se)


def epsilon_convergence(u0, params: ModelParams, eps_list: Sequence[float], horizon: float, seed: int = 0,
                        n: Optional[int] = None, dt: Optional[float] = None, every: int = 8,
                        rho: MollifierSpec = DEFAULT_RHO) -> ExperimentReport:
    """
    Successive distances sup_t ||u_eps(t) - u_eps'(t)||_{C^eta} along ``eps_list``.  All
    runs share one grid fine enough for the smallest eps and one raw noise sample, so
    the eps-sequence is coupled exactly.  The sup over t is taken every ``every`` steps.
    """
    eps_list = list(eps_list)
    e_min = min(eps_list)
    n = n or int(2 ** math.ceil(math.log2(2.0 / e_min)))
    dt = dt or 2.0 ** math.floor(math.log2(e_min ** 2 / 4))
    p_min = params.with_(eps=e_min)
    noise = make_noise(n, dt, horizon, p_min, SeedLineage(seed), rho)
    runs = []
    for e in eps_list:
        pe = params.with_(eps=e, eta=params.eta)
        nz = NoiseRealization(noise.lineage, noise.zeta)
        runs.append(solve_regularized_sg(u0, nz, pe, horizon, rho=rho))
    rows = []
    for i in range(len(runs) - 1):
        d = runs[i].u.values[::every] - runs[i + 1].u.values[::every]
        dist = float(np.max(besov_norm_frames(d, params.eta)))
        rows.append(dict(eps=eps_list[i], eps_next=eps_list[i + 1], distance=dist))
    dists = [r["distance"] for r in rows]
    notes = dict(n=n, dt=dt, decrements=[dists[i + 1] / dists[i] for i in range(len(dists) - 1) if dists[i] > 0],
                 blowups=sum(r.blew_up for r in runs))
    fit = None
    if len(rows) >= 2 and all(x > 0 for x in dists):
        fit = fit_loglog([r["eps"] for r in rows], dists)
    return ExperimentReport("eps-convergence", rows, fit, notes=notes)
