"""
Command-line entry point.

    sglab <subcommand> [--config file.json] [flags]

Every run writes into its own output directory (``--out``, else a directory under
$SGLAB_OUTPUT_ROOT, else ./sglab-runs) and finishes with manifest.json, which lists
the resolved config, the master seed, timings and a hash of every file written.
Exit status: 0 success, 2 invalid configuration, 3 numeric refusal.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
import traceback
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.fft as sfft

from . import __version__
from .config import (SUBCOMMANDS, ConfigError, RunConfig, eps_resolvable, load_and_validate, resolved_grid,
                     serialize)
from .gmc import NumericRefusal, write_flat
from .noise import SeedLineage

OUTPUT_ENV = "SGLAB_OUTPUT_ROOT"
EXIT_OK, EXIT_INVALID, EXIT_REFUSED = 0, 2, 3


class Refusal(RuntimeError):
    """A numeric refusal raised by the drivers (exit status 3)."""


# ---------------------------------------------------------------------------
# output bookkeeping
# ---------------------------------------------------------------------------


class RunContext:
    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = Path(out).resolve()
        self.files: list[Path] = []
        self.timings: dict = {}

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0

    def path(self, name: str) -> Path:
        p = (self.out / name).resolve()
        if self.out.resolve() not in p.parents:
            raise ValueError(f"refusing to write outside the output directory: {name}")
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write_csv(self, name: str, header: list, rows) -> Path:
        p = self.path(name)
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow(r)
        self.files.append(p)
        return p

    def write_field(self, name: str, arr: np.ndarray, header: dict) -> Path:
        p = self.path(name)
        write_flat(p, arr, header)
        self.files.append(p)
        self.files.append(p.with_suffix(p.suffix + ".txt"))
        return p


def _sha256(p: Path) -> str:
    h = hashlib.sha256()
    with p.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(ctx: RunContext, status: str, error: Optional[str] = None) -> Path:
    cfg = ctx.cfg
    inv = [dict(path=str(p.relative_to(ctx.out)), sha256=_sha256(p), bytes=p.stat().st_size)
           for p in ctx.files if p.exists()]
    doc = dict(config=cfg.to_dict(), master_seed=cfg.seed, config_hash=cfg.content_hash(), version=__version__,
               status=status, error=error, timings=ctx.timings, files=inv)
    ctx.out.mkdir(parents=True, exist_ok=True)
    p = ctx.out / "manifest.json"
    tmp = ctx.out / "manifest.json.tmp"
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, p)
    return p


def _output_dir(cfg: RunConfig) -> Path:
    if cfg.output:
        return Path(cfg.output)
    root = Path(os.environ.get(OUTPUT_ENV, "sglab-runs"))
    return root / f"{cfg.subcommand}-{cfg.content_hash()[:10]}"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _u0(cfg: RunConfig, n: int) -> tuple[str, np.ndarray]:
    from .spectral import scaled_profile

    src = cfg.u0
    if src in ("smooth", "rough", "bump"):
        return src, scaled_profile(src, n, cfg.amplitude, cfg.params.eta, seed=cfg.seed or 0)
    p = Path(src)
    if not p.exists():
        raise ConfigError(f"u0 source {src!r} is neither a profile name nor an existing file")
    if p.suffix == ".npy":
        a = np.load(p)
    else:
        from .gmc import read_flat
        a, _ = read_flat(p)
    a = np.asarray(a, dtype=float)
    if a.shape != (n, n):
        raise ConfigError(f"u0 file has shape {a.shape}, grid is {n}x{n}")
    return p.stem, cfg.amplitude * a


def _check_eps(cfg: RunConfig, eps: Optional[float] = None):
    ok, lo = eps_resolvable(cfg, eps)
    if not ok:
        n, dt = resolved_grid(cfg, eps)
        raise Refusal(f"eps = {cfg.eps if eps is None else eps:.6g} is not resolvable on n={n}, dt={dt:.4g}; "
                      f"minimum is {lo:.6g}")


def cmd_trees(ctx: RunContext):
    from .trees import homogeneity_table

    rows = homogeneity_table(ctx.cfg.params)
    for t, h in rows:
        print(f"{t}\t{h:.6f}")
    ctx.write_csv("trees.csv", ["tree", "homogeneity"], [(t, f"{h:.12g}") for t, h in rows])


def cmd_model_check(ctx: RunContext):
    from .checks import basepoint_zero_check, resonance_identity_check
    from .model import check_golden

    cfg = ctx.cfg
    rows = []
    with ctx.phase("golden"):
        for name, ok in check_golden(cfg.params.beta_bar).items():
            rows.append((f"golden:{name}", "", "", ok))
    with ctx.phase("numeric"):
        zeros = basepoint_zero_check(cfg.params, seed=cfg.seed)
        for name, (val, tol) in zeros.items():
            rows.append((f"basepoint-zero:{name}", f"{val:.3e}", f"{tol:.1e}", val < tol))
        rel = resonance_identity_check(cfg.params, seed=cfg.seed)
        rows.append(("dipole-resonance", f"{rel:.3e}", "1e-08", rel < 1e-8))
    for r in rows:
        print(f"{'ok  ' if r[3] else 'FAIL'} {r[0]} {r[1]}")
    ctx.write_csv("model_check.csv", ["check", "value", "tolerance", "passed"], rows)


def cmd_resonant(ctx: RunContext):
    from .resonant import ResonantKernel, solve_resonant

    cfg = ctx.cfg
    _check_eps(cfg)
    n, dt = resolved_grid(cfg)
    u0_id, u0 = _u0(cfg, n)
    with ctx.phase("kernel"):
        kern = ResonantKernel.build(n, dt, cfg.params)
    with ctx.phase("solve"):
        run = solve_resonant(u0, kern, cfg.T, tol=cfg.tol)
    rows, it = [], 0
    for w, (a, b, k) in enumerate(run.windows):
        for j in range(k):
            rows.append((w, a, b, j + 1, f"{run.distances[it]:.12g}"))
            it += 1
    ctx.write_csv("distances.csv", ["window", "t_start", "t_end", "iteration", "distance"], rows)
    ctx.write_field("theta_final.bin", run.final.values if hasattr(run.final, "values") else run.final,
                    dict(n=n, dt=dt, time=cfg.T, beta2_pi=cfg.beta2_pi, m2=cfg.m2, eps=cfg.eps, u0=u0_id,
                         field="theta(T)"))
    print(f"resonant: {len(run.distances)} iterations over {len(run.windows)} window(s), "
          f"final distance {run.distances[-1]:.3e}")


def cmd_objects(ctx: RunContext):
    from .harness import ResourceRefusal, fit_scaling, mc_moments, theta_source

    cfg = ctx.cfg
    if not cfg.tree:
        raise ConfigError("objects needs --tree")
    tid, th = theta_source(cfg.theta, cfg.params, seed=cfg.seed)
    try:
        with ctx.phase("mc"):
            recs = mc_moments(cfg.tree, {tid: th}, cfg.params, cfg.lambdas, p=cfg.p, replicas=cfg.replicas,
                              seed=cfg.seed, n=cfg.n, dt=cfg.dt)[tid]
    except ResourceRefusal as exc:
        raise Refusal(str(exc)) from None
    ctx.write_csv("moments.csv", ["tree", "theta_id", "lambda", "p", "moment", "stderr", "n"],
                  [(r.tree, r.theta_id, r.lam, r.p, f"{r.moment:.12g}", f"{r.stderr:.6g}", r.samples)
                   for r in recs])
    frows = []
    if len(recs) >= 4:
        f = fit_scaling(recs)
        frows.append((recs[0].tree, tid, f"{f.slope:.6f}", f"{f.slope_stderr:.3g}", f"{f.r2:.4f}"))
        print(f"objects: fitted lambda-exponent {f.slope:.4f} +- {f.slope_stderr:.3g}")
    else:
        print(f"objects: {len(recs)} lambda values, a scaling fit needs at least four; fit.csv left empty")
    ctx.write_csv("fit.csv", ["tree", "theta_id", "slope", "slope_stderr", "r2"], frows)


def _snapshot_header(cfg, n, dt, t, lineage):
    return dict(n=n, dt=dt, time=t, beta2_pi=cfg.beta2_pi, m2=cfg.m2, eps=cfg.eps, eta=cfg.params.eta,
                seed_master=lineage.master, seed_replica=lineage.replica, seed_stream=lineage.stream)


def cmd_simulate(ctx: RunContext):
    from .simulator import make_noise, solve_regularized_sg

    cfg = ctx.cfg
    _check_eps(cfg)
    n, dt = resolved_grid(cfg)
    _, u0 = _u0(cfg, n)
    lin = SeedLineage(cfg.seed)
    with ctx.phase("noise"):
        noise = make_noise(n, dt, cfg.T, cfg.params, lin)
    with ctx.phase("solve"):
        run = solve_regularized_sg(u0, noise, cfg.params, cfg.T)
    times = cfg.times or [cfg.T]
    for t in times:
        k = int(round(t / dt))
        if not 0 <= k <= run.grid.steps:
            raise ConfigError(f"snapshot time {t} outside [0, {cfg.T}]")
        ctx.write_field(f"u_t{k * dt:.6f}.bin", run.u.values[k], _snapshot_header(cfg, n, dt, k * dt, lin))
    print(f"simulate: {run.grid.steps} steps, blow-up: {run.blew_up}")


def cmd_gwp(ctx: RunContext):
    from .simulator import gwp_experiment

    cfg = ctx.cfg
    _check_eps(cfg)
    n, dt = resolved_grid(cfg)
    _, u0 = _u0(cfg, n)
    with ctx.phase("replicas"):
        rep = gwp_experiment({"u0": u0, "10u0": 10 * u0}, cfg.params, cfg.T, replicas=cfg.replicas, p=cfg.p,
                             seed=cfg.seed, n=n, dt=dt)
    ctx.write_csv("gwp.csv", ["T", "p", "u0_id", "moment", "stderr", "replicas"],
                  [(f"{r.T:.6g}", r.p, r.u0_id, f"{r.moment:.12g}", f"{r.stderr:.6g}", r.replicas)
                   for r in rep.rows])
    ctx.write_csv("gwp_merge.csv", ["T", "difference", "joint_stderr"],
                  [(f"{t:.6g}", f"{d:.6g}", f"{s:.6g}") for t, d, s in rep.merge])
    print(f"gwp: blow-ups {rep.blowups}; merged at T={cfg.T}: {rep.merged_at(rep.merge[-1][0])}")


def cmd_eps_study(ctx: RunContext):
    from .simulator import epsilon_convergence

    cfg = ctx.cfg
    eps_list = cfg.eps_list or [2.0 ** -3, 2.0 ** -4, 2.0 ** -5]
    for e in eps_list:
        _check_eps(cfg, min(eps_list))
    n, dt = resolved_grid(cfg, min(eps_list))
    _, u0 = _u0(cfg, n)
    with ctx.phase("runs"):
        rep = epsilon_convergence(u0, cfg.params, eps_list, cfg.T, seed=cfg.seed, n=n, dt=dt)
    ctx.write_csv("eps_study.csv", ["eps", "eps_next", "distance"],
                  [(r["eps"], r["eps_next"], f"{r['distance']:.12g}") for r in rep.rows])
    for r in rep.rows:
        print(f"eps {r['eps']:.5g} -> {r['eps_next']:.5g}: distance {r['distance']:.4g}")


COMMANDS = {"trees": cmd_trees, "model-check": cmd_model_check, "resonant": cmd_resonant,
            "objects": cmd_objects, "simulate": cmd_simulate, "gwp": cmd_gwp, "eps-study": cmd_eps_study}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sglab", description="regularized dynamical sine-Gordon lab on the 2-torus")
    sub = ap.add_subparsers(dest="subcommand", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags override its keys")
        p.add_argument("--beta2-pi", dest="beta2_pi", type=float)
        p.add_argument("--m2", type=float)
        p.add_argument("--eta", type=float)
        p.add_argument("--eps", type=float)
        p.add_argument("--n", type=int)
        p.add_argument("--dt", type=float)
        p.add_argument("--T", type=float)
        p.add_argument("--replicas", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--p", type=int)
        p.add_argument("--tree")
        p.add_argument("--theta", help="zero | const:<v> | smooth | resonant:<u0 norm>")
        p.add_argument("--lambdas", help="comma separated")
        p.add_argument("--u0", help="smooth | rough | bump | path to .npy or flat file")
        p.add_argument("--amplitude", type=float, help="C^eta norm of a named u0 profile")
        p.add_argument("--tol", type=float)
        p.add_argument("--times", help="snapshot times, comma separated")
        p.add_argument("--eps-list", dest="eps_list", help="comma separated")
        p.add_argument("--out", dest="output")
        p.add_argument("--threads", type=int)
    return ap


class _Usage(Exception):
    pass


def main(argv: Optional[list] = None) -> int:
    ap = _parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0] not in SUBCOMMANDS:
        ap.print_usage(sys.stderr)
        print(f"sglab: unknown or missing subcommand; expected one of {', '.join(SUBCOMMANDS)}", file=sys.stderr)
        return EXIT_INVALID
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    flags = {k: v for k, v in vars(ns).items() if k not in ("config",)}
    try:
        text = Path(ns.config).read_text() if ns.config else "{}"
        cfg = load_and_validate(text, overrides=flags)
    except (ConfigError, OSError) as exc:
        print(f"sglab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    ctx = RunContext(cfg, _output_dir(cfg))
    ctx.out.mkdir(parents=True, exist_ok=True)
    # the resolved config (seed included) reproduces the run via --config
    cpath = ctx.path("config.json")
    cpath.write_text(serialize(cfg) + "\n")
    ctx.files.append(cpath)
    status, err, code = "ok", None, EXIT_OK
    try:
        with sfft.set_workers(cfg.threads), ctx.phase("total"):
            COMMANDS[cfg.subcommand](ctx)
    except (ConfigError, ValueError) as exc:
        status, err, code = "invalid", str(exc), EXIT_INVALID
    except (Refusal, NumericRefusal) as exc:
        status, err, code = "refused", str(exc), EXIT_REFUSED
    except Exception as exc:  # recorded in the manifest, then re-raised
        write_manifest(ctx, "error", "".join(traceback.format_exception_only(type(exc), exc)).strip())
        raise
    write_manifest(ctx, status, err)
    if err:
        print(f"sglab: {status}: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
