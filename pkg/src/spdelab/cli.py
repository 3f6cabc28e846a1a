"""Command-line front end.

Exit status: 0 pass, 1 a check failed, 2 configuration error, 3 divergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .coefficients import check_condition, constants_report, minimal_c
from .config import ConfigError, RunConfig
from .grid import GridFunction, WeightedGrid, write_csv
from .oracle import (compare_densities, density_on_grid, empirical_variance, evolve_moments,
                     grid_variance, histogram_density, particle_forward_sde)
from .solver import ConfigurationError, DivergenceError, solve, solve_ensemble
from .verify import run_battery

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


# -- deterministic output ---------------------------------------------------------

def _fmt(x: float) -> str:
    return format(x, ".17g")


def _encode(obj, indent: int = 0) -> str:
    """JSON with sorted keys and floats at 17 significant digits; inf/nan as strings."""
    pad = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}"{k}": {_encode(obj[k], indent + 1)}' for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in obj) + "\n" + "  " * indent + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return _fmt(x) if math.isfinite(x) else f'"{x}"'
    if obj is None:
        return "null"
    return '"' + str(obj).replace("\\", "\\\\").replace('"', '\\"') + '"'


def write_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_encode(obj) + "\n")


def write_rows(rows: list[dict], columns: list[str], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(float(row[c])) for c in columns])


class _Ctx:
    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)

    def say(self, msg: str) -> None:
        if not self.args.quiet:
            print(msg)

    def config(self) -> RunConfig:
        if not self.args.config:
            raise ConfigError("--config is required for this command")
        cfg = RunConfig.from_file(self.args.config)
        if self.args.seed is not None:
            cfg.override("run.seed", self.args.seed)
        if self.args.grid_n is not None:
            cfg.override("grid.n", self.args.grid_n)
        return cfg


# -- commands ---------------------------------------------------------------------------

def cmd_check(ctx: _Ctx) -> int:
    cfg = ctx.config()
    s = cfg.schedule()
    d = cfg.get("grid.d")
    payload = {"mode": cfg.get("weight.mode"), "c": cfg.c, "f_zero": s.f_zero, "minimal_c": minimal_c(s)}
    rep = check_condition(s, cfg.c)
    payload["condition"] = {"holds": rep.holds, "min_slack": rep.min_slack, "argmin_t": rep.argmin_t}
    consts = asdict(constants_report(s, cfg.c, d))
    consts.pop("extra", None)
    payload["constants"] = consts
    ok = rep.holds if cfg.weighted else s.f_zero
    payload["pass"] = ok
    write_json(payload, ctx.out / "check.json")
    ctx.say(_encode(payload))
    return EXIT_OK if ok else EXIT_FAIL


def _verify_grids(cfg: RunConfig, grid_n: int | None) -> list[WeightedGrid]:
    if grid_n is None:
        return [cfg.grid(n) for n in cfg.get("verify.grids")]
    if (grid_n - 1) % 4 == 0 and grid_n >= 9:
        return [cfg.grid(n) for n in ((grid_n - 1) // 4 + 1, (grid_n - 1) // 2 + 1, grid_n)]
    return [cfg.grid(grid_n)]


def cmd_verify(ctx: _Ctx) -> int:
    cfg = ctx.config()
    if not cfg.weighted:
        raise ConfigError("verification needs the weighted space", None, "weight.mode")
    s = cfg.schedule()
    grids = _verify_grids(cfg, ctx.args.grid_n)
    reports = run_battery(s, cfg.c, cfg.get("grid.d"), cfg.verify_time(), grids,
                          cfg.get("verify.family_size"), cfg.get("verify.family_seed"),
                          cfg.get("verify.adversarial"))
    for name, rep in reports.items():
        write_json(rep.to_dict(), ctx.out / "reports" / f"{name}.json")
        ctx.say(f"{name:14s} {rep.status:8s} residual={rep.residuals[-1][1] if rep.residuals else 0.0:.3e}")
    return EXIT_OK if all(r.passed for r in reports.values()) else EXIT_FAIL


ENERGY_COLUMNS = ["step", "t", "h_norm_sq", "pairing", "mass_term", "grad_term", "slack", "bound"]


def _noise_ok(ctx: _Ctx, cfg: RunConfig, s, noise) -> bool:
    if noise is None:
        return True
    checks = noise.check(s.sample_times(200))
    bad = [c for c in checks if not c.ok]
    if bad:
        write_json({"pass": False, "hs_norm": bad[0].norm, "bound": bad[0].bound},
                   ctx.out / "noise_check.json")
        print(f"noise Hilbert-Schmidt norm {bad[0].norm:.6g} exceeds bound {bad[0].bound:.6g}",
              file=sys.stderr)
        return False
    return True


def _diverged(ctx: _Ctx, grid: WeightedGrid, err: DivergenceError) -> int:
    write_csv(GridFunction(grid, err.last_good), _mkparent(ctx.out / "last_good.csv"))
    write_json({"step": err.step, "t": err.t, "last_good_step": err.step - 1}, ctx.out / "divergence.json")
    print(str(err), file=sys.stderr)
    return EXIT_DIVERGED


def _mkparent(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def cmd_solve(ctx: _Ctx) -> int:
    cfg = ctx.config()
    if cfg.stochastic:
        cfg.require_seed()
    s = cfg.schedule()
    grid = cfg.grid()
    noise = cfg.noise(grid)
    if not _noise_ok(ctx, cfg, s, noise):
        return EXIT_FAIL
    scfg = cfg.solver_config()
    try:
        traj = solve(cfg.initial_condition(grid), scfg, s, noise)
    except ConfigurationError as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except DivergenceError as err:
        return _diverged(ctx, grid, err)
    snap = ctx.out / "snapshots"
    snap.mkdir(parents=True, exist_ok=True)
    for k, v in zip(traj.steps, traj.snapshots):
        write_csv(v, snap / f"u_{k:08d}.csv")
    rows = [dict(r, step=k) for k, r in zip(traj.steps, traj.energy_rows())]
    write_rows(rows, ENERGY_COLUMNS, ctx.out / "energy.csv")
    stats = dict(traj.stats(), n_steps=scfg.n_steps, T=scfg.T, seed=scfg.seed)
    write_json(stats, ctx.out / "stats.json")
    ctx.say(_encode(stats))
    # the a-priori bound is pathwise only without noise
    return EXIT_OK if traj.bound_satisfied or noise is not None else EXIT_FAIL


def _z_gap(mean: np.ndarray, det: np.ndarray, se: np.ndarray) -> float:
    diff = np.abs(mean - det)
    scale = max(float(np.abs(det).max()), 1e-300)
    # standard errors at roundoff level (identical paths) count as zero
    live = se > 1e-12 * scale
    if np.any(diff[~live] > 1e-12 * scale):
        return math.inf
    return float((diff[live] / se[live]).max()) if np.any(live) else 0.0


def cmd_ensemble(ctx: _Ctx) -> int:
    cfg = ctx.config()
    seed = cfg.require_seed()
    s = cfg.schedule()
    grid = cfg.grid()
    noise = cfg.noise(grid)
    if not _noise_ok(ctx, cfg, s, noise):
        return EXIT_FAIL
    scfg = cfg.solver_config()
    u0 = cfg.initial_condition(grid)
    try:
        det = solve(u0, scfg, s, None)
        ens = solve_ensemble(u0, scfg, s, noise)
    except ConfigurationError as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except DivergenceError as err:
        return _diverged(ctx, grid, err)
    gaps = [_z_gap(m.values, d.values, se) for m, d, se in zip(ens.mean, det.snapshots, ens.mean_se)]
    write_csv(ens.mean[-1], _mkparent(ctx.out / "ensemble_mean.csv"))
    rows = [{"step": k, "t": t, "second_moment": m, "second_moment_se": se, "bound": b, "max_z": z}
            for k, t, m, se, b, z in zip(ens.steps, ens.times, ens.second_moment_norm,
                                         ens.second_moment_se, ens.bound, gaps)]
    write_rows(rows, ["step", "t", "second_moment", "second_moment_se", "bound", "max_z"],
               ctx.out / "ensemble_energy.csv")
    within = gaps[-1] <= 3.0
    summary = {"n_paths": ens.n_paths, "seed": seed, "T": scfg.T, "max_z_final": gaps[-1],
               "within_3se": within, "bound_satisfied": ens.bound_satisfied,
               "pass": within and ens.bound_satisfied}
    write_json(summary, ctx.out / "ensemble.json")
    ctx.say(_encode(summary))
    return EXIT_OK if summary["pass"] else EXIT_FAIL


def _restrict(u: GridFunction, coarse: WeightedGrid) -> GridFunction:
    fine = u.grid
    if (fine.n - 1) % (coarse.n - 1):
        raise ConfigError("histogram grid must nest in the solver grid", None, "particles.grid_n")
    k = (fine.n - 1) // (coarse.n - 1)
    return GridFunction(coarse, u.values[(slice(None, None, k),) * fine.d])


def cmd_oracle_compare(ctx: _Ctx) -> int:
    cfg = ctx.config()
    s = cfg.schedule()
    grid = cfg.grid()
    n_particles = cfg.get("particles.n")
    if n_particles:
        seed = cfg.require_seed()
    scfg = cfg.solver_config()
    g0 = cfg.initial_state()
    try:
        traj = solve(cfg.initial_condition(grid), scfg, s, None)
    except ConfigurationError as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except DivergenceError as err:
        return _diverged(ctx, grid, err)
    u = traj.final
    oracle = evolve_moments(g0, s, scfg.T)
    exact = density_on_grid(oracle, grid)
    out = {
        "oracle_variance": oracle.variance,
        "solver_variance": grid_variance(u),
        "particle_variance": None,
        "l1": compare_densities(u, exact, "L1"),
        "l2": compare_densities(u, exact, "L2"),
        "linf": compare_densities(u, exact, "Linf"),
    }
    ok = out["linf"] <= cfg.get("compare.linf_tol")
    ok = ok and abs(out["solver_variance"] - oracle.variance) <= cfg.get("compare.variance_tol")
    if n_particles:
        coarse = grid.with_n(cfg.get("particles.grid_n"))
        X = particle_forward_sde(g0, s, n_particles, cfg.get("particles.dt"), seed, coarse,
                                 T=scfg.T, return_particles=True)[1]
        hist = histogram_density(X, coarse)
        ref = _restrict(u, coarse)
        out["particle_variance"] = empirical_variance(X)
        out["particle"] = {"n": n_particles, "grid_n": coarse.n,
                           "l1": compare_densities(hist, ref, "L1"),
                           "l2": compare_densities(hist, ref, "L2"),
                           "linf": compare_densities(hist, ref, "Linf")}
        ok = ok and out["particle"]["l1"] <= cfg.get("compare.particle_l1_tol")
    out["pass"] = ok
    write_json(out, ctx.out / "oracle_compare.json")
    ctx.say(_encode(out))
    return EXIT_OK if ok else EXIT_FAIL


def _read_pass(path: Path):
    try:
        data = json.loads(path.read_text())
    except (OSError, ValueError):
        return None
    return data.get("pass") if isinstance(data, dict) else None


def cmd_report(ctx: _Ctx) -> int:
    root = ctx.out
    files = sorted(p for p in root.rglob("*.json") if p.name != "summary.json")
    if not files:
        print(f"no JSON reports under {root}", file=sys.stderr)
        return EXIT_FAIL
    table = {str(p.relative_to(root)): _read_pass(p) for p in files}
    failed = sorted(k for k, v in table.items() if v is False)
    summary = {"count": len(table), "files": table, "failed": failed, "all_pass": not failed}
    write_json(summary, root / "summary.json")
    ctx.say(_encode(summary))
    return EXIT_OK if not failed else EXIT_FAIL


COMMANDS = {
    "check": cmd_check,
    "verify": cmd_verify,
    "solve": cmd_solve,
    "ensemble": cmd_ensemble,
    "oracle-compare": cmd_oracle_compare,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spdelab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="key = value run configuration")
    ap.add_argument("--out", default="out", help="output directory (default: out)")
    ap.add_argument("--seed", type=int, help="overrides run.seed")
    ap.add_argument("--grid-n", type=int, help="overrides grid.n (and the verify refinement ladder)")
    ap.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    ctx = _Ctx(args)
    try:
        return COMMANDS[args.command](ctx)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
