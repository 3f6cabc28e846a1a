"""Time stepping for du = A(t) u dt + B(t) dW on a truncated grid.

Semi-implicit scheme: diffusion backward Euler (tridiagonal in 1-D, factored
alternating-direction sweeps in 2-D/3-D), drift and noise explicit,
coefficients frozen at the step midpoint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .coefficients import CoefficientSchedule, check_condition, constants_report
from .grid import GridFunction, WeightedGrid, quadrature
from .noise import AdditiveNoise, ensemble_increments, hs_norm_sq
from .operator import EnergyDecomposition, energy_decomposition, flux_divergence, laplacian

DIVERGENCE_LIMIT = 1e12
ENERGY_TOL = 1e-6


class DivergenceError(RuntimeError):
    def __init__(self, step: int, last_good: np.ndarray, t: float):
        super().__init__(f"solution diverged at step {step} (t={t:.6g})")
        self.step = step
        self.last_good = last_good
        self.t = t


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    T: float = 1.0
    scheme: str = "semi-implicit"
    seed: int = 0
    n_paths: int = 1
    checkpoint_every: int = 100

    def __post_init__(self):
        if not self.dt > 0 or not self.T > 0:
            raise ConfigurationError("dt and T must be positive")
        if self.scheme not in ("semi-implicit", "explicit"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.n_paths < 1 or self.checkpoint_every < 1:
            raise ConfigurationError("n_paths and checkpoint_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.T / self.dt - 1e-9))

    def time(self, k: int) -> float:
        return min(k * self.dt, self.T)

    def step_size(self, k: int) -> float:
        return self.time(k + 1) - self.time(k)

    def recorded(self, k: int) -> bool:
        return k % self.checkpoint_every == 0 or k == self.n_steps


# -- single step on raw arrays (leading batch axis) --------------------------

def _implicit_axis(rhs: np.ndarray, a: float, h: float, axis: int) -> np.ndarray:
    """Solve (I - a D_axis^2) u = rhs on interior nodes along one axis."""
    m = rhs.shape[axis]
    r = a / h**2
    ab = np.empty((3, m))
    ab[0] = -r
    ab[1] = 1 + 2 * r
    ab[2] = -r
    moved = np.moveaxis(rhs, axis, 0)
    sol = solve_banded((1, 1), ab, moved.reshape(m, -1), check_finite=False)
    return np.moveaxis(sol.reshape(moved.shape), 0, axis)


def _step_arrays(u: np.ndarray, grid: WeightedGrid, t: float, dt: float,
                 s: CoefficientSchedule, scheme: str, noise: np.ndarray | None) -> np.ndarray:
    """u has shape (P, *grid.shape); returns the next state, same shape."""
    tm = min(t + dt / 2, s.T)
    f = s.f(tm)
    g2 = s.g.square(tm)
    d = grid.d
    rhs = u.copy()
    if f != 0.0:
        rhs += dt * f * flux_divergence(grid, u)
    if noise is not None:
        rhs += noise
    if scheme == "explicit":
        out = rhs + dt * g2 / 2 * laplacian(grid, u)
    else:
        inner = (slice(None),) + (slice(1, -1),) * d
        core = rhs[inner]
        for k in range(d):
            core = _implicit_axis(core, dt * g2 / 2, grid.h, k + 1)
        out = np.zeros_like(u)
        out[inner] = core
    bd = np.ones(grid.shape, dtype=bool)
    bd[(slice(1, -1),) * d] = False
    out[:, bd] = 0.0
    return out


def _explicit_guard(grid: WeightedGrid, dt: float, s: CoefficientSchedule):
    g2max = float(np.max(s.g.square(s.sample_times(1000))))
    if dt > grid.h**2 / (g2max * grid.d):
        raise ConfigurationError(
            f"explicit scheme unstable: dt={dt} > h^2/(g^2_max d) = {grid.h**2 / (g2max * grid.d):.3g}")


def step(u: GridFunction, t: float, cfg: SolverConfig, s: CoefficientSchedule,
         noise: GridFunction | None = None, dt: float | None = None) -> GridFunction:
    dt = cfg.dt if dt is None else dt
    if cfg.scheme == "explicit":
        _explicit_guard(u.grid, dt, s)
    xi = None if noise is None else noise.values[None]
    out = _step_arrays(u.values[None], u.grid, t, dt, s, cfg.scheme, xi)[0]
    if not np.all(np.isfinite(out)) or np.abs(out).max() > DIVERGENCE_LIMIT:
        raise DivergenceError(0, u.values, t)
    return GridFunction(u.grid, out)


# -- trajectories -------------------------------------------------------------

def growth_rate(s: CoefficientSchedule, grid: WeightedGrid) -> float:
    """Rate K with d/dt |u|_H^2 <= K |u|_H^2 for the noise-free dynamics."""
    if not grid.weighted:
        return grid.d * float(np.max(s.f(s.sample_times(1000))))
    return constants_report(s, grid.c, grid.d).K_A3_corrected


@dataclass
class Trajectory:
    grid: WeightedGrid
    steps: list[int] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    snapshots: list[GridFunction] = field(default_factory=list)
    energy: list[EnergyDecomposition] = field(default_factory=list)
    bound: list[float] = field(default_factory=list)
    mass: list[float] = field(default_factory=list)
    path: int = 0
    seed: int = 0

    def at_step(self, k: int) -> GridFunction:
        try:
            return self.snapshots[self.steps.index(k)]
        except ValueError:
            raise KeyError(f"no checkpoint recorded at step {k}") from None

    @property
    def final(self) -> GridFunction:
        return self.snapshots[-1]

    @property
    def bound_satisfied(self) -> bool:
        return all(e.h_norm_sq <= b for e, b in zip(self.energy, self.bound))

    def stats(self) -> dict:
        return {
            "final_H_norm": math.sqrt(self.energy[-1].h_norm_sq),
            "mass_drift": abs(self.mass[-1] - self.mass[0]),
            "bound_satisfied": self.bound_satisfied,
        }

    def energy_rows(self) -> list[dict]:
        return [dict(e.row(), bound=b) for e, b in zip(self.energy, self.bound)]


def _preflight(u0: GridFunction, cfg: SolverConfig, s: CoefficientSchedule,
               noise: AdditiveNoise | None):
    grid = u0.grid
    if grid.weighted:
        if not check_condition(s, grid.c).holds:
            raise ConfigurationError(f"condition f - g^2/(2c) >= 0 fails for c={grid.c}")
    elif not s.f_zero:
        raise ConfigurationError("unweighted mode requires f == 0")
    if cfg.scheme == "explicit":
        _explicit_guard(grid, cfg.dt, s)
    if noise is not None and not noise.spec.grid.same_as(grid):
        raise ConfigurationError("noise modes live on a different grid")


def _trace_increment(noise: AdditiveNoise | None, cfg: SolverConfig, k: int) -> float:
    """Expected weighted energy injected by the noise over step k."""
    if noise is None:
        return 0.0
    dt = cfg.step_size(k)
    return dt * hs_norm_sq(noise.spec, noise.b, min(cfg.time(k) + dt / 2, cfg.T))


def _run(u_start: np.ndarray, k0: int, cfg: SolverConfig, s: CoefficientSchedule,
         noise: AdditiveNoise | None, grid: WeightedGrid, path: int, seed: int,
         traj: Trajectory, energy0: float, injected0: float) -> Trajectory:
    K = growth_rate(s, grid)
    u = u_start[None].copy()
    injected = injected0

    def record(k):
        v = GridFunction(grid, u[0])
        t = cfg.time(k)
        traj.steps.append(k)
        traj.times.append(t)
        traj.snapshots.append(v)
        traj.energy.append(energy_decomposition(v, t, s))
        traj.bound.append((energy0 + injected) * math.exp(K * t) * (1 + ENERGY_TOL))
        traj.mass.append(quadrature(grid, u[0], weighted=False))

    if not traj.steps:
        record(k0)
    for k in range(k0, cfg.n_steps):
        dt = cfg.step_size(k)
        t = cfg.time(k)
        xi = None
        if noise is not None:
            xi = ensemble_increments(noise.spec, min(t + dt / 2, cfg.T), dt, noise.b, seed, [path], k)
            injected += _trace_increment(noise, cfg, k)
        new = _step_arrays(u, grid, t, dt, s, cfg.scheme, xi)
        if not np.all(np.isfinite(new)) or np.abs(new).max() > DIVERGENCE_LIMIT:
            raise DivergenceError(k + 1, u[0].copy(), cfg.time(k + 1))
        u = new
        if cfg.recorded(k + 1):
            record(k + 1)
    return traj


def solve(u0: GridFunction, cfg: SolverConfig, s: CoefficientSchedule,
          noise: AdditiveNoise | None = None, path: int = 0) -> Trajectory:
    _preflight(u0, cfg, s, noise)
    traj = Trajectory(u0.grid, path=path, seed=cfg.seed)
    return _run(u0.values, 0, cfg, s, noise, u0.grid, path, cfg.seed, traj,
                quadrature(u0.grid, u0.values * u0.values), 0.0)


def checkpoint_restore(traj: Trajectory, at_step: int, cfg: SolverConfig, s: CoefficientSchedule,
                       noise: AdditiveNoise | None = None, seed: int | None = None) -> Trajectory:
    """Continue from a recorded snapshot; same stream addresses give a bit-identical tail."""
    start = traj.at_step(at_step)
    seed = traj.seed if seed is None else seed
    i = traj.steps.index(at_step)
    injected = sum(_trace_increment(noise, cfg, k) for k in range(at_step))
    out = Trajectory(traj.grid, traj.steps[: i + 1], traj.times[: i + 1], traj.snapshots[: i + 1],
                     traj.energy[: i + 1], traj.bound[: i + 1], traj.mass[: i + 1], traj.path, seed)
    energy0 = traj.energy[0].h_norm_sq
    return _run(start.values, at_step, cfg, s, noise, traj.grid, traj.path, seed, out, energy0, injected)


# -- ensembles ----------------------------------------------------------------

@dataclass
class EnsembleStats:
    grid: WeightedGrid
    n_paths: int
    steps: list[int]
    times: list[float]
    mean: list[GridFunction]
    mean_se: list[np.ndarray]
    second_moment_norm: list[float]     # E |u_t|_H^2
    second_moment_se: list[float]
    bound: list[float]

    @property
    def bound_satisfied(self) -> bool:
        return all(m - 3 * se <= b for m, se, b in
                   zip(self.second_moment_norm, self.second_moment_se, self.bound))


def _batch_size(grid: WeightedGrid) -> int:
    return max(1, 2_000_000 // grid.n**grid.d)


def solve_ensemble(u0: GridFunction, cfg: SolverConfig, s: CoefficientSchedule,
                   noise: AdditiveNoise | None) -> EnsembleStats:
    """Monte Carlo over cfg.n_paths independent streams (seed, path, step).

    Paths are advanced together in batches; statistics are merged in path order.
    """
    _preflight(u0, cfg, s, noise)
    grid = u0.grid
    P = cfg.n_paths
    rec = [k for k in range(cfg.n_steps + 1) if cfg.recorded(k)]
    s1 = {k: np.zeros(grid.shape) for k in rec}
    s2 = {k: np.zeros(grid.shape) for k in rec}
    e1 = {k: 0.0 for k in rec}
    e2 = {k: 0.0 for k in rec}
    qw = grid.quad * grid.weight
    B = _batch_size(grid)
    for start in range(0, P, B):
        paths = list(range(start, min(P, start + B)))
        u = np.repeat(u0.values[None], len(paths), axis=0)

        def accumulate(k):
            s1[k] += u.sum(axis=0)
            s2[k] += (u * u).sum(axis=0)
            en = (u * u * qw).reshape(len(paths), -1).sum(axis=1)
            e1[k] += float(en.sum())
            e2[k] += float((en * en).sum())

        accumulate(0)
        for k in range(cfg.n_steps):
            dt = cfg.step_size(k)
            t = cfg.time(k)
            xi = None
            if noise is not None:
                xi = ensemble_increments(noise.spec, min(t + dt / 2, cfg.T), dt, noise.b,
                                         cfg.seed, paths, k)
            new = _step_arrays(u, grid, t, dt, s, cfg.scheme, xi)
            if not np.all(np.isfinite(new)) or np.abs(new).max() > DIVERGENCE_LIMIT:
                raise DivergenceError(k + 1, u[0].copy(), cfg.time(k + 1))
            u = new
            if cfg.recorded(k + 1):
                accumulate(k + 1)
    K = growth_rate(s, grid)
    energy0 = quadrature(grid, u0.values * u0.values)
    injected = 0.0
    bounds = {}
    for k in range(cfg.n_steps + 1):
        if k in s1:
            bounds[k] = (energy0 + injected) * math.exp(K * cfg.time(k)) * (1 + ENERGY_TOL)
        if k < cfg.n_steps:
            injected += _trace_increment(noise, cfg, k)
    mean, mean_se, m2, m2_se = [], [], [], []
    for k in rec:
        mu = s1[k] / P
        mean.append(GridFunction(grid, mu))
        var = np.maximum(s2[k] / P - mu * mu, 0.0) * P / max(P - 1, 1)
        mean_se.append(np.sqrt(var / P))
        em = e1[k] / P
        ev = max(e2[k] / P - em * em, 0.0) * P / max(P - 1, 1)
        m2.append(em)
        m2_se.append(math.sqrt(ev / P))
    return EnsembleStats(grid, P, rec, [cfg.time(k) for k in rec], mean, mean_se, m2, m2_se,
                         [bounds[k] for k in rec])


def with_seed(cfg: SolverConfig, seed: int) -> SolverConfig:
    return replace(cfg, seed=seed)
