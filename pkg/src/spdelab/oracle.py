"""Closed-form Gaussian solutions of the noise-free equation and a particle
simulator of the underlying forward SDE dX = -f(t) X dt + g(t) dw.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .coefficients import CoefficientSchedule
from .grid import GridFunction, GridMismatch, WeightedGrid, quadrature


@dataclass(frozen=True)
class GaussianState:
    mean: tuple[float, ...]
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))

    @property
    def d(self) -> int:
        return len(self.mean)


def _is_constant(s: CoefficientSchedule) -> bool:
    return s.f.kind == "constant" and s.g.kind == "constant"


def _quad(fn, a, b, points=()):
    pts = [p for p in points if a < p < b] or None
    val, _ = integrate.quad(fn, a, b, points=pts, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def drift_integral(s: CoefficientSchedule, t: float) -> float:
    """F(t) = int_0^t f."""
    if s.f.kind == "constant":
        return s.f(0.0) * t
    return _quad(s.f, 0.0, t, s.f.breakpoints())


def evolve_moments(g0: GaussianState, s: CoefficientSchedule, t: float) -> GaussianState:
    """mean(t) = m0 e^{-F}, var(t) = e^{-2F} (var0 + int_0^t g^2 e^{2F})."""
    s._check_time(t)
    F = drift_integral(s, t)
    if _is_constant(s):
        f, g2 = s.f(0.0), s.g.square(0.0)
        if f == 0:
            acc = g2 * t
        else:
            acc = g2 * math.expm1(2 * f * t) / (2 * f)
    else:
        pts = tuple(s.f.breakpoints()) + tuple(s.g.breakpoints())
        acc = _quad(lambda r: s.g.square(r) * math.exp(2 * drift_integral(s, r)), 0.0, t, pts)
    decay = math.exp(-F)
    return GaussianState(tuple(m * decay for m in g0.mean), decay**2 * (g0.variance + acc))


def variance_ode(var0: float, s: CoefficientSchedule, t: float) -> float:
    """Integrate var' = -2 f var + g^2 numerically; independent of evolve_moments."""
    if t == 0:
        return var0
    sol = integrate.solve_ivp(lambda r, y: -2 * s.f(r) * y + s.g.square(r), (0.0, t), [var0],
                              method="DOP853", rtol=1e-13, atol=1e-15)
    return float(sol.y[0, -1])


def density_on_grid(g: GaussianState, grid: WeightedGrid, zero_boundary: bool = False) -> GridFunction:
    if g.d != grid.d:
        raise ValueError("dimension mismatch")
    var = g.variance
    norm = (2 * math.pi * var) ** (-grid.d / 2)

    def fn(*xs):
        r2 = sum((x - m) ** 2 for x, m in zip(xs, g.mean))
        return norm * np.exp(-r2 / (2 * var))

    return grid.sample(fn, zero_boundary=zero_boundary)


def gaussian_h_norm_sq(var: float, c: float, d: int = 1) -> float:
    """|N(0, var I)|_H^2 = int phi^2 e^{|x|^2/2c}; infinite unless var < 2c."""
    a = 1 / var - 1 / (2 * c)
    if a <= 0:
        return math.inf
    return (2 * math.pi * var) ** (-d) * (math.pi / a) ** (d / 2)


def particle_forward_sde(g0: GaussianState, s: CoefficientSchedule, n_particles: int, dt: float,
                         seed: int, grid: WeightedGrid, T: float | None = None,
                         return_particles: bool = False):
    """Euler-Maruyama particles; histogram density with bins centred on grid nodes.

    Draws at step k come from Philox(key=(seed, k)); particle i takes row i.
    """
    if n_particles < 100:
        raise ValueError("need at least 100 particles")
    T = s.T if T is None else T
    n_steps = max(1, math.ceil(T / dt - 1e-9))
    init = np.random.Generator(np.random.Philox(key=np.array([seed, 2**63], dtype=np.uint64)))
    X = np.asarray(g0.mean) + math.sqrt(g0.variance) * init.standard_normal((n_particles, g0.d))
    for k in range(n_steps):
        t = min(k * dt, T)
        h = min((k + 1) * dt, T) - t
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, k], dtype=np.uint64)))
        xi = rng.standard_normal((n_particles, g0.d))
        X = X - s.f(t) * X * h + s.g(t) * math.sqrt(h) * xi
    density = histogram_density(X, grid)
    return (density, X) if return_particles else density


def histogram_density(X: np.ndarray, grid: WeightedGrid) -> GridFunction:
    edges = np.concatenate([grid.axis - grid.h / 2, [grid.axis[-1] + grid.h / 2]])
    counts, _ = np.histogramdd(X, bins=[edges] * grid.d)
    return GridFunction(grid, counts / (len(X) * grid.h**grid.d))


def empirical_variance(X: np.ndarray) -> float:
    """Isotropic variance estimate: mean squared deviation per coordinate."""
    return float(np.mean(np.sum((X - X.mean(axis=0)) ** 2, axis=1)) / X.shape[1])


def grid_variance(u: GridFunction) -> float:
    grid = u.grid
    mass = quadrature(grid, u.values, weighted=False)
    mean = [quadrature(grid, x * u.values, weighted=False) / mass for x in grid.coords]
    r2 = sum((x - m) ** 2 for x, m in zip(grid.coords, mean))
    return quadrature(grid, r2 * u.values, weighted=False) / (mass * grid.d)


NORMS = ("L1", "L2", "Linf", "weighted-L2")


def compare_densities(a: GridFunction, b: GridFunction, norm: str = "L1") -> float:
    if not a.grid.same_as(b.grid):
        raise GridMismatch("densities live on different grids")
    diff = a.values - b.values
    grid = a.grid
    if norm == "L1":
        return quadrature(grid, np.abs(diff), weighted=False)
    if norm == "L2":
        return math.sqrt(quadrature(grid, diff * diff, weighted=False))
    if norm == "Linf":
        return float(np.abs(diff).max())
    if norm == "weighted-L2":
        return math.sqrt(quadrature(grid, diff * diff))
    raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")
