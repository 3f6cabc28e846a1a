"""Truncated Q-Wiener noise on the grid: sine eigenmodes with summable
eigenvalues, scaled by a scalar b(t) whose Hilbert-Schmidt norm must stay
below h(t).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from .coefficients import TimeFunction
from .grid import GridFunction, WeightedGrid, quadrature


def stream(seed: int, path: int, step: int) -> np.random.Generator:
    """Counter-based stream addressed by (seed, path, step).

    Philox key = (seed, path); counter word 1 = step, so every step owns a
    disjoint 2^64-block of the path's counter space.
    """
    key = np.array([seed, path], dtype=np.uint64)
    counter = np.array([0, step, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True, eq=False)
class QWienerSpec:
    grid: WeightedGrid
    modes: np.ndarray          # (m_total, *grid.shape)
    eigenvalues: np.ndarray    # (m_total,), positive, nonincreasing
    m: int                     # modes per axis

    @property
    def trace(self) -> float:
        return float(self.eigenvalues.sum())

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    @cached_property
    def h_norms_sq(self) -> np.ndarray:
        return np.array([quadrature(self.grid, e * e) for e in self.modes])


def sine_modes(grid: WeightedGrid, m: int, q0: float = 1.0, decay: float = 2.0) -> QWienerSpec:
    """Dirichlet sine basis, orthonormal in unweighted L2 on [-L, L]^d.

    q_k = q0 * prod_j k_j^{-decay} for tensor index (k_1, ..., k_d).
    """
    if m < 0 or q0 < 0:
        raise ValueError("m and q0 must be nonnegative")
    L = grid.L
    axis_modes = [np.sin(k * np.pi * (grid.axis + L) / (2 * L)) / math.sqrt(L)
                  for k in range(1, m + 1)]
    for e in axis_modes:
        e[0] = e[-1] = 0.0
    idx = list(product(range(1, m + 1), repeat=grid.d))
    q = np.array([q0 * math.prod(k ** -decay for k in ks) for ks in idx])
    order = np.argsort(-q, kind="stable")
    modes = np.empty((len(idx),) + grid.shape)
    for j, i in enumerate(order):
        mode = axis_modes[idx[i][0] - 1]
        for k in idx[i][1:]:
            mode = np.multiply.outer(mode, axis_modes[k - 1])
        modes[j] = mode
    if q0 == 0:
        modes, q = modes[:0], q[:0]
    return QWienerSpec(grid, modes, q[order] if len(q) else q, m)


@dataclass(frozen=True)
class NoiseIncrement:
    dt: float
    values: GridFunction
    coefficients: np.ndarray   # xi_k * sqrt(q_k dt) * b(t)


def _coefficients(spec: QWienerSpec, t: float, dt: float, b: TimeFunction, rng) -> np.ndarray:
    xi = rng.standard_normal(spec.size)
    return b(t) * np.sqrt(spec.eigenvalues * dt) * xi


def sample_increment(spec: QWienerSpec, t: float, dt: float, b: TimeFunction,
                     rng: np.random.Generator) -> NoiseIncrement:
    """b(t) * sum_k sqrt(q_k dt) xi_k e_k."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    coeffs = _coefficients(spec, t, dt, b, rng)
    values = np.tensordot(coeffs, spec.modes, axes=1) if spec.size else np.zeros(spec.grid.shape)
    return NoiseIncrement(dt, GridFunction(spec.grid, values), coeffs)


def ensemble_increments(spec: QWienerSpec, t: float, dt: float, b: TimeFunction,
                        seed: int, paths, step: int) -> np.ndarray:
    """Increments for several paths at one step, shape (len(paths), *grid.shape).

    Row i draws the same coefficients as ``sample_increment(..., stream(seed,
    paths[i], step))``; values agree to roundoff (batched contraction).
    """
    if not spec.size:
        return np.zeros((len(paths),) + spec.grid.shape)
    coeffs = np.stack([_coefficients(spec, t, dt, b, stream(seed, p, step)) for p in paths])
    return np.tensordot(coeffs, spec.modes, axes=1)


def project(spec: QWienerSpec, v: GridFunction) -> np.ndarray:
    """Unweighted L2 coefficients of v along each mode."""
    q = spec.grid.quad
    return np.array([float(np.sum(q * e * v.values)) for e in spec.modes])


@dataclass(frozen=True)
class HSCheck:
    norm: float
    bound: float
    ok: bool


def hs_norm_sq(spec: QWienerSpec, b: TimeFunction, t: float) -> float:
    """|b(t)|^2 sum_k q_k |e_k|_H^2, the squared weighted Hilbert-Schmidt norm."""
    if not spec.size:
        return 0.0
    return float(b(t) ** 2 * np.sum(spec.eigenvalues * spec.h_norms_sq))


def hs_norm_bound_check(spec: QWienerSpec, b: TimeFunction, h: TimeFunction, t: float) -> HSCheck:
    norm = math.sqrt(hs_norm_sq(spec, b, t))
    bound = float(h(t))
    return HSCheck(norm, bound, norm <= bound)


@dataclass(frozen=True)
class AdditiveNoise:
    """B(t) = b(t) * identity on the span of the noise modes, bounded by h(t)."""

    spec: QWienerSpec
    b: TimeFunction
    h: TimeFunction

    def check(self, ts) -> list[HSCheck]:
        return [hs_norm_bound_check(self.spec, self.b, self.h, float(t)) for t in ts]
