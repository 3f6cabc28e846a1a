"""Discrete drift-diffusion operator A(t, v) = f(t) div(x v) + g(t)^2/2 lap(v)
and its pairings against the weighted inner product.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coefficients import CONDITION_TOL, CoefficientSchedule, condition_slack
from .grid import GridFunction, WeightedGrid, _grad_arrays, quadrature, v_norm, weighted_l2_inner


def _interior(d: int):
    return (Ellipsis,) + (slice(1, -1),) * d


def _axis_slices(d: int, k: int, sl: slice, rest: slice):
    idx = [rest] * d
    idx[k] = sl
    return (Ellipsis,) + tuple(idx)


def flux_divergence(grid: WeightedGrid, values: np.ndarray) -> np.ndarray:
    """Conservative central divergence of x * v, zero on boundary nodes.

    Interface fluxes F_{i+1/2} = x_{i+1/2} (v_i + v_{i+1}) / 2 per axis.
    Trailing d axes of ``values`` are spatial; leading axes are batch.
    """
    d, h = grid.d, grid.h
    out = np.zeros(values.shape)
    xm = (grid.axis[:-1] + grid.axis[1:]) / 2
    full = slice(None)
    for k in range(d):
        shape = [1] * d
        shape[k] = grid.n - 1
        lo = _axis_slices(d, k, slice(0, -1), full)
        hi = _axis_slices(d, k, slice(1, None), full)
        flux = xm.reshape(shape) * (values[lo] + values[hi]) / 2
        # node i (interior) gets (F_{i+1/2} - F_{i-1/2}) / h
        dflux = (flux[hi] - flux[lo]) / h
        out[_interior(d)] += dflux[_axis_slices(d, k, full, slice(1, -1))]
    return out


def laplacian(grid: WeightedGrid, values: np.ndarray) -> np.ndarray:
    """(2d+1)-point Laplacian on interior nodes, zero on the boundary."""
    d = grid.d
    out = np.zeros(values.shape)
    inner = slice(1, -1)
    acc = -2.0 * d * values[_interior(d)]
    for k in range(d):
        acc = acc + values[_axis_slices(d, k, slice(0, -2), inner)]
        acc = acc + values[_axis_slices(d, k, slice(2, None), inner)]
    out[_interior(d)] = acc / grid.h**2
    return out


def apply_A(t: float, v: GridFunction, s: CoefficientSchedule) -> GridFunction:
    f = s.f(t)
    g2 = s.g.square(t)
    grid = v.grid
    out = (g2 / 2) * laplacian(grid, v.values)
    if f != 0.0:
        out = out + f * flux_divergence(grid, v.values)
    return GridFunction(grid, out)


def weak_pairing(u: GridFunction, v: GridFunction, t: float, s: CoefficientSchedule) -> float:
    """<u, A(t) v> in the weighted inner product."""
    return weighted_l2_inner(u, apply_A(t, v, s))


def mass_coefficient(t: float, s: CoefficientSchedule, c: float, d: int, variant: str = "stated") -> float:
    """Coefficient of |v|_H^2 in the upper bound on <v, A v>.

    ``stated``: d f/2 - g^2/(4c), the bound as usually written, which drops
    the positive term (d g^2/2c)|v|_H^2 and so is not an upper bound.
    ``sharp``: d f/2 + d g^2/(4c), exact whenever f = g^2/(2c).
    """
    f = s.f(t)
    g2 = s.g.square(t)
    if variant == "stated":
        return d * f / 2 - g2 / (4 * c)
    if variant == "sharp":
        return d * f / 2 + d * g2 / (4 * c)
    raise ValueError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class EnergyDecomposition:
    t: float
    pairing: float
    mass_term: float
    grad_term: float
    slack: float
    guaranteed: bool
    h_norm_sq: float = math.nan

    def row(self) -> dict:
        return {"t": self.t, "h_norm_sq": self.h_norm_sq, "pairing": self.pairing,
                "mass_term": self.mass_term, "grad_term": self.grad_term, "slack": self.slack}


def energy_decomposition(v: GridFunction, t: float, s: CoefficientSchedule,
                         variant: str = "stated") -> EnergyDecomposition:
    """slack = mass_term - grad_term - <v, A v>; nonnegative iff the bound holds."""
    grid = v.grid
    pairing = weak_pairing(v, v, t, s)
    mass = weighted_l2_inner(v, v)
    grads = _grad_arrays(v.values, grid.h)
    grad = sum(quadrature(grid, g * g) for g in grads)
    if grid.weighted:
        coef = mass_coefficient(t, s, grid.c, grid.d, variant)
        guaranteed = bool(condition_slack(s, grid.c, t) >= -CONDITION_TOL)
    else:
        coef = grid.d * s.f(t) / 2
        guaranteed = s.f(t) == 0.0
    mass_term = coef * mass
    grad_term = s.g.square(t) / 2 * grad
    return EnergyDecomposition(t, pairing, mass_term, grad_term, mass_term - grad_term - pairing,
                               guaranteed, mass)


def dual_norm_lower_bound(v: GridFunction, t: float, s: CoefficientSchedule,
                          candidates: list[GridFunction]) -> float:
    """max over candidates u of <u, A v> / |u|_V, a lower bound on |A v|_{V*}.

    Signed: pass both u and -u to bound the dual norm rather than a one-sided sup.
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    Av = apply_A(t, v, s)
    best = -math.inf
    for u in candidates:
        nu = v_norm(u)
        if nu == 0:
            raise ValueError("candidates must be nonzero")
        best = max(best, weighted_l2_inner(u, Av) / nu)
    return best
