"""Truncated tensor grids carrying the weight w(x) = exp(|x|^2 / 2c), and the
discrete weighted L2 / three-term V-norm machinery built on them.

``c = inf`` is the unweighted mode (w = 1), used when the drift vanishes.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

# exp(709) is the float64 limit; keep well clear so products like v^2 w stay finite
MAX_EXPONENT = 600.0


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WeightedGrid:
    d: int
    L: float
    n: int
    c: float = 1.0

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        if self.n < 3 or self.n % 2 == 0:
            raise ValueError("n must be odd and >= 3 so that x = 0 is a node")
        if not self.L > 0 or not self.c > 0:
            raise ValueError("L and c must be positive")
        if self.d * self.L**2 / (2 * self.c) > MAX_EXPONENT:
            raise ValueError(
                f"weight overflows: d L^2 / 2c = {self.d * self.L**2 / (2 * self.c):.1f} "
                f"> {MAX_EXPONENT}")

    @classmethod
    def default(cls, d: int = 1, n: int = 513, c: float = 1.0) -> "WeightedGrid":
        return cls(d, 8.0 * math.sqrt(c), n, c)

    def same_as(self, other: "WeightedGrid") -> bool:
        return (self.d, self.L, self.n, self.c) == (other.d, other.L, other.n, other.c)

    def with_n(self, n: int) -> "WeightedGrid":
        return WeightedGrid(self.d, self.L, n, self.c)

    @property
    def h(self) -> float:
        return 2 * self.L / (self.n - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def weighted(self) -> bool:
        return math.isfinite(self.c)

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Per-axis coordinate arrays, broadcast to the full grid shape."""
        return tuple(np.meshgrid(*([self.axis] * self.d), indexing="ij"))

    @cached_property
    def r2(self) -> np.ndarray:
        return sum(x**2 for x in self.coords)

    @cached_property
    def weight(self) -> np.ndarray:
        if not self.weighted:
            return np.ones(self.shape)
        return np.exp(self.r2 / (2 * self.c))

    @cached_property
    def quad(self) -> np.ndarray:
        """Tensor trapezoid weights."""
        q1 = np.full(self.n, self.h)
        q1[0] = q1[-1] = self.h / 2
        out = q1
        for _ in range(self.d - 1):
            out = np.multiply.outer(out, q1)
        return out

    @cached_property
    def interior(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.d] = True
        return mask

    def sample(self, fn, zero_boundary: bool = True) -> "GridFunction":
        values = np.asarray(fn(*self.coords), dtype=float)
        values = np.broadcast_to(values, self.shape).copy()
        if zero_boundary:
            values[~self.interior] = 0.0
        return GridFunction(self, values)

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape))


class GridFunction:
    """Real values on a ``WeightedGrid``; immutable once built.

    State functions (elements of V) carry zero boundary values; derived
    quantities such as gradient components need not.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: WeightedGrid, values):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    def _check(self, other: "GridFunction"):
        if not self.grid.same_as(other.grid):
            raise GridMismatch("grid functions live on different grids")

    def __add__(self, other):
        self._check(other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, a: float):
        return GridFunction(self.grid, a * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __repr__(self):
        return f"GridFunction(d={self.grid.d}, n={self.grid.n}, max|v|={np.abs(self.values).max():.3g})"


def weight_eval(grid: WeightedGrid, node) -> float:
    node = tuple(node)
    if len(node) != grid.d or any(not 0 <= i < grid.n for i in node):
        raise IndexError(f"node {node} out of range")
    return float(grid.weight[node])


def _same_grid(*fs: GridFunction):
    for f in fs[1:]:
        fs[0]._check(f)


def quadrature(grid: WeightedGrid, values: np.ndarray, weighted: bool = True) -> float:
    """Trapezoid sum of ``values`` (times w when ``weighted``)."""
    q = grid.quad * grid.weight if weighted else grid.quad
    return float(np.sum(q * values))


def weighted_l2_inner(v: GridFunction, u: GridFunction) -> float:
    _same_grid(v, u)
    return quadrature(v.grid, v.values * u.values)


def h_norm_sq(v: GridFunction) -> float:
    return weighted_l2_inner(v, v)


def _grad_arrays(values: np.ndarray, h: float) -> list[np.ndarray]:
    g = np.gradient(values, h, edge_order=2)
    return [g] if values.ndim == 1 else list(g)


def gradient(v: GridFunction) -> list[GridFunction]:
    """Second-order central differences, one-sided second order on the boundary."""
    return [GridFunction(v.grid, g) for g in _grad_arrays(v.values, v.grid.h)]


def ou_gradient(v: GridFunction) -> list[GridFunction]:
    """grad(v w) / w, in product-rule form grad v + (x / c) v."""
    grid = v.grid
    grads = _grad_arrays(v.values, grid.h)
    if not grid.weighted:
        return [GridFunction(grid, g) for g in grads]
    return [GridFunction(grid, g + x / grid.c * v.values) for g, x in zip(grads, grid.coords)]


def divergence(components: list[np.ndarray], h: float) -> np.ndarray:
    """Central-difference divergence of a vector field given as arrays."""
    return sum(np.gradient(comp, h, axis=k, edge_order=2) for k, comp in enumerate(components))


@dataclass(frozen=True)
class VNormTerms:
    mass: float      # int v^2 w
    grad: float      # int |grad v|^2 w
    ou: float        # int |grad(v w)/w|^2 w

    @property
    def total(self) -> float:
        return self.mass + self.grad + self.ou


def v_norm_terms(v: GridFunction) -> VNormTerms:
    grid = v.grid
    grads = _grad_arrays(v.values, grid.h)
    grad = sum(quadrature(grid, g * g) for g in grads)
    if grid.weighted:
        ous = [g + x / grid.c * v.values for g, x in zip(grads, grid.coords)]
        ou = sum(quadrature(grid, o * o) for o in ous)
    else:
        ou = grad
    return VNormTerms(h_norm_sq(v), grad, ou)


def v_norm(v: GridFunction) -> float:
    return math.sqrt(v_norm_terms(v).total)


# -- test functions ---------------------------------------------------------

def _monomials(d: int, degree: int) -> list[tuple[int, ...]]:
    return [e for e in product(range(degree + 1), repeat=d) if sum(e) <= degree]


@dataclass(frozen=True)
class GaussPoly:
    """v(x) = p(x) exp(-|x|^2 / 2s), p a polynomial in monomial form."""

    exponents: tuple[tuple[int, ...], ...]
    coeffs: tuple[float, ...]
    s: float
    center: tuple[float, ...] | None = None

    @property
    def d(self) -> int:
        return len(self.exponents[0])

    def poly(self, *xs):
        out = 0.0
        for e, a in zip(self.exponents, self.coeffs):
            term = a
            for x, k in zip(xs, e):
                term = term * x**k
            out = out + term
        return out

    def __call__(self, *xs):
        ys = xs if self.center is None else [x - m for x, m in zip(xs, self.center)]
        r2 = sum(y**2 for y in ys)
        return self.poly(*ys) * np.exp(-r2 / (2 * self.s))

    def on(self, grid: WeightedGrid) -> GridFunction:
        if grid.d != self.d:
            raise ValueError("dimension mismatch")
        return grid.sample(self)

    def with_params(self, coeffs, s) -> "GaussPoly":
        return GaussPoly(self.exponents, tuple(float(a) for a in coeffs), float(s), self.center)

    # exact polynomial algebra, used by the Gauss-Hermite reference integrals
    def terms(self) -> dict:
        out = {}
        for e, a in zip(self.exponents, self.coeffs):
            out[e] = out.get(e, 0.0) + a
        return out

    @classmethod
    def from_terms(cls, terms: dict, s: float, center=None) -> "GaussPoly":
        items = sorted(terms.items()) or [((0,), 0.0)]
        return cls(tuple(e for e, _ in items), tuple(a for _, a in items), s, center)

    def partial(self, k: int) -> "GaussPoly":
        """d/dx_k of p e^{-|x|^2/2s} = (d_k p - x_k p / s) e^{-|x|^2/2s}."""
        if self.center is not None:
            raise NotImplementedError("exact derivatives need a centred member")
        out: dict = {}
        for e, a in self.terms().items():
            if e[k]:
                e2 = list(e)
                e2[k] -= 1
                out[tuple(e2)] = out.get(tuple(e2), 0.0) + a * e[k]
            e3 = list(e)
            e3[k] += 1
            out[tuple(e3)] = out.get(tuple(e3), 0.0) - a / self.s
        return GaussPoly.from_terms(out, self.s)

    def times_x(self, k: int, scale: float = 1.0) -> "GaussPoly":
        out = {}
        for e, a in self.terms().items():
            e2 = list(e)
            e2[k] += 1
            out[tuple(e2)] = a * scale
        return GaussPoly.from_terms(out, self.s)

    def plus(self, other: "GaussPoly") -> "GaussPoly":
        if other.s != self.s:
            raise ValueError("members must share the Gaussian width")
        out = self.terms()
        for e, a in other.terms().items():
            out[e] = out.get(e, 0.0) + a
        return GaussPoly.from_terms(out, self.s)

    def scaled(self, a: float) -> "GaussPoly":
        return GaussPoly(self.exponents, tuple(a * x for x in self.coeffs), self.s, self.center)


def sample_family(count: int, seed: int, c: float, d: int, degree: int = 4,
                  s_range: tuple[float, float] = (0.25, 0.5)) -> list[GaussPoly]:
    """Reproducible Gaussian-times-polynomial members with s in s_range * c.

    s <= c/2 keeps v^2 w decaying like exp(-3|x|^2 / 2c) at worst.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    c_eff = c if math.isfinite(c) else 1.0
    exps = tuple(_monomials(d, degree))
    rng = np.random.default_rng([seed, d, 7919])
    members = []
    for _ in range(count):
        s = c_eff * rng.uniform(*s_range)
        # higher monomials scaled by s^{-|e|/2} so every term is O(1) at |x| ~ sqrt(s)
        coeffs = [rng.normal() / (s ** (sum(e) / 2) * (1 + sum(e))) for e in exps]
        coeffs[0] = 1.0 + abs(coeffs[0])
        members.append(GaussPoly(exps, tuple(coeffs), s))
    return members


def test_function_family(grid: WeightedGrid, count: int, seed: int) -> list[GridFunction]:
    return [m.on(grid) for m in sample_family(count, seed, grid.c, grid.d)]


test_function_family.__test__ = False  # keep pytest from collecting it


# -- CSV snapshots ----------------------------------------------------------

_AXES = ("x", "y", "z")


def write_csv(v: GridFunction, path) -> None:
    grid = v.grid
    cols = list(_AXES[: grid.d]) + ["value"]
    flat = [x.ravel() for x in grid.coords] + [v.values.ravel()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in zip(*flat):
            w.writerow([format(float(a), ".17g") for a in row])


def read_csv(path, grid: WeightedGrid) -> GridFunction:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return GridFunction(grid, data[:, -1].reshape(grid.shape))
