"""Time-dependent coefficients f, g, h and the admissibility condition
f(t) - g(t)^2 / (2c) >= 0 linking drift, diffusion and the weight scale c.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

KINDS = ("constant", "linear", "polynomial", "piecewise-constant", "tabulated")
CONDITION_TOL = 1e-12
DEFAULT_SAMPLES = 10_000


class DomainError(ValueError):
    """Raised when a schedule is evaluated outside [0, T]."""


@dataclass(frozen=True)
class TimeFunction:
    """A scalar function of time on [0, T].

    ``params`` layout per kind:

    * constant: ``(a,)``
    * linear: ``(a, b)`` giving ``a + b t``
    * polynomial: ascending coefficients
    * piecewise-constant: ``(v0, t1, v1, t2, v2, ...)``; value ``v_i`` on
      ``(t_i, t_{i+1}]`` (left-continuous), ``v0`` also at ``t = 0``
    * tabulated: ``(t0, v0, t1, v1, ...)`` linearly interpolated, held
      constant outside the table

    With ``squared=True`` the params describe the square of the function and
    evaluation returns its square root (VP-style ``g = sqrt(beta)``).
    """

    kind: str
    params: tuple[float, ...]
    squared: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        p = self.params
        if not p:
            raise ValueError("schedule needs at least one parameter")
        if self.kind == "constant" and len(p) != 1:
            raise ValueError("constant schedule takes one parameter")
        if self.kind == "linear" and len(p) != 2:
            raise ValueError("linear schedule takes two parameters")
        if self.kind == "piecewise-constant":
            if len(p) % 2 != 1:
                raise ValueError("piecewise-constant params are v0, t1, v1, ...")
            if np.any(np.diff(p[1::2]) <= 0):
                raise ValueError("breakpoints must be strictly increasing")
        if self.kind == "tabulated":
            if len(p) < 4 or len(p) % 2:
                raise ValueError("tabulated params are t0, v0, t1, v1, ...")
            if np.any(np.diff(p[0::2]) <= 0):
                raise ValueError("table times must be strictly increasing")

    @classmethod
    def constant(cls, a: float, squared: bool = False) -> "TimeFunction":
        return cls("constant", (a,), squared)

    def _raw(self, t):
        p = self.params
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, p[0])
        if self.kind == "linear":
            return p[0] + p[1] * t
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(t, p)
        if self.kind == "piecewise-constant":
            values = np.asarray(p[0::2])
            breaks = np.asarray(p[1::2])
            return values[np.searchsorted(breaks, t, side="left")]
        return np.interp(t, p[0::2], p[1::2])

    def __call__(self, t):
        out = self._raw(t)
        if self.squared:
            out = np.sqrt(out)
        return out if np.ndim(out) else float(out)

    def square(self, t):
        """The squared value, without a sqrt round trip when ``squared``."""
        out = self._raw(t) if self.squared else self._raw(t) ** 2
        return out if np.ndim(out) else float(out)

    def is_zero(self) -> bool:
        if self.kind == "tabulated":
            return all(v == 0.0 for v in self.params[1::2])
        if self.kind == "piecewise-constant":
            return all(v == 0.0 for v in self.params[0::2])
        return all(v == 0.0 for v in self.params)

    def breakpoints(self) -> tuple[float, ...]:
        if self.kind == "piecewise-constant":
            return self.params[1::2]
        if self.kind == "tabulated":
            return self.params[0::2]
        return ()


@dataclass(frozen=True)
class CoefficientSchedule:
    """Drift strength f, diffusion g and the noise bound h on [0, T]."""

    f: TimeFunction
    g: TimeFunction
    T: float = 1.0
    h: TimeFunction | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")

    @classmethod
    def constant(cls, f: float, g: float, T: float = 1.0) -> "CoefficientSchedule":
        return cls(TimeFunction.constant(f), TimeFunction.constant(g), T)

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        # slack for t = k*dt landing a few ulps past T
        if np.any(t < 0) or np.any(t > self.T * (1 + 1e-12)):
            raise DomainError(f"t={t} outside [0, {self.T}]")

    def sample_times(self, n_samples: int = DEFAULT_SAMPLES) -> np.ndarray:
        """Uniform grid plus any schedule breakpoints inside [0, T]."""
        if n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        ts = [np.linspace(0.0, self.T, n_samples)]
        for fn in (self.f, self.g):
            b = np.asarray(fn.breakpoints())
            b = b[(b >= 0) & (b <= self.T)]
            # left-continuous pieces: probe just past each breakpoint too
            ts.append(b)
            ts.append(np.minimum(b + 1e-12 * max(self.T, 1.0), self.T))
        return np.unique(np.concatenate(ts))

    @property
    def f_zero(self) -> bool:
        return self.f.is_zero()


def eval_coeffs(s: CoefficientSchedule, t: float) -> tuple[float, float]:
    s._check_time(t)
    return s.f(t), s.g(t)


@dataclass(frozen=True)
class ConditionReport:
    holds: bool
    min_slack: float
    argmin_t: float


def condition_slack(s: CoefficientSchedule, c: float, t):
    """f(t) - g(t)^2 / (2c)."""
    return s.f(t) - s.g.square(t) / (2.0 * c)


def check_condition(s: CoefficientSchedule, c: float,
                    n_samples: int = DEFAULT_SAMPLES) -> ConditionReport:
    if not c > 0:
        raise ValueError("weight parameter c must be positive")
    ts = s.sample_times(n_samples)
    slack = np.asarray(condition_slack(s, c, ts))
    i = int(np.argmin(slack))
    return ConditionReport(bool(slack[i] >= -CONDITION_TOL), float(slack[i]), float(ts[i]))


def minimal_c(s: CoefficientSchedule, n_samples: int = DEFAULT_SAMPLES) -> float:
    """Smallest weight parameter for which the condition holds on the samples.

    Returns ``math.inf`` when f vanishes at a sample where g does not.
    """
    ts = s.sample_times(n_samples)
    f = np.asarray(s.f(ts), dtype=float)
    g2 = np.asarray(s.g.square(ts), dtype=float)
    if np.any((f <= 0) & (g2 > 0)):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(g2 > 0, g2 / (2.0 * f), 0.0)
    return float(ratio.max())


@dataclass(frozen=True)
class ConstantsReport:
    """Constants for the monotonicity, coercivity and growth inequalities.

    ``K_A3`` is the coercivity constant in its published form; it is not a
    valid bound in general (see ``K_A3_corrected``), and is reported so the
    verification battery can test it as stated.
    """

    M_f: float
    M_d: float
    alpha: float
    K_A2: float
    K_A3: float
    K_A3_corrected: float
    K_A4: float
    valid: bool
    d: int
    c: float
    extra: dict = field(default_factory=dict, compare=False)

    def k_a3_at(self, s: CoefficientSchedule, t, corrected: bool = False) -> float:
        return float(_k_a3(s, self.c, self.d, self.alpha, np.asarray(t), corrected))

    def k_a4_at(self, s: CoefficientSchedule, t) -> float:
        return float(_k_a4(s, self.c, self.M_d, np.asarray(t)))


def _k_a3(s, c, d, alpha, ts, corrected):
    f = s.f(ts)
    g2 = s.g.square(ts)
    if corrected:
        # from 2<v,Av> <= (d f + d g^2/(2c)) |v|_H^2 - g^2 |grad v|_H^2 and 2 alpha <= g^2
        return alpha * (1 - d / c) + d * f + d * g2 / (2 * c)
    return alpha * (1 - d / c) + d * f - g2 / (2 * c)


def _k_a4(s, c, M_d, ts):
    f = s.f(ts)
    g2 = s.g.square(ts)
    return c * f * M_d**2 + np.abs(g2 / 2 - c * f) * M_d


def constants_report(s: CoefficientSchedule, c: float, d: int,
                     n_samples: int = DEFAULT_SAMPLES) -> ConstantsReport:
    ts = s.sample_times(n_samples)
    f = np.asarray(s.f(ts), dtype=float)
    g2 = np.asarray(s.g.square(ts), dtype=float)
    M_f = float(f.max())
    M_d = max(1.0, d / c)
    alpha = 0.5 * float(g2.min()) / 2
    return ConstantsReport(
        M_f=M_f,
        M_d=M_d,
        alpha=alpha,
        K_A2=d * M_f,
        K_A3=float(np.max(_k_a3(s, c, d, alpha, ts, False))),
        K_A3_corrected=float(np.max(_k_a3(s, c, d, alpha, ts, True))),
        K_A4=float(np.max(_k_a4(s, c, M_d, ts))),
        valid=check_condition(s, c, n_samples).holds,
        d=d,
        c=c,
    )
