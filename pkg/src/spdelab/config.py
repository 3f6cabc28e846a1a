"""Run configuration: a plain ``key = value`` file with dotted keys.

Grammar
-------
* one ``key = value`` pair per line; keys are dotted identifiers
* ``#`` starts a comment (whole line or after a value); blank lines ignored
* lists are comma separated (``coeff.f.params = 0.05, 9.95``)
* floats accept ``inf``; booleans are ``true`` / ``false``
* unknown keys, duplicate keys and malformed values are errors that carry
  the offending line number and key
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .coefficients import KINDS, CoefficientSchedule, TimeFunction
from .grid import WeightedGrid
from .noise import AdditiveNoise, sine_modes
from .oracle import GaussianState, density_on_grid
from .solver import SolverConfig

_KEY_RE = re.compile(r"^[a-z][a-z0-9_]*(\.[A-Za-z][A-Za-z0-9_]*)*$")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


def _float(text: str) -> float:
    v = float(text)
    if math.isnan(v):
        raise ValueError("nan is not allowed")
    return v


def _int(text: str) -> int:
    return int(text)


def _bool(text: str) -> bool:
    low = text.lower()
    if low not in ("true", "false"):
        raise ValueError("expected true or false")
    return low == "true"


def _floats(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",")]
    if not all(parts):
        raise ValueError("empty list entry")
    return tuple(_float(p) for p in parts)


def _ints(text: str) -> tuple[int, ...]:
    parts = [p.strip() for p in text.split(",")]
    if not all(parts):
        raise ValueError("empty list entry")
    return tuple(int(p) for p in parts)


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _odd_grid(v):
    return v >= 3 and v % 2 == 1


def _all_odd(vs):
    return len(vs) >= 1 and all(_odd_grid(v) for v in vs)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any = None
    required: bool = False
    check: Callable[[Any], bool] | None = None
    rule: str = ""


_KIND = _choice(*KINDS)

SCHEMA: dict[str, Key] = {
    "coeff.f.kind": Key(_KIND, "constant"),
    "coeff.f.params": Key(_floats, required=True),
    "coeff.g.kind": Key(_KIND, "constant"),
    "coeff.g.params": Key(_floats, required=True),
    "coeff.g.squared": Key(_bool, False),
    "coeff.T": Key(_float, 1.0, check=_positive, rule="must be > 0"),
    "weight.c": Key(_float, required=True, check=_positive, rule="must be > 0"),
    "weight.mode": Key(_choice("weighted", "unweighted"), "weighted"),
    "grid.d": Key(_int, 1, check=lambda v: v in (1, 2, 3), rule="must be 1, 2 or 3"),
    "grid.L": Key(_float, None, check=_positive, rule="must be > 0"),
    "grid.n": Key(_int, 513, check=_odd_grid, rule="must be odd and >= 3"),
    "noise.modes": Key(_int, 0, check=_nonneg, rule="must be >= 0"),
    "noise.q0": Key(_float, 1.0, check=_nonneg, rule="must be >= 0"),
    "noise.decay": Key(_float, 2.0, check=_positive, rule="must be > 0"),
    "noise.b.kind": Key(_KIND, "constant"),
    "noise.b.params": Key(_floats, (1.0,)),
    "noise.h.kind": Key(_KIND, "constant"),
    "noise.h.params": Key(_floats, (math.inf,)),
    "solver.dt": Key(_float, 1e-3, check=_positive, rule="must be > 0"),
    "solver.scheme": Key(_choice("semi-implicit", "explicit"), "semi-implicit"),
    "solver.T": Key(_float, None, check=_positive, rule="must be > 0"),
    "solver.checkpoint_every": Key(_int, 100, check=lambda v: v >= 1, rule="must be >= 1"),
    "run.seed": Key(_int, None, check=_nonneg, rule="must be >= 0"),
    "run.n_paths": Key(_int, 1, check=lambda v: v >= 1, rule="must be >= 1"),
    "init.variance": Key(_float, 0.25, check=_positive, rule="must be > 0"),
    "init.mean": Key(_floats, None),
    "particles.n": Key(_int, 100_000, check=lambda v: v == 0 or v >= 100, rule="must be 0 or >= 100"),
    "particles.dt": Key(_float, 1e-3, check=_positive, rule="must be > 0"),
    "particles.grid_n": Key(_int, 129, check=_odd_grid, rule="must be odd and >= 3"),
    "compare.linf_tol": Key(_float, 1e-3, check=_positive, rule="must be > 0"),
    "compare.variance_tol": Key(_float, 5e-4, check=_positive, rule="must be > 0"),
    "compare.particle_l1_tol": Key(_float, 0.02, check=_positive, rule="must be > 0"),
    "verify.family_size": Key(_int, 50, check=lambda v: v >= 1, rule="must be >= 1"),
    "verify.family_seed": Key(_int, 0, check=_nonneg, rule="must be >= 0"),
    "verify.t": Key(_float, None, check=_nonneg, rule="must be >= 0"),
    "verify.grids": Key(_ints, (129, 257, 513), check=_all_odd, rule="must be odd sizes >= 3"),
    "verify.adversarial": Key(_int, 200, check=_nonneg, rule="must be >= 0"),
}


def parse_text(text: str) -> dict[str, Any]:
    """Parse and validate; returns only the keys present in the text."""
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno)
        key, _, val = (p.strip() for p in line.partition("="))
        if not _KEY_RE.match(key):
            raise ConfigError("malformed key", lineno, key)
        if key not in SCHEMA:
            raise ConfigError("unknown key", lineno, key)
        if key in values:
            raise ConfigError("duplicate key", lineno, key)
        if not val:
            raise ConfigError("missing value", lineno, key)
        spec = SCHEMA[key]
        try:
            parsed = spec.parse(val)
        except ValueError as exc:
            raise ConfigError(f"bad value {val!r} ({exc})", lineno, key) from None
        if spec.check is not None and not spec.check(parsed):
            raise ConfigError(f"bad value {val!r} ({spec.rule})", lineno, key)
        values[key] = parsed
    for key, spec in SCHEMA.items():
        if spec.required and key not in values:
            raise ConfigError("required key is missing", None, key)
    return values


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=dict)
    source: str = "<text>"

    @classmethod
    def from_text(cls, text: str, source: str = "<text>") -> "RunConfig":
        return cls(parse_text(text), source)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return cls.from_text(text, str(path))

    def get(self, key: str):
        if key not in SCHEMA:
            raise KeyError(key)
        return self.values.get(key, SCHEMA[key].default)

    def override(self, key: str, value) -> None:
        spec = SCHEMA[key]
        if spec.check is not None and not spec.check(value):
            raise ConfigError(f"bad override {value!r} ({spec.rule})", None, key)
        self.values[key] = value

    # -- derived objects -----------------------------------------------------

    def _time_function(self, prefix: str, squared: bool = False) -> TimeFunction:
        try:
            return TimeFunction(self.get(prefix + ".kind"), self.get(prefix + ".params"), squared)
        except ValueError as exc:
            raise ConfigError(str(exc), None, prefix + ".params") from None

    def schedule(self) -> CoefficientSchedule:
        f = self._time_function("coeff.f")
        g = self._time_function("coeff.g", self.get("coeff.g.squared"))
        return CoefficientSchedule(f, g, T=self.get("coeff.T"))

    @property
    def c(self) -> float:
        return self.get("weight.c")

    @property
    def weighted(self) -> bool:
        return self.get("weight.mode") == "weighted"

    def grid(self, n: int | None = None) -> WeightedGrid:
        d = self.get("grid.d")
        c = self.c
        L = self.get("grid.L")
        L = 8 * math.sqrt(c) if L is None else L
        try:
            return WeightedGrid(d, L, n or self.get("grid.n"), c if self.weighted else math.inf)
        except ValueError as exc:
            raise ConfigError(str(exc), None, "grid.L") from None

    @property
    def T(self) -> float:
        T = self.get("solver.T")
        return self.get("coeff.T") if T is None else T

    def solver_config(self) -> SolverConfig:
        seed = self.get("run.seed")
        return SolverConfig(dt=self.get("solver.dt"), T=self.T, scheme=self.get("solver.scheme"),
                            seed=0 if seed is None else seed, n_paths=self.get("run.n_paths"),
                            checkpoint_every=self.get("solver.checkpoint_every"))

    def noise(self, grid: WeightedGrid) -> AdditiveNoise | None:
        m = self.get("noise.modes")
        if m == 0:
            return None
        spec = sine_modes(grid, m, self.get("noise.q0"), self.get("noise.decay"))
        return AdditiveNoise(spec, self._time_function("noise.b"), self._time_function("noise.h"))

    @property
    def stochastic(self) -> bool:
        return self.get("noise.modes") > 0

    def require_seed(self) -> int:
        seed = self.get("run.seed")
        if seed is None:
            raise ConfigError("stochastic commands need a seed", None, "run.seed")
        return seed

    def initial_state(self) -> GaussianState:
        d = self.get("grid.d")
        mean = self.get("init.mean") or (0.0,) * d
        if len(mean) != d:
            raise ConfigError(f"expected {d} entries", None, "init.mean")
        return GaussianState(mean, self.get("init.variance"))

    def initial_condition(self, grid: WeightedGrid):
        return density_on_grid(self.initial_state(), grid, zero_boundary=True)

    def verify_time(self) -> float:
        t = self.get("verify.t")
        return self.get("coeff.T") / 2 if t is None else t
