"""Executable residual and slack checks for the weighted-space identities, the
energy bound, and the monotonicity / coercivity / growth inequalities, with
grid-refinement studies and an adversarial search.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .coefficients import CoefficientSchedule, condition_slack, constants_report
from .grid import (GaussPoly, GridFunction, VNormTerms, WeightedGrid, _grad_arrays, divergence,
                   quadrature, sample_family, v_norm_terms)
from .operator import apply_A, energy_decomposition, weak_pairing

ORDER_BAND = (1.7, 2.3)
# Frozen regression constants: identity residual <= C_ID h^2 |v|_V^2 and inequality
# deficit <= C_INEQ h^2 (f + g^2) |v|_V^2. Fitted by scripts/calibrate_tolerances.py
# (maxima 0.38 and 0.535 over the default family and configurations), doubled, rounded up.
C_ID = 0.8
C_INEQ = 1.2
ROUNDOFF = 1e-13


@dataclass
class CheckReport:
    name: str
    residuals: list[tuple[int, float]] = field(default_factory=list)
    observed_order: float = math.nan
    status: str = "pass"            # pass | fail | skipped
    tolerance: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["residuals"] = [{"n": n, "residual": r} for n, r in self.residuals]
        out["pass"] = self.passed
        return out


def fit_order(hs, rs) -> float:
    """Least-squares slope of log r against log h."""
    hs = np.asarray(hs, dtype=float)
    rs = np.asarray(rs, dtype=float)
    if len(hs) < 2 or np.any(rs <= 0):
        return math.nan
    return float(np.polyfit(np.log(hs), np.log(rs), 1)[0])


# -- identity residuals on one grid --------------------------------------------

def _vscale(v: GridFunction) -> float:
    return v_norm_terms(v).total


def lemma_3_1_terms(v: GridFunction) -> dict:
    """int div(v^2 grad w) dx in two discretizations.

    ``pointwise``: product-rule integrand (2 v grad v . x/c + v^2 (d/c + |x|^2/c^2)) w;
    second order in h. ``conservative``: central differences of v^2 (x/c) w,
    whose sum telescopes to the discrete boundary flux.
    """
    grid = v.grid
    c, d = grid.c, grid.d
    vv = v.values
    grads = _grad_arrays(vv, grid.h)
    vdotx = sum(g * x for g, x in zip(grads, grid.coords))
    pointwise = quadrature(grid, 2 * vv * vdotx / c + vv**2 * (d / c + grid.r2 / c**2))
    flux = [vv**2 * x / c * grid.weight for x in grid.coords]
    conservative = quadrature(grid, divergence(flux, grid.h), weighted=False)
    return {"pointwise": pointwise, "conservative": conservative}


def lemma_3_1_residual(v: GridFunction, form: str = "pointwise") -> float:
    scale = _vscale(v)
    r = abs(lemma_3_1_terms(v)[form])
    return r / scale if scale else r


def _ou_arrays(v: GridFunction):
    grid = v.grid
    grads = _grad_arrays(v.values, grid.h)
    return grads, [g + x / grid.c * v.values for g, x in zip(grads, grid.coords)]


def lemma_3_2_sides(v: GridFunction) -> tuple[float, float]:
    """(int v div(grad(v w)/w) w, -int |grad(v w)/w|^2 w)."""
    grid = v.grid
    _, ous = _ou_arrays(v)
    lhs = quadrature(grid, v.values * divergence(ous, grid.h))
    rhs = -sum(quadrature(grid, o * o) for o in ous)
    return lhs, rhs


def lemma_3_3_sides(v: GridFunction) -> tuple[float, float]:
    """(int |grad(v w)|^2 w^{-1}, int (|grad v|^2 - (d/c) v^2) w)."""
    grid = v.grid
    grads, ous = _ou_arrays(v)
    lhs = sum(quadrature(grid, o * o) for o in ous)
    rhs = sum(quadrature(grid, g * g) for g in grads) - grid.d / grid.c * quadrature(grid, v.values**2)
    return lhs, rhs


def _relative(lhs: float, rhs: float, v: GridFunction) -> float:
    scale = _vscale(v)
    return abs(lhs - rhs) / scale if scale else abs(lhs - rhs)


IDENTITIES = {
    "lemma_3_1": lambda v: lemma_3_1_residual(v),
    "lemma_3_2": lambda v: _relative(*lemma_3_2_sides(v), v),
    "lemma_3_3": lambda v: _relative(*lemma_3_3_sides(v), v),
}


def _as_grid_functions(v, grids):
    if isinstance(v, GridFunction):
        return [v]
    return [v.on(g) for g in grids]


def _order_ok(order: float) -> bool:
    return ORDER_BAND[0] <= order <= ORDER_BAND[1]


def _richardson(res, hs, order) -> float:
    """Continuum residual estimated from the two finest levels."""
    r1, r2 = res[-2], res[-1]
    p = order if math.isfinite(order) else 2.0
    ratio = (hs[-2] / hs[-1]) ** p
    return abs((ratio * r2 - r1) / (ratio - 1))


def _identity_report(name: str, v, grids) -> CheckReport:
    fs = _as_grid_functions(v, grids)
    res = [(f.grid.n, IDENTITIES[name](f)) for f in fs]
    rep = CheckReport(name, res)
    finest = fs[-1].grid
    rep.tolerance = C_ID * finest.h**2
    hs = [f.grid.h for f in fs]
    rs = [r for _, r in res]
    if len(fs) >= 3:
        rep.observed_order = fit_order(hs, rs)
    rep.details["finest_relative_residual"] = rs[-1]
    if len(fs) >= 2:
        rep.details["extrapolated_residual"] = _richardson(rs, hs, rep.observed_order)
    ok = rs[-1] <= rep.tolerance or rs[-1] <= ROUNDOFF
    if len(fs) >= 3 and rs[-1] > ROUNDOFF:
        ok = ok and _order_ok(rep.observed_order)
    rep.status = "pass" if ok else "fail"
    return rep


def _lemma_3_1_decay(rep: CheckReport, f: GridFunction) -> None:
    cons = lemma_3_1_residual(f, "conservative")
    rep.details["conservative_relative_residual"] = max(cons, rep.details.get("conservative_relative_residual", 0.0))
    # the telescoped boundary flux must sit below the e^{-L^2/4c} envelope
    env = math.exp(-f.grid.L**2 / (4 * f.grid.c))
    rep.details["tail_envelope"] = env
    if cons > max(env, ROUNDOFF):
        rep.status = "fail"
        rep.details["reason"] = "insufficient decay at the truncation boundary"


def check_lemma_3_1(v, grids=None) -> CheckReport:
    rep = _identity_report("lemma_3_1", v, grids)
    _lemma_3_1_decay(rep, _as_grid_functions(v, grids)[-1])
    return rep


def check_lemma_3_2(v, grids=None) -> CheckReport:
    rep = _identity_report("lemma_3_2", v, grids)
    lhs, rhs = lemma_3_2_sides(_as_grid_functions(v, grids)[-1])
    rep.details.update(lhs=lhs, rhs=rhs)
    return rep


def check_lemma_3_3(v, grids=None) -> CheckReport:
    rep = _identity_report("lemma_3_3", v, grids)
    lhs, rhs = lemma_3_3_sides(_as_grid_functions(v, grids)[-1])
    rep.details.update(lhs=lhs, rhs=rhs)
    return rep


def check_identity_family(name: str, family: list[GaussPoly], grids: list[WeightedGrid]) -> CheckReport:
    """One identity over a whole family.

    The order is fitted to the worst member residual per level. Per-member
    orders are kept in ``details``: a member whose leading h^2 error
    coefficient nearly cancels can show an out-of-band order on coarse grids
    while still converging.
    """
    if name not in IDENTITIES:
        raise KeyError(f"unknown identity {name!r}")
    hs = [g.h for g in grids]
    per = [[IDENTITIES[name](m.on(g)) for g in grids] for m in family]
    worst = [max(col) for col in zip(*per)]
    rep = CheckReport(name, [(g.n, r) for g, r in zip(grids, worst)], tolerance=C_ID * hs[-1] ** 2)
    member_orders = [fit_order(hs, r) for r in per]
    if len(grids) >= 3:
        rep.observed_order = fit_order(hs, worst)
    rep.details.update(
        members=len(family),
        finest_relative_residual=worst[-1],
        member_orders=member_orders,
        members_in_band=int(sum(_order_ok(o) for o in member_orders)),
    )
    if len(grids) >= 2:
        rep.details["extrapolated_residual"] = max(_richardson(r, hs, fit_order(hs, r)) for r in per)
    ok = worst[-1] <= rep.tolerance or worst[-1] <= ROUNDOFF
    if len(grids) >= 3 and worst[-1] > ROUNDOFF:
        ok = ok and _order_ok(rep.observed_order)
    rep.status = "pass" if ok else "fail"
    if name == "lemma_3_1":
        for m in family:
            _lemma_3_1_decay(rep, m.on(grids[-1]))
    return rep


STUDIES = dict(IDENTITIES, lemma_3_1_conservative=lambda v: lemma_3_1_residual(v, "conservative"))


def convergence_study(check: str, grids: list[WeightedGrid], members: list[GaussPoly] | None = None) -> CheckReport:
    """Run a residual on each grid (worst over ``members``) and fit the order in h.

    Grids may refine h or grow L at fixed h; for the latter no order is
    fitted and the residual is compared with the e^{-L^2/4c} envelope.
    A residual that grows from one grid to the next above roundoff fails.
    """
    if check not in STUDIES:
        raise KeyError(f"unknown check {check!r}")
    if len(grids) < 3:
        raise ValueError("a convergence study needs at least three grids")
    if members is None:
        g0 = grids[0]
        members = sample_family(1, 0, g0.c, g0.d)
    fn = STUDIES[check]
    rs = [max(fn(m.on(g)) for m in members) for g in grids]
    hs = [g.h for g in grids]
    rep = CheckReport(check, [(g.n, r) for g, r in zip(grids, rs)])
    rep.details["L"] = [g.L for g in grids]
    monotone = all(b <= a or b <= ROUNDOFF for a, b in zip(rs, rs[1:]))
    rep.details["monotone"] = monotone
    ok = monotone
    if len(set(hs)) == len(hs):
        rep.observed_order = fit_order(hs, rs)
        rep.tolerance = C_ID * hs[-1] ** 2
        if rs[-1] > ROUNDOFF:
            ok = ok and _order_ok(rep.observed_order)
    elif len(set(g.L for g in grids)) > 1:
        env = [math.exp(-g.L**2 / (4 * g.c)) for g in grids]
        rep.details["envelope"] = env
        rep.tolerance = env[-1]
        ok = ok and all(r <= max(e, ROUNDOFF) for r, e in zip(rs, env))
    rep.status = "pass" if ok else "fail"
    return rep


# -- continuum reference values ----------------------------------------------------

def _gh_inner(p: GaussPoly, q: GaussPoly, c: float, nodes: int) -> float:
    """int p q w dx for centred members sharing s, by tensor Gauss-Hermite.

    The integrand is poly * exp(-a|x|^2) with a = 1/s - 1/2c, so the rule is
    exact once 2 * nodes exceeds the product degree.
    """
    if p.center is not None or q.center is not None:
        raise NotImplementedError("reference integrals need centred members")
    a = 1 / p.s - (0.0 if math.isinf(c) else 1 / (2 * c))
    if a <= 0:
        return math.inf
    y, wt = np.polynomial.hermite.hermgauss(nodes)
    x = y / math.sqrt(a)
    d = p.d
    X = np.meshgrid(*([x] * d), indexing="ij")
    W = np.ones([nodes] * d)
    for k in range(d):
        shape = [1] * d
        shape[k] = nodes
        W = W * (wt / math.sqrt(a)).reshape(shape)
    return float(np.sum(W * p.poly(*X) * q.poly(*X)))


def reference_terms(member: GaussPoly, c: float, nodes: int = 32) -> VNormTerms:
    """Exact continuum V-norm terms of a centred family member on R^d."""
    d = member.d
    mass = _gh_inner(member, member, c, nodes)
    parts = [member.partial(k) for k in range(d)]
    grad = sum(_gh_inner(p, p, c, nodes) for p in parts)
    ous = [p.plus(member.times_x(k, 1 / c)) for k, p in enumerate(parts)]
    ou = sum(_gh_inner(o, o, c, nodes) for o in ous)
    return VNormTerms(mass, grad, ou)


def lemma_3_3_reference(member: GaussPoly, c: float) -> tuple[float, float]:
    """Continuum (LHS, RHS) of the gradient identity for a centred member."""
    t = reference_terms(member, c)
    return t.ou, t.grad - member.d / c * t.mass


# -- inequality slacks -----------------------------------------------------------

def _ineq_tol(v: GridFunction, t: float, s: CoefficientSchedule) -> float:
    """Discretization allowance; the bias of a tight discrete bound scales with f + g^2."""
    return C_INEQ * v.grid.h**2 * max(1.0, s.f(t) + s.g.square(t))


def lemma_3_4_slack(v: GridFunction, t: float, s: CoefficientSchedule, variant: str = "stated") -> float:
    """Slack of the energy bound normalized by |v|_V^2 (negative = violated)."""
    scale = _vscale(v)
    e = energy_decomposition(v, t, s, variant)
    return e.slack / scale if scale else e.slack


def a2_slack(v: GridFunction, t: float, s: CoefficientSchedule, K_A2: float) -> float:
    scale = _vscale(v)
    val = K_A2 * quadrature(v.grid, v.values**2) - 2 * weak_pairing(v, v, t, s)
    return val / scale if scale else val


def a3_slack(v: GridFunction, t: float, s: CoefficientSchedule, K: float, alpha: float) -> float:
    terms = v_norm_terms(v)
    val = K * terms.mass - 2 * weak_pairing(v, v, t, s) - alpha * terms.total
    return val / terms.total if terms.total else val


def a4_ratio(u: GridFunction, v: GridFunction, t: float, s: CoefficientSchedule) -> float:
    """<u, A v> / (|u|_V |v|_V)."""
    nu = math.sqrt(_vscale(u))
    nv = math.sqrt(_vscale(v))
    if not nu or not nv:
        return 0.0
    return weak_pairing(u, v, t, s) / (nu * nv)


def check_lemma_3_4(v, t: float, s: CoefficientSchedule, c: float | None = None,
                    grid: WeightedGrid | None = None) -> CheckReport:
    """Stated energy bound; the sharp variant is reported alongside in ``details``."""
    members = v if isinstance(v, list) else [v]
    fs = [m if isinstance(m, GridFunction) else m.on(grid) for m in members]
    g = fs[0].grid
    c = g.c if c is None else c
    rep = CheckReport("lemma_3_4")
    slack = float(condition_slack(s, c, t))
    if slack < -1e-12:
        rep.status = "skipped"
        rep.details["reason"] = f"condition fails at t={t}: f - g^2/(2c) = {slack:.6g}"
        return rep
    stated = [lemma_3_4_slack(f, t, s, "stated") for f in fs]
    sharp = [lemma_3_4_slack(f, t, s, "sharp") for f in fs]
    tol = _ineq_tol(fs[0], t, s)
    rep.tolerance = tol
    worst = min(stated)
    rep.residuals = [(g.n, max(0.0, -worst))]
    rep.details.update(
        t=t, members=len(fs), min_slack=worst, violations=int(sum(x < -tol for x in stated)),
        sharp_min_slack=min(sharp), sharp_violations=int(sum(x < -tol for x in sharp)),
    )
    rep.status = "pass" if worst >= -tol else "fail"
    return rep


def _family_grid_fns(family, grid):
    return [m if isinstance(m, GridFunction) else m.on(grid) for m in family]


def check_A2_A3_A4(family, t: float, s: CoefficientSchedule, c: float, d: int,
                   grid: WeightedGrid | None = None, adversarial: int = 0,
                   seed: int = 0, adv: dict | None = None) -> list[CheckReport]:
    """``adversarial`` iterations of hill climbing, or a precomputed ``adv`` result."""
    consts = constants_report(s, c, d)
    fs = _family_grid_fns(family, grid)
    grid = fs[0].grid
    tol = _ineq_tol(fs[0], t, s)
    reports = []

    a2 = [a2_slack(f, t, s, consts.K_A2) for f in fs]
    rep = CheckReport("A2", [(grid.n, max(0.0, -min(a2)))], tolerance=tol)
    rep.details.update(t=t, K=consts.K_A2, min_slack=min(a2), violations=int(sum(x < -tol for x in a2)))
    reports.append(rep)

    a3 = [a3_slack(f, t, s, consts.K_A3, consts.alpha) for f in fs]
    a3c = [a3_slack(f, t, s, consts.K_A3_corrected, consts.alpha) for f in fs]
    rep = CheckReport("A3", [(grid.n, max(0.0, -min(a3)))], tolerance=tol)
    rep.details.update(t=t, K=consts.K_A3, alpha=consts.alpha, min_slack=min(a3),
                       violations=int(sum(x < -tol for x in a3)),
                       K_corrected=consts.K_A3_corrected, corrected_min_slack=min(a3c),
                       corrected_violations=int(sum(x < -tol for x in a3c)))
    reports.append(rep)

    K4 = consts.K_A4
    best = -math.inf
    for v in fs:
        for u in fs:
            best = max(best, abs(a4_ratio(u, v, t, s)))
    rep = CheckReport("A4", [(grid.n, max(0.0, best - K4))], tolerance=tol)
    rep.details.update(t=t, K=K4, max_ratio=best)
    reports.append(rep)

    if adv is None and adversarial:
        members = [m for m in family if isinstance(m, GaussPoly)]
        if members:
            adv = adversarial_search(members, t, s, c, grid, adversarial, seed, consts)
    if adv is not None:
        for r in reports:
            r.details["adversarial"] = adv[r.name]
    for r in reports:
        worst = r.details["min_slack"] if r.name != "A4" else K4 - r.details["max_ratio"]
        if "adversarial" in r.details:
            worst = min(worst, r.details["adversarial"]["worst_slack"])
        r.status = "pass" if worst >= -tol else "fail"
    a3r = reports[1]
    if "adversarial" in a3r.details:
        a3r.details["corrected_min_slack"] = min(a3r.details["corrected_min_slack"],
                                                 a3r.details["adversarial"]["corrected_worst_slack"])
    return reports


def adversarial_search(members: list[GaussPoly], t: float, s: CoefficientSchedule, c: float,
                       grid: WeightedGrid, iterations: int = 200, seed: int = 0,
                       consts=None) -> dict:
    """Gradient-free hill climb over polynomial coefficients and widths.

    Minimizes each normalized slack separately, starting from the family's
    worst member. Widths are kept inside the family's range [c/4, c/2].
    """
    consts = consts or constants_report(s, c, grid.d)
    rng = np.random.default_rng([seed, 104729])
    s_lo, s_hi = 0.25 * c, 0.5 * c

    objectives = {
        "lemma_3_4": lambda f: lemma_3_4_slack(f, t, s, "stated"),
        "lemma_3_4_sharp": lambda f: lemma_3_4_slack(f, t, s, "sharp"),
        "A2": lambda f: a2_slack(f, t, s, consts.K_A2),
        "A3": lambda f: a3_slack(f, t, s, consts.K_A3, consts.alpha),
        "A3_corrected": lambda f: a3_slack(f, t, s, consts.K_A3_corrected, consts.alpha),
    }
    out = {}
    for name, obj in objectives.items():
        scored = sorted(((obj(m.on(grid)), i) for i, m in enumerate(members)))
        val, i = scored[0]
        cur = members[i]
        for _ in range(iterations):
            cand = _perturb(cur, rng, s_lo, s_hi)
            cv = obj(cand.on(grid))
            if cv < val:
                val, cur = cv, cand
        out[name] = {"worst_slack": val, "s": cur.s, "iterations": iterations}

    # growth: maximize |<u, A v>| / (|u|_V |v|_V) over pairs
    pairs = [(a4_abs(members[i], members[j], t, s, grid), i, j)
             for i in range(min(len(members), 10)) for j in range(min(len(members), 10))]
    val, i, j = max(pairs)
    u, v = members[i], members[j]
    for _ in range(iterations):
        if rng.random() < 0.5:
            cand = (_perturb(u, rng, s_lo, s_hi), v)
        else:
            cand = (u, _perturb(v, rng, s_lo, s_hi))
        cv = a4_abs(*cand, t, s, grid)
        if cv > val:
            val, (u, v) = cv, cand
    out["A4"] = {"worst_slack": consts.K_A4 - val, "max_ratio": val, "iterations": iterations}
    out["A3"]["corrected_worst_slack"] = out.pop("A3_corrected")["worst_slack"]
    out["lemma_3_4"]["sharp_worst_slack"] = out.pop("lemma_3_4_sharp")["worst_slack"]
    return out


def _perturb(m: GaussPoly, rng, s_lo, s_hi) -> GaussPoly:
    step = rng.normal(scale=0.3, size=len(m.coeffs)) * (np.abs(m.coeffs) + 0.1)
    return m.with_params(np.asarray(m.coeffs) + step,
                         float(np.clip(m.s * math.exp(rng.normal(scale=0.1)), s_lo, s_hi)))


def a4_abs(u: GaussPoly, v: GaussPoly, t, s, grid) -> float:
    return abs(a4_ratio(u.on(grid), v.on(grid), t, s))


# -- linearity and the full battery ------------------------------------------------

LINEARITY_TOL = 1e-12


def check_A1_linearity(family, t: float, s: CoefficientSchedule, grid: WeightedGrid | None = None,
                       seed: int = 0) -> CheckReport:
    """A(a u + b v) = a A u + b A v to roundoff, over consecutive family pairs."""
    fs = _family_grid_fns(family, grid)
    rng = np.random.default_rng([seed, 31337])
    worst = 0.0
    for u, v in zip(fs, fs[1:] + fs[:1]):
        a, b = rng.normal(size=2)
        lhs = apply_A(t, u * a + v * b, s).values
        rhs = (apply_A(t, u, s) * a + apply_A(t, v, s) * b).values
        scale = max(np.abs(rhs).max(), 1e-300)
        worst = max(worst, float(np.abs(lhs - rhs).max() / scale))
    rep = CheckReport("A1_linearity", [(fs[0].grid.n, worst)], tolerance=LINEARITY_TOL)
    rep.details.update(t=t, members=len(fs))
    rep.status = "pass" if worst <= LINEARITY_TOL else "fail"
    return rep


BATTERY = ("lemma_3_1", "lemma_3_2", "lemma_3_3", "lemma_3_4", "A1_linearity", "A2", "A3", "A4")


def run_battery(s: CoefficientSchedule, c: float, d: int, t: float, grids: list[WeightedGrid],
                family_size: int = 50, family_seed: int = 0, adversarial: int = 200) -> dict[str, CheckReport]:
    """All eight checks; identities over ``grids``, inequalities on the finest grid."""
    family = sample_family(family_size, family_seed, c, d)
    out = {}
    for name in IDENTITIES:
        if len(grids) >= 3:
            out[name] = check_identity_family(name, family, grids)
        else:
            reps = [_identity_report(name, m.on(grids[-1]), None) for m in family]
            worst = max(reps, key=lambda r: r.residuals[-1][1])
            worst.details["members"] = len(family)
            worst.status = "pass" if all(r.passed for r in reps) else "fail"
            out[name] = worst
    finest = grids[-1]
    out["lemma_3_4"] = check_lemma_3_4(family, t, s, c, grid=finest)
    out["A1_linearity"] = check_A1_linearity(family, t, s, finest, family_seed)
    adv = adversarial_search(family, t, s, c, finest, adversarial, family_seed) if adversarial else None
    for rep in check_A2_A3_A4(family, t, s, c, d, grid=finest, adv=adv):
        out[rep.name] = rep
    lem = out["lemma_3_4"]
    if adv is not None and lem.status != "skipped":
        lem.details["adversarial"] = adv["lemma_3_4"]
        if adv["lemma_3_4"]["worst_slack"] < -lem.tolerance:
            lem.status = "fail"
    return {k: out[k] for k in BATTERY}
