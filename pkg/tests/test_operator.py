import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdelab.coefficients import CoefficientSchedule, constants_report
from spdelab.grid import GridFunction, WeightedGrid, quadrature, sample_family, v_norm, v_norm_terms
from spdelab.operator import (apply_A, dual_norm_lower_bound, energy_decomposition, flux_divergence,
                              laplacian, mass_coefficient, weak_pairing)
from spdelab.verify import fit_order

SQRT2 = math.sqrt(2.0)


def std_normal(*xs):
    return np.exp(-sum(x * x for x in xs) / 2) / (2 * math.pi) ** (len(xs) / 2)


def test_zero_maps_to_zero(grid129, equality_schedule):
    assert not np.any(apply_A(0.3, grid129.zeros(), equality_schedule).values)


def test_boundary_rows_zero(grid129, equality_schedule, family50):
    Av = apply_A(0.3, family50[0].on(grid129), equality_schedule).values
    assert Av[0] == 0.0 and Av[-1] == 0.0


@pytest.mark.parametrize("d,ns", [(1, (129, 257, 513)), (2, (33, 65, 129))])
def test_stationary_normal_order_two(d, ns, equality_schedule):
    # (x phi)' + phi'' = 0 for phi the standard normal density
    errs, hs = [], []
    for n in ns:
        g = WeightedGrid.default(d, n, 1.0)
        Av = apply_A(0.0, g.sample(std_normal), equality_schedule)
        errs.append(np.abs(Av.values).max())
        hs.append(g.h)
    assert 1.7 <= fit_order(hs, errs) <= 2.3
    assert errs[-1] < 0.2 * hs[-1] ** 2


def test_heat_mode_is_scaled_laplacian(grid129, family50):
    s = CoefficientSchedule.constant(0.0, 1.5)
    v = family50[1].on(grid129)
    np.testing.assert_array_equal(apply_A(0.2, v, s).values, 1.125 * laplacian(grid129, v.values))


def test_flux_divergence_of_linear_field():
    # div(x * 1) = d on interior nodes, exactly
    for d in (1, 2, 3):
        g = WeightedGrid(d, 2.0, 9, 1.0)
        out = flux_divergence(g, np.ones(g.shape))
        np.testing.assert_allclose(out[(slice(1, -1),) * d], float(d), atol=1e-14)


def test_operators_batch_over_leading_axes(grid129, family50):
    vs = np.stack([m.on(grid129).values for m in family50[:4]])
    batch = flux_divergence(grid129, vs)
    for i in range(4):
        np.testing.assert_array_equal(batch[i], flux_divergence(grid129, vs[i]))


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), t=st.floats(0, 1), seed=st.integers(0, 500))
def test_linearity(a, b, t, seed, ):
    g = WeightedGrid.default(1, 129, 1.0)
    s = CoefficientSchedule.constant(1.0, SQRT2)
    u, v = (m.on(g) for m in sample_family(2, seed, 1.0, 1))
    lhs = apply_A(t, u * a + v * b, s).values
    rhs = (apply_A(t, u, s) * a + apply_A(t, v, s) * b).values
    assert np.abs(lhs - rhs).max() <= 1e-12 * (np.abs(rhs).max() + 1e-300) + 1e-300


def test_mass_conservation(grid513, equality_schedule, family50):
    for m in family50:
        Av = apply_A(0.5, m.on(grid513), equality_schedule)
        assert abs(quadrature(grid513, Av.values, weighted=False)) < 1e-10


def test_pairing_zero_and_definition(grid129, equality_schedule, family50):
    v = family50[0].on(grid129)
    assert weak_pairing(grid129.zeros(), v, 0.1, equality_schedule) == 0.0
    u = family50[1].on(grid129)
    Av = apply_A(0.1, v, equality_schedule)
    assert weak_pairing(u, v, 0.1, equality_schedule) == quadrature(grid129, u.values * Av.values)


def test_pairing_not_symmetric(grid513, equality_schedule, family50):
    ratios = []
    for u, v in zip(family50, family50[1:]):
        a = weak_pairing(u.on(grid513), v.on(grid513), 0.5, equality_schedule)
        b = weak_pairing(v.on(grid513), u.on(grid513), 0.5, equality_schedule)
        ratios.append(abs(a - b) / max(abs(a), abs(b)))
    assert max(ratios) > 1e-3


def test_stated_energy_bound_is_violated_by_exactly_the_mass(grid513, equality_schedule, family50):
    # At f = g^2/2c the exact energy identity gives <v, Av> = (g^2/2c) d M - (g^2/2) G, so the
    # stated bound (d f/2 - g^2/4c) M - (g^2/2) G misses by (d + 1) g^2/(4c) M = M here.
    for m in family50:
        v = m.on(grid513)
        e = energy_decomposition(v, 0.5, equality_schedule, "stated")
        scale = v_norm_terms(v).total
        assert e.guaranteed
        # discretization bias is one-signed and below 0.6 h^2 (f + g^2) |v|_V^2
        assert -e.h_norm_sq <= e.slack <= -e.h_norm_sq + 0.6 * grid513.h**2 * 3 * scale


def test_sharp_energy_bound_holds(grid513, equality_schedule, family50):
    for m in family50:
        v = m.on(grid513)
        e = energy_decomposition(v, 0.5, equality_schedule, "sharp")
        assert e.slack >= -1e-8
        # tight at equality: zero up to discretization
        assert e.slack <= 0.6 * grid513.h**2 * 3 * v_norm_terms(v).total


def test_energy_decomposition_zero(grid129, equality_schedule):
    e = energy_decomposition(grid129.zeros(), 0.0, equality_schedule)
    assert (e.pairing, e.mass_term, e.grad_term, e.slack) == (0.0, 0.0, 0.0, 0.0)


def test_energy_flagged_when_condition_fails(grid129, family50):
    s = CoefficientSchedule.constant(1.0, 2.0)     # 1 - 4/2 < 0 at c = 1
    e = energy_decomposition(family50[0].on(grid129), 0.0, s)
    assert not e.guaranteed
    assert math.isfinite(e.slack)


def test_mass_coefficient_variants(equality_schedule):
    assert mass_coefficient(0.0, equality_schedule, 1.0, 1, "stated") == pytest.approx(0.0)
    assert mass_coefficient(0.0, equality_schedule, 1.0, 1, "sharp") == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mass_coefficient(0.0, equality_schedule, 1.0, 1, "other")


def test_dual_norm_zero_and_single(grid129, equality_schedule, family50):
    v = family50[2].on(grid129)
    assert dual_norm_lower_bound(grid129.zeros(), 0.1, equality_schedule, [v]) == 0.0
    single = dual_norm_lower_bound(v, 0.1, equality_schedule, [v])
    assert single == weak_pairing(v, v, 0.1, equality_schedule) / v_norm(v)
    with pytest.raises(ValueError):
        dual_norm_lower_bound(v, 0.1, equality_schedule, [])


def test_dual_norm_below_growth_bound(grid513, equality_schedule):
    k = constants_report(equality_schedule, 1.0, 1)
    fam = sample_family(40, 5, 1.0, 1)
    for i in range(20):
        v = fam[2 * i].on(grid513)
        cands = [fam[2 * i + 1].on(grid513)]
        cands.append(-cands[0])
        lb = dual_norm_lower_bound(v, 0.5, equality_schedule, cands)
        assert lb <= k.k_a4_at(equality_schedule, 0.5) * v_norm(v) + 1e-8


def test_monotonicity_discrete(grid513, vp_schedule, family50):
    k = constants_report(vp_schedule, 1.0, 1)
    for m in family50:
        v = m.on(grid513)
        assert 2 * weak_pairing(v, v, 0.7, vp_schedule) <= k.K_A2 * quadrature(grid513, v.values**2) + 1e-8


def test_coercivity_with_corrected_constant(grid513, equality_schedule, family50):
    k = constants_report(equality_schedule, 1.0, 1)
    for m in family50:
        v = m.on(grid513)
        lhs = 2 * weak_pairing(v, v, 0.5, equality_schedule) + k.alpha * v_norm(v) ** 2
        assert lhs <= k.K_A3_corrected * quadrature(grid513, v.values**2) + 1e-8


def test_coercivity_published_constant_has_counterexample(grid513, equality_schedule):
    # v = exp(-x^2): continuum 2<v,Av> + alpha |v|_V^2 - K M = 1.013 > 0 with K = alpha(1 - d/c) + d f - g^2/2c = 0
    k = constants_report(equality_schedule, 1.0, 1)
    v = grid513.sample(lambda x: np.exp(-x * x))
    lhs = 2 * weak_pairing(v, v, 0.5, equality_schedule) + k.alpha * v_norm(v) ** 2
    assert k.K_A3 == pytest.approx(0.0, abs=1e-15)
    assert lhs - k.K_A3 * quadrature(grid513, v.values**2) > 0.9


def test_laplacian_2d_matches_axis_sum():
    g = WeightedGrid(2, 2.0, 17, 1.0)
    v = g.sample(lambda x, y: x**2 + 3 * y**2, zero_boundary=False)
    np.testing.assert_allclose(laplacian(g, v.values)[1:-1, 1:-1], 8.0, rtol=1e-12)


def test_apply_requires_same_shape(grid129):
    with pytest.raises(ValueError):
        GridFunction(grid129, np.zeros(5))
