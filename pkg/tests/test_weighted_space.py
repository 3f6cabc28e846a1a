import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdelab.grid import (GaussPoly, GridFunction, GridMismatch, WeightedGrid, gradient, h_norm_sq,
                          ou_gradient, quadrature, read_csv, sample_family, test_function_family,
                          v_norm, v_norm_terms, weight_eval, weighted_l2_inner, write_csv)
from spdelab.verify import fit_order, reference_terms


def normal(var=1.0):
    return lambda *xs: np.exp(-sum(x * x for x in xs) / (2 * var)) / (2 * math.pi * var) ** (len(xs) / 2)


# -- grid construction --------------------------------------------------------------

def test_nodes_and_spacing():
    g = WeightedGrid(1, 4.0, 9, 1.0)
    assert g.h == 1.0
    assert g.axis[4] == 0.0
    np.testing.assert_array_equal(g.axis, np.arange(-4.0, 5.0))


@pytest.mark.parametrize("n", [2, 4, 1])
def test_even_or_tiny_n_rejected(n):
    with pytest.raises(ValueError):
        WeightedGrid(1, 4.0, n, 1.0)


def test_overflow_guard():
    with pytest.raises(ValueError):
        WeightedGrid(3, 30.0, 5, 1.0)     # 3 * 900 / 2 = 1350 > 600


def test_values_must_be_finite(grid129):
    vals = np.zeros(grid129.shape)
    vals[3] = np.nan
    with pytest.raises(ValueError):
        GridFunction(grid129, vals)


# -- weight -------------------------------------------------------------------------

def test_weight_at_origin_is_one():
    for c in (0.3, 1.0, 7.0):
        g = WeightedGrid(1, 4.0, 9, c)
        assert weight_eval(g, (4,)) == 1.0


def test_weight_1d():
    g = WeightedGrid(1, 4.0, 9, 1.0)
    assert weight_eval(g, (5,)) == pytest.approx(math.exp(0.5), rel=1e-15)


def test_weight_2d():
    g = WeightedGrid(2, 4.0, 9, 1.0)
    assert weight_eval(g, (5, 5)) == pytest.approx(math.e, rel=1e-15)


# -- inner product ------------------------------------------------------------------

def test_inner_zero(grid129):
    z = grid129.zeros()
    assert weighted_l2_inner(z, z) == 0.0


def test_inner_standard_normal(grid513):
    # (2 pi s2)^-1 sqrt(pi / (1/s2 - 1/2c)) at s2 = c = 1
    exact = (2 * math.pi) ** -1 * math.sqrt(math.pi / 0.5)
    v = grid513.sample(normal())
    assert weighted_l2_inner(v, v) == pytest.approx(exact, rel=1e-10)
    assert exact == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)


def test_inner_diverges_beyond_threshold():
    # variance 2c: v^2 w is flat, so the truncated integral grows with L
    vals = []
    for L in (4.0, 6.0, 8.0):
        g = WeightedGrid(1, L, int(32 * L) + 1, 1.0)
        v = g.sample(normal(2.0))
        vals.append(h_norm_sq(v))
    assert vals[0] < vals[1] < vals[2]


def test_grid_mismatch(grid129, grid513):
    with pytest.raises(GridMismatch):
        weighted_l2_inner(grid129.zeros(), grid513.zeros())


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_inner_symmetric_and_positive(seed):
    g = WeightedGrid.default(1, 129, 1.0)
    a, b = sample_family(2, seed, 1.0, 1)
    u, v = a.on(g), b.on(g)
    assert weighted_l2_inner(u, v) == pytest.approx(weighted_l2_inner(v, u), rel=1e-14, abs=1e-300)
    assert weighted_l2_inner(u, u) > 0


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 1000))
def test_inner_bilinear(a, b, seed):
    g = WeightedGrid.default(1, 65, 1.0)
    p, q, r = (m.on(g) for m in sample_family(3, seed, 1.0, 1))
    lhs = weighted_l2_inner(p * a + q * b, r)
    rhs = a * weighted_l2_inner(p, r) + b * weighted_l2_inner(q, r)
    scale = abs(a * weighted_l2_inner(p, r)) + abs(b * weighted_l2_inner(q, r)) + 1e-300
    assert abs(lhs - rhs) <= 1e-13 * scale


# -- gradients ----------------------------------------------------------------------

def test_gradient_constant_interior(grid129):
    v = grid129.sample(lambda x: np.ones_like(x))
    (dv,) = gradient(v)
    assert np.all(dv.values[2:-2] == 0.0)


def test_gradient_linear_exact(grid129):
    v = grid129.sample(lambda x: x, zero_boundary=False)
    (dv,) = gradient(v)
    np.testing.assert_allclose(dv.values[1:-1], 1.0, rtol=0, atol=1e-12)


def test_gradient_sine_order_two():
    errs, hs = [], []
    for n in (129, 257, 513):
        g = WeightedGrid.default(1, n, 1.0)
        L = g.L
        (dv,) = gradient(g.sample(lambda x: np.sin(np.pi * x / L), zero_boundary=False))
        errs.append(np.abs(dv.values - np.pi / L * np.cos(np.pi * g.axis / L)).max())
        hs.append(g.h)
    assert 1.7 <= fit_order(hs, errs) <= 2.3


def test_ou_gradient_vanishes_on_inverse_weight(grid129):
    v = grid129.sample(lambda x: np.exp(-x * x / 2), zero_boundary=False)
    (o,) = ou_gradient(v)
    # d/dx e^{-x^2/2} + x e^{-x^2/2} = 0; central differences leave O(h^2)
    assert np.abs(o.values[1:-1]).max() < grid129.h**2


def test_ou_gradient_of_one_is_x_over_c():
    g = WeightedGrid.default(1, 129, 2.0)
    (o,) = ou_gradient(g.sample(lambda x: np.ones_like(x), zero_boundary=False))
    np.testing.assert_allclose(o.values, g.axis / 2.0, atol=1e-12)


def test_ou_gradient_gaussian(grid513):
    (o,) = ou_gradient(grid513.sample(lambda x: np.exp(-x * x)))
    x = grid513.axis
    exact = -x * np.exp(-x * x)
    assert np.abs(o.values - exact).max() < 2 * grid513.h**2


def test_ou_gradient_unweighted_is_gradient():
    g = WeightedGrid(1, 8.0, 65, math.inf)
    v = g.sample(np.cos)
    np.testing.assert_array_equal(ou_gradient(v)[0].values, gradient(v)[0].values)


def test_gradient_2d_components():
    g = WeightedGrid(2, 4.0, 65, 1.0)
    v = g.sample(lambda x, y: x + 2 * y, zero_boundary=False)
    dx, dy = gradient(v)
    np.testing.assert_allclose(dx.values, 1.0, atol=1e-12)
    np.testing.assert_allclose(dy.values, 2.0, atol=1e-12)


# -- V-norm ---------------------------------------------------------------------------

def test_v_norm_zero(grid129):
    assert v_norm(grid129.zeros()) == 0.0


def test_v_norm_standard_normal_against_reference(grid513):
    member = GaussPoly(((0,),), (1 / math.sqrt(2 * math.pi),), 1.0)
    t = v_norm_terms(member.on(grid513))
    ref = reference_terms(member, 1.0)
    for got, want in ((t.mass, ref.mass), (t.grad, ref.grad)):
        assert math.isfinite(got) and got > 0
        assert got == pytest.approx(want, rel=5 * grid513.h**2)
    # v w is constant at c = 1, so the third term vanishes in the continuum
    assert ref.ou == 0.0
    assert 0 <= t.ou < grid513.h**2
    # mass = grad = 1/sqrt(2 pi), hence |v|_V = (2/pi)^{1/4}
    assert math.sqrt(ref.total) == pytest.approx((2 / math.pi) ** 0.25, rel=1e-14)
    assert v_norm(member.on(grid513)) == pytest.approx((2 / math.pi) ** 0.25, rel=grid513.h**2)


def test_v_norm_homogeneous(grid129, family50):
    v = family50[3].on(grid129)
    assert v_norm(v * -2.0) == pytest.approx(2 * v_norm(v), rel=1e-14)


# -- test family --------------------------------------------------------------------

def test_family_deterministic(grid129):
    a = test_function_family(grid129, 5, 11)
    b = test_function_family(grid129, 5, 11)
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u.values, v.values)


def test_family_width_bound(family50):
    assert all(0.25 <= m.s <= 0.5 for m in family50)


def test_family_finite_v_norm(grid513):
    for v in test_function_family(grid513, 50, 0):
        assert math.isfinite(v_norm(v)) and v_norm(v) > 0


@pytest.mark.parametrize("c", [0.5, 1.0, 3.0])
def test_family_boundary_decay(c):
    g = WeightedGrid(1, 6 * math.sqrt(c), 257, c)
    for m in sample_family(50, 1, c, 1):
        raw = m(g.axis)
        assert max(abs(raw[0]), abs(raw[-1])) < 1e-12 * np.abs(raw).max()


# -- invariants ------------------------------------------------------------------------

def test_lemma_3_3_identity_order_per_member(family50):
    hs = [WeightedGrid.default(1, n, 1.0).h for n in (129, 257, 513)]
    for m in family50:
        res = []
        for n in (129, 257, 513):
            g = WeightedGrid.default(1, n, 1.0)
            t = v_norm_terms(m.on(g))
            res.append(abs(t.ou - (t.grad - t.mass)))
        assert 1.7 <= fit_order(hs, res) <= 2.3


@pytest.mark.parametrize("d,n", [(1, 513), (2, 129)])
def test_weighted_poincare(d, n):
    g = WeightedGrid.default(d, n, 1.0)
    for v in test_function_family(g, 50 if d == 1 else 20, 0):
        t = v_norm_terms(v)
        assert t.grad >= d * t.mass


def test_trapezoid_spectral_on_family(grid513, family50):
    for m in family50:
        ref = reference_terms(m, 1.0)
        assert h_norm_sq(m.on(grid513)) == pytest.approx(ref.mass, rel=1e-10)


# -- CSV ---------------------------------------------------------------------------------

@pytest.mark.parametrize("d", [1, 2])
def test_csv_round_trip(tmp_path, d):
    g = WeightedGrid(d, 4.0, 17, 1.0)
    v = sample_family(1, 3, 1.0, d)[0].on(g)
    path = tmp_path / "v.csv"
    write_csv(v, path)
    header = path.read_text().splitlines()[0]
    assert header == ("x,value" if d == 1 else "x,y,value")
    np.testing.assert_array_equal(read_csv(path, g).values, v.values)


def test_quadrature_unweighted_ignores_weight(grid513):
    v = grid513.sample(normal())
    assert quadrature(grid513, v.values, weighted=False) == pytest.approx(1.0, abs=1e-10)
