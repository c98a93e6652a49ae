import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from sccbbp.errors import ConstraintViolation, DomainError
from sccbbp.theory import (
    DimensionRatios,
    TheoryContext,
    asymptotic_transforms,
    bbp_threshold,
    bound_envelopes,
    bulk_density,
    classical_location,
    control_parameter,
    detection_margin,
    edge_locations,
    fc,
    gc,
    gc_edge_gap,
    h_function,
    m12_at_one,
    m1c,
    m2c,
    m3c,
    m4c,
    mc,
    outlier_location,
    pi_limit,
    sqrt_z,
    support_levels,
    total_mass,
    tw_scale,
    upper_tail_mass,
)

DIMS = DimensionRatios(100, 80, 400)


@pytest.mark.parametrize("c, edges, tc", [
    ((0.25, 0.25), (0.0, 0.75), 1 / 3),
    ((0.2, 0.1), (0.02, 0.5), 1 / 6),
    ((0.25, 0.2), (0.003590, 0.696410), 0.288675),
])
def test_closed_forms(c, edges, tc):
    lo, hi = edge_locations(c)
    assert lo == pytest.approx(edges[0], abs=1e-6)
    assert hi == pytest.approx(edges[1], abs=1e-6)
    assert bbp_threshold(c) == pytest.approx(tc, abs=1e-6)


def test_tw_scale():
    assert tw_scale((0.25, 0.25)) == pytest.approx(0.57236, abs=1e-4)


def test_vanishing_ratio_collapses_edges():
    lo, hi = edge_locations((0.25, 1e-12))
    assert lo == pytest.approx(0.25, abs=1e-5) and hi == pytest.approx(0.25, abs=1e-5)
    assert bbp_threshold((0.25, 1e-14)) < 1e-6


def test_ratio_constraints():
    with pytest.raises(ConstraintViolation):
        DimensionRatios(300, 300, 400)
    with pytest.raises(ConstraintViolation):
        DimensionRatios(10, 20, 400)          # c2 > c1
    with pytest.raises(ConstraintViolation):
        DimensionRatios(10, 2, 400, tau=0.01)  # c2 < tau
    with pytest.raises(ConstraintViolation):
        DimensionRatios(0, 0, 10)


def _mp_density(x, c1, c2, lo, hi):
    return mpmath.sqrt((hi - x) * (x - lo)) / (2 * mpmath.pi * c2 * x * (1 - x))


def test_density_normalization_against_mpmath():
    c1, c2 = DIMS.c1, DIMS.c2
    lo, hi = edge_locations(DIMS)
    mpmath.mp.dps = 30
    mass = mpmath.quad(lambda x: _mp_density(x, c1, c2, lo, hi), [lo, hi])
    assert float(mass) == pytest.approx(1.0, abs=1e-12)
    assert total_mass(DIMS) == pytest.approx(1.0, abs=1e-12)


def test_classical_location_against_mpmath():
    c1, c2 = DIMS.c1, DIMS.c2
    lo, hi = edge_locations(DIMS)
    mpmath.mp.dps = 30
    j = 40
    tail = lambda x: mpmath.quad(lambda s: _mp_density(s, c1, c2, lo, hi), [x, hi])
    oracle = mpmath.findroot(lambda x: tail(x) - mpmath.mpf(j - 1) / DIMS.q, 0.3)
    assert classical_location(j, DIMS) == pytest.approx(float(oracle), abs=1e-10)


def test_classical_locations_ordering_and_endpoints():
    ctx = TheoryContext.from_dims(DimensionRatios(60, 40, 200))
    g = ctx.gammas
    assert g[0] == ctx.lambda_plus
    assert np.all(np.diff(g) < 0)
    assert g[-1] > ctx.lambda_minus
    assert upper_tail_mass(g[10], ctx.dims) == pytest.approx(10 / 40, abs=1e-10)


def test_density_zero_outside_support():
    lo, hi = edge_locations(DIMS)
    assert bulk_density(hi + 1e-3, DIMS) == 0
    assert bulk_density(lo / 2, DIMS) == 0
    assert bulk_density(0.5 * (lo + hi), DIMS) > 0


def test_outlier_map_round_trip():
    t_c = bbp_threshold(DIMS)
    ts = np.linspace(t_c + 1e-3, 1.0, 200)
    assert np.max(np.abs(fc(gc(ts, DIMS), DIMS) - ts)) < 1e-10
    lo, hi = edge_locations(DIMS)
    xs = np.linspace(hi + 1e-4, 1.0, 200)
    assert np.max(np.abs(gc(fc(xs, DIMS), DIMS) - xs)) < 1e-10


def test_outlier_map_reference_points():
    assert gc(0.6, DIMS) == pytest.approx(0.793333333333, abs=1e-10)
    assert fc(edge_locations(DIMS)[1], DIMS) == pytest.approx(bbp_threshold(DIMS), abs=1e-12)
    assert gc(1.0, DIMS) == pytest.approx(1.0)
    assert outlier_location(0.1, DIMS) == edge_locations(DIMS)[1]


def test_gc_domain():
    with pytest.raises(DomainError):
        gc(0.2, DIMS)
    with pytest.raises(DomainError):
        gc(1.2, DIMS)


def test_edge_gap_form():
    ts = np.linspace(0.3, 1.0, 50)
    lam_plus = edge_locations(DIMS)[1]
    assert np.allclose(gc_edge_gap(ts, DIMS), gc(ts, DIMS) - lam_plus, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(c1=st.floats(0.02, 0.6), frac=st.floats(0.05, 1.0), u=st.floats(0.001, 1.0))
def test_round_trip_property(c1, frac, u):
    c2 = min(c1 * frac, 0.98 - c1)
    if c2 <= 1e-3:
        return
    t_c = bbp_threshold((c1, c2))
    if t_c >= 1:
        return
    t = t_c + u * (1 - t_c)
    lo, hi = edge_locations((c1, c2))
    assert 0 <= lo < hi <= 1
    assert abs(fc(gc(t, (c1, c2)), (c1, c2)) - t) < 1e-9


def _complex_grid(count=500, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.5, 1.5, count) + 1j * rng.uniform(1e-3, 1.0, count)


def test_self_consistent_equations():
    z = _complex_grid()
    c = (DIMS.c1, DIMS.c2)
    a1, a2, a3, a4 = m1c(z, c), m2c(z, c), m3c(z, c), m4c(z, c)
    assert np.max(np.abs(a1 + c[0] / a3)) < 1e-12
    assert np.max(np.abs(a2 + c[1] / a4)) < 1e-12
    assert np.max(np.abs(a3 - a4 - (1 - z) * (c[0] - c[1]))) < 1e-12


def test_h_forms_agree():
    z = _complex_grid()
    c = (DIMS.c1, DIMS.c2)
    h = h_function(z, c)
    form3 = m3c(z, c) / sqrt_z(z) / (1 + (1 - z) * m2c(z, c))
    form4 = m4c(z, c) / sqrt_z(z) / (1 + (1 - z) * m1c(z, c))
    assert np.max(np.abs(h - form3)) < 1e-12
    assert np.max(np.abs(h - form4)) < 1e-12


def test_rationalized_m1c_matches_closed_form():
    # the textbook form has a removable 0/0 at z = 1; compare away from it
    z = _complex_grid(100, seed=3)
    c1, c2 = DIMS.c1, DIMS.c2
    lo, hi = edge_locations(DIMS)
    sq = np.sqrt(z - lo) * np.sqrt(z - hi)
    raw1 = (-z + c1 + c2 + sq) / (2 * (1 - c1) * z * (1 - z)) - c1 / ((1 - c1) * z)
    raw2 = (-z + c1 + c2 + sq) / (2 * (1 - c2) * z * (1 - z)) - c2 / ((1 - c2) * z)
    assert np.allclose(m1c(z, DIMS), raw1, rtol=1e-10)
    assert np.allclose(m2c(z, DIMS), raw2, rtol=1e-10)


def test_m12_at_one_is_the_limit():
    a, b = m12_at_one(DIMS)
    assert m1c(1.0, DIMS) == pytest.approx(a, abs=1e-13)
    assert m2c(1.0, DIMS) == pytest.approx(b, abs=1e-13)
    assert m1c(1 + 1e-7j, DIMS) == pytest.approx(a, abs=1e-6)


def test_stieltjes_transform_against_quadrature():
    lo, hi = edge_locations(DIMS)
    for z in (0.3 + 0.2j, 0.9 + 0.05j, 0.6 + 0.01j):
        re = integrate.quad(lambda x: (bulk_density(x, DIMS) / (x - z)).real, lo, hi, limit=400)[0]
        im = integrate.quad(lambda x: (bulk_density(x, DIMS) / (x - z)).imag, lo, hi, limit=400)[0]
        assert mc(z, DIMS) == pytest.approx(re + 1j * im, rel=1e-7)


def test_stieltjes_inversion():
    lo, hi = edge_locations(DIMS)
    xs = np.linspace(lo + 0.05, hi - 0.05, 25)
    recovered = np.imag(mc(xs + 1e-9j, DIMS)) / math.pi
    assert np.max(np.abs(recovered - bulk_density(xs, DIMS)) / bulk_density(xs, DIMS)) < 1e-5


def test_pi_limit_blocks():
    z = 0.5 + 0.1j
    tr = asymptotic_transforms(z, DIMS)
    pi = pi_limit(z, DIMS, r=2, alignment=np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert pi.reduced.shape == (8, 8)
    assert pi.reduced[0, 0] == pytest.approx(tr.m1c / DIMS.c1)
    assert pi.reduced[4, 7] == pytest.approx(tr.h)
    full = pi_limit(z, (0.3, 0.2)).full(3, 2, 10)
    assert np.allclose(full, full.T)
    u = np.random.default_rng(0).standard_normal(25)
    assert pi_limit(z, (0.3, 0.2)).bilinear(u, u, 3, 2, 10) == pytest.approx(u @ full @ u)


def test_control_parameter_and_levels():
    assert control_parameter(0.4 + 0.05j, DIMS) > 1 / (400 * 0.05)
    with pytest.raises(DomainError):
        control_parameter(0.4, DIMS)
    assert support_levels(400) == (0.05, 0.05)
    phi, psi = support_levels(400, a=8, b=4)
    assert phi == pytest.approx(400 ** -0.25) and psi == pytest.approx(400 ** -0.25)
    assert detection_margin(400) == pytest.approx(400 ** (-1 / 3) + 0.1)


def test_envelopes_classify():
    envs = bound_envelopes([0.6, 0.1], DIMS)
    assert envs[0].is_outlier and not envs[1].is_outlier
    assert envs[0].contains(envs[0].location)
    assert envs[1].location == edge_locations(DIMS)[1]


def test_context_dict():
    d = TheoryContext.from_dims(DIMS).as_dict()
    assert d["t_c"] == pytest.approx(0.288675, abs=1e-6)
    assert d["lambda_plus"] == pytest.approx(0.696410, abs=1e-6)


def test_transforms_against_quadratic_oracle():
    # eliminate m1, m2, m4 from the self-consistent system; m3 solves a quadratic
    z, c1, c2 = 0.4 + 0.01j, 0.25, 0.2
    d = (1 - z) * (c1 - c2)
    k = (1 - c1 - c2) * z
    a = (1 - c2) * z * (1 - z) * c2
    # m3 (m3 - d) = -a + k (m3 - d)
    roots = np.roots([1.0, -(d + k), a + k * d])
    cands = []
    for m3 in roots:
        m4 = m3 - d
        m2 = -c2 / m4
        cands.append((m3, m4, m2, -c1 / m3, (1 - c2) / c2 * m2))
    m3, m4, m2, m1, m_c = next(c for c in cands if c[4].imag > 0)
    tr = asymptotic_transforms(z, (c1, c2))
    assert np.allclose([tr.m1c, tr.m2c, tr.m3c, tr.m4c, tr.mc], [m1, m2, m3, m4, m_c], rtol=1e-12)


def test_pi_conjugate_symmetry_and_rank_zero():
    z = 0.55 + 0.07j
    a, b = pi_limit(z, DIMS, 2), pi_limit(np.conj(z), DIMS, 2)
    assert np.allclose(b.reduced, np.conj(a.reduced))
    assert pi_limit(z, DIMS, 0).reduced.shape == (0, 0)


def test_rank_one_pi_assembly():
    z = 0.3 + 0.2j
    tr = asymptotic_transforms(z, DIMS)
    expected = np.array([
        [tr.m1c / DIMS.c1, 0, 0, 0], [0, tr.m2c / DIMS.c2, 0, 0],
        [0, 0, tr.m3c, tr.h], [0, 0, tr.h, tr.m4c],
    ])
    assert np.allclose(pi_limit(z, DIMS, 1).reduced, expected)


def test_square_root_edge_behaviour():
    ctx = TheoryContext.from_dims(DIMS)
    kappa = np.geomspace(1e-6, 1e-2, 30)
    lam = ctx.lambda_plus
    r_m = np.abs(mc(lam + kappa + 0j, DIMS) - mc(lam + 0j, DIMS)) / np.sqrt(kappa)
    r_f = np.abs(fc(lam + kappa, DIMS) - ctx.t_threshold) / np.sqrt(kappa)
    t = ctx.t_threshold + kappa
    r_g = gc_edge_gap(t, DIMS) / (t - ctx.t_threshold) ** 2
    for r in (r_m, r_f, r_g):
        assert np.all((r >= 0.1) & (r <= 10)), (r.min(), r.max())


def test_control_parameter_scaling():
    etas = np.geomspace(1 / 400, 1, 40)
    psi = np.array([control_parameter(0.4 + 1j * e, DIMS) for e in etas])
    assert np.all(np.diff(psi) < 0)
    z = 0.4 + 0.05j
    ratio = control_parameter(z, DIMS, n=1600) / control_parameter(z, DIMS, n=400)
    assert 0.25 <= ratio <= 0.5


def test_support_level_examples():
    assert support_levels(400, a=4, b=2) == (1.0, 1.0)
    assert support_levels(10**4, a=8)[0] == pytest.approx(0.1)
    envs = bound_envelopes([bbp_threshold(DIMS)], DIMS)
    assert envs[0].delta == 0 and not envs[0].is_outlier
    assert gc(1.0, (0.4, 0.3)) == pytest.approx(1.0)
