import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from muskatlab import muskat_ops as mo
from muskatlab.quadrature import QuadratureSpec
from muskatlab.spectral_core import Grid, RealField, dmult, inverse, transform
from muskatlab.weights import Weight

from conftest import random_field, seeds

G = Grid(32, 8.0)
Q = QuadratureSpec(16, 8)

# psi frozen from an mpmath evaluation of int_0^2 chi(s) rho J1(s rho) / s ds
PSI_ORACLE = {0.5: 0.138318784094844769, 3.81: 3.92162540946178072, 20.0: 20.0002213995067831,
              200.0: 200.000000573079139}
PSI_ARGMIN, PSI_MIN = 3.80596965198, -0.111626666901


def field(seed, amp=0.3, kmax=6):
    return random_field(G, seed, kmax=kmax, amp=amp)


@given(seeds, st.integers(-10, 10), st.integers(-10, 10))
def test_delta_on_lattice(seed, i, j):
    f = field(seed)
    d = mo.delta(f, (i * G.h, j * G.h)).values
    assert np.allclose(d, f.values - np.roll(f.values, (i, j), axis=(0, 1)), atol=1e-12)


def test_slope_rejects_zero_step():
    with pytest.raises(ValueError):
        mo.slope(field(0), (0.0, 0.0))


@given(seeds, st.floats(-3, 3), st.floats(-3, 3))
def test_second_difference_symbol(seed, a, b):
    f = field(seed)
    got = transform(mo.second_diff(f, (a, b))).coeffs
    x1, x2 = G.xi
    want = 2 * (1 - np.cos(a * x1 + b * x2)) * transform(f).coeffs
    assert np.allclose(got, want, atol=1e-13)


@given(seeds, st.floats(-3, 3), st.floats(-3, 3))
def test_discrete_leibniz(seed, a, b):
    assert mo.leibniz_defect(field(seed), field(seed + 1), (a, b)) < 1e-12


@given(st.floats(0, 10))
def test_chi_profile(s):
    c = float(mo.chi(s))
    assert 0.0 <= c <= 1.0
    if s <= 0.25:
        assert c == 1.0
    if s >= 2.0:
        assert c == 0.0
    assert float(mo.chi(s + 0.01)) <= c + 1e-15


@pytest.mark.parametrize("rho", sorted(PSI_ORACLE))
def test_cutoff_symbol_against_oracle(rho):
    assert float(mo.cutoff_defect_symbol(np.array([rho]))[0]) == pytest.approx(PSI_ORACLE[rho], rel=1e-12)


def test_cutoff_linear_symbol_dips_below_zero():
    rho = np.linspace(0.01, 12, 4000)
    m = rho - mo.cutoff_defect_symbol(rho)
    i = int(np.argmin(m))
    assert rho[i] == pytest.approx(PSI_ARGMIN, abs=5e-3)
    assert m[i] == pytest.approx(PSI_MIN, rel=1e-6)


def test_rhs_of_zero_and_constant():
    assert np.max(np.abs(mo.muskat_rhs(G.zeros(), Q).values)) == 0.0
    c = RealField(G, np.full((32, 32), 2.5))
    assert np.max(np.abs(mo.muskat_rhs(c, Q).values)) < 1e-14


@given(seeds)
def test_rhs_is_odd(seed):
    f = field(seed)
    a = mo.muskat_rhs(f, Q).values
    b = mo.muskat_rhs(f * -1.0, Q).values
    assert np.allclose(a, -b, atol=1e-13 * np.max(np.abs(a)))


@given(seeds, st.floats(-5, 5))
def test_rhs_ignores_constants(seed, c):
    f = field(seed)
    g = RealField(G, f.values + c)
    a, b = mo.muskat_rhs(f, Q).values, mo.muskat_rhs(g, Q).values
    assert np.allclose(a, b, atol=1e-12 * np.max(np.abs(a)))


@given(seeds)
def test_rhs_mean_is_quadrature_small(seed):
    # the exact operator is a divergence; the polar rule conserves the mean up to its own error
    r = mo.muskat_rhs(field(seed), Q)
    assert abs(transform(r).mean()) < 1e-6 * np.sqrt(np.mean(r.values**2))


def test_linear_limit_small_grid():
    f = field(4, amp=1e-6)
    got = mo.muskat_rhs(f, Q).values
    want = -inverse(dmult(transform(f), 1.0)).values
    assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-6


def test_operator_is_linear_in_g():
    f, g1, g2 = field(1), field(2), field(3)
    a = mo.muskat_operator(f, g1 + g2 * 2.0, Q).values
    b = mo.muskat_operator(f, g1, Q).values + 2.0 * mo.muskat_operator(f, g2, Q).values
    assert np.allclose(a, b, atol=1e-12 * np.max(np.abs(a)))


def test_operator_diagonal_is_rhs():
    f = field(5)
    assert np.allclose(mo.muskat_operator(f, f, Q).values, -mo.muskat_rhs(f, Q).values, atol=1e-13)


def test_cutoff_rhs_guards_and_limit():
    f = field(6, amp=1e-6)
    with pytest.raises(ValueError):
        mo.muskat_rhs_cutoff(f, 0.0, Q)
    # in the linear regime the cutoff operator is a Fourier multiplier
    eps = 0.5
    got = transform(mo.muskat_rhs_cutoff(f, eps, Q)).coeffs
    sym = G.kmag - mo.cutoff_defect_symbol(eps * G.kmag) / eps
    want = -sym * transform(f).coeffs
    assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-5


def test_decomposition_reconstructs_and_refines():
    f, g = field(7), field(8)
    d1 = mo.decompose(f, g, Q)
    d2 = mo.decompose(f, g, Q.refined(2))
    assert np.allclose(d1.reconstructed().values, (d1.p_part + d1.drift_term + d1.remainder).values)
    assert d2.residual < d1.residual


def test_drift_and_elliptic_part_even():
    f, g = field(9), field(10)
    v, w = mo.drift(f, Q), mo.drift(f * -1.0, Q)
    assert all(np.allclose(v[i].values, w[i].values, atol=1e-13) for i in range(2))
    assert np.allclose(mo.elliptic_part(f, g, Q).values, mo.elliptic_part(f * -1.0, g, Q).values, atol=1e-13)


def test_drift_vanishes_for_flat_data():
    v = mo.drift(G.zeros(), Q)
    assert max(np.max(np.abs(c.values)) for c in v) == 0.0


@given(seeds)
def test_remainder_bound_has_no_violations(seed):
    audit = mo.remainder_symbol_audit(field(seed, amp=1.0), Q, stride=4)
    assert audit.violations == 0 and audit.samples > 0


def test_kernel_identity_sides_agree():
    for zeta in ((0.0, 0.0), (1.0, 0.0), (0.7, -0.7)):
        k = mo.kernel_identity_check(zeta, field(11), Q)
        assert k.relerr < 1e-3


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 2 * math.pi))
def test_divergence_constant_cube(z1, z2, th):
    a = (math.cos(th), math.sin(th))
    div, want = mo.divergence_constant((z1, z2), a)
    assert div == pytest.approx(want, rel=1e-6, abs=1e-9)


def test_divergence_constant_rejects_first_power():
    div, want = mo.divergence_constant((1.0, 0.0), (1.0, 0.0), power=1.0)
    assert abs(div - want) > 0.1


def test_fd_constant_closed_form():
    from scipy.integrate import quad

    ang = quad(lambda t: abs(math.cos(t)) ** 1.5, 0, 2 * math.pi, points=[math.pi / 2, 3 * math.pi / 2])[0]
    assert mo.fd_constant() == pytest.approx(2 * math.pi / ang, rel=1e-10)


def test_unit_weight_exact_symbol_is_radial():
    ex = mo.weighted_fd_exact_symbol(G, Weight.unit())
    from muskatlab.weights import PHI_UNIT

    # midpoint rule across the kinks of |cos|^{3/2}
    assert np.allclose(ex, G.kmag**1.5 * PHI_UNIT, rtol=1e-8)


def test_weighted_fd_matches_spectral_for_unit_weight():
    g = field(12, kmax=4)
    fd = transform(mo.weighted_fd_laplacian(g, Weight.unit(), Q.refined(2))).coeffs
    sp = mo.weighted_dhalf(transform(g), Weight.unit()).coeffs
    assert np.linalg.norm(fd - sp) / np.linalg.norm(sp) < 2e-2


def test_riesz_commutator_vanishes_for_flat_data():
    c = mo.commutator_riesz_drift(G.zeros(), field(13), Q)
    assert np.max(np.abs(c.values)) == 0.0


def test_weighted_commutator_vanishes_in_linear_limit():
    f = field(14, amp=1e-7)
    c = mo.commutator_weighted(f, Weight.log_pow(0.375), Q)
    ref = mo.weighted_dhalf(transform(mo.muskat_rhs(f, Q)), Weight.log_pow(0.375))
    assert np.max(np.abs(c.values)) < 1e-9 * np.max(np.abs(inverse(ref).values))


def test_tail_estimate_scales_with_sup():
    f = field(15)
    assert mo.tail_estimate(f * 3.0, Q) == pytest.approx(3 * mo.tail_estimate(f, Q))


def test_worker_count_does_not_change_bits():
    f = field(16, amp=2.0)
    a = mo.muskat_rhs(f, Q, workers=1).values
    b = mo.muskat_rhs(f, Q, workers=3).values
    assert a.tobytes() == b.tobytes()
