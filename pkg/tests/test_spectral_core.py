import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from muskatlab.quadrature import REFERENCE
from muskatlab.spectral_core import (
    Grid,
    GridMismatch,
    RealField,
    SpectralField,
    gagliardo_seminorm,
    gradient,
    inner,
    inverse,
    lipschitz_norm,
    pad_spectrum,
    power_symbol,
    rescale_critical,
    rescale_critical_same_grid,
    riesz,
    shift,
    sobolev_norm,
    sup_norm,
    transform,
    truncate_spectrum,
)

from conftest import MID, SMALL, random_field, seeds


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(7, 1.0)
    with pytest.raises(ValueError):
        Grid(16, 0.0)
    assert Grid(128, 32).h == 0.25


def test_constant_has_single_coefficient():
    F = transform(RealField(SMALL, np.full((16, 16), 3.0)))
    assert F.coeffs[0, 0] == pytest.approx(3.0)
    assert np.max(np.abs(F.coeffs.ravel()[1:])) < 1e-14


def test_fields_are_immutable():
    f = random_field(SMALL, 0)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_grid_mismatch_raises():
    a = transform(random_field(SMALL, 0))
    b = transform(random_field(Grid(16, 3.0), 0))
    with pytest.raises(GridMismatch):
        a + b


def test_derivative_of_single_mode():
    g = SMALL
    X, Y = g.mesh
    F = transform(RealField(g, np.sin(2 * X) * np.cos(Y)))
    d1, d2 = gradient(F)
    assert np.allclose(inverse(d1).values, 2 * np.cos(2 * X) * np.cos(Y), atol=1e-12)
    assert np.allclose(inverse(d2).values, -np.sin(2 * X) * np.sin(Y), atol=1e-12)


def test_l2_matches_sobolev_zero():
    f = random_field(MID, 3)
    assert sobolev_norm(transform(f), 0.0) == pytest.approx(f.l2(), rel=1e-12)


def test_sobolev_order_range():
    with pytest.raises(ValueError):
        sobolev_norm(transform(random_field(SMALL, 1)), 4.5)


def test_power_symbol_zero_mode():
    assert power_symbol(SMALL, 1.0)[0, 0] == 0.0
    assert power_symbol(SMALL, 0.0)[0, 0] == 1.0


@given(seeds)
def test_roundtrip_is_identity(seed):
    f = random_field(SMALL, seed)
    assert np.allclose(inverse(transform(f)).values, f.values, atol=1e-13)


@given(seeds)
def test_parseval(seed):
    f, g = random_field(SMALL, seed), random_field(SMALL, seed + 1)
    direct = float(np.sum(f.values * g.values)) * SMALL.h**2
    assert inner(transform(f), transform(g)) == pytest.approx(direct, rel=1e-10, abs=1e-12)


@given(seeds)
def test_real_fields_are_hermitian(seed):
    assert transform(random_field(SMALL, seed)).hermitian_defect() < 1e-14


@given(seeds, st.integers(-8, 8), st.integers(-8, 8))
def test_lattice_shift_is_roll(seed, i, j):
    f = random_field(SMALL, seed)
    got = inverse(shift(transform(f), (i * SMALL.h, j * SMALL.h))).values
    assert np.allclose(got, np.roll(f.values, (i, j), axis=(0, 1)), atol=1e-12)


@given(seeds, st.floats(-5, 5), st.floats(-5, 5))
def test_shifts_compose(seed, a, b):
    F = transform(random_field(SMALL, seed))
    one = shift(shift(F, (a, 0.0)), (0.0, b))
    assert np.allclose(one.coeffs, shift(F, (a, b)).coeffs, atol=1e-14)


@given(seeds)
def test_riesz_squares_to_minus_identity(seed):
    F = transform(random_field(SMALL, seed, kmax=5))
    r1, r2 = riesz(F)
    s = riesz(r1)[0].coeffs + riesz(r2)[1].coeffs
    assert np.allclose(s, -(F.coeffs - np.where(SMALL.kmag == 0, F.coeffs, 0)), atol=1e-13)


@given(seeds)
def test_pad_truncate_roundtrip(seed):
    c = transform(random_field(SMALL, seed, kmax=8)).coeffs
    assert np.allclose(truncate_spectrum(pad_spectrum(c, 24), 16), c, atol=1e-15)


@given(seeds)
def test_padding_keeps_real_fields_real(seed):
    c = transform(random_field(SMALL, seed, kmax=8)).coeffs
    assert SpectralField(Grid(32, SMALL.l), pad_spectrum(c, 32)).hermitian_defect() < 1e-14


@given(seeds, st.floats(0.25, 4.0))
def test_critical_rescaling_invariance(seed, lam):
    f = random_field(SMALL, seed)
    F, Fl = transform(f), transform(rescale_critical(f, lam))
    assert sobolev_norm(Fl, 2.0) == pytest.approx(sobolev_norm(F, 2.0), rel=1e-12)
    assert lipschitz_norm(Fl) == pytest.approx(lipschitz_norm(F), rel=1e-12)


def test_rescaling_same_grid_guards():
    f = random_field(SMALL, 2)
    with pytest.raises(ValueError):
        rescale_critical_same_grid(f, 0.5)
    with pytest.raises(ValueError):
        rescale_critical(f, -1.0)


@pytest.mark.parametrize("lam,width2", [(0.75, 4.0), (1.5, 9.0)])
def test_rescaling_same_grid_gaussian(lam, width2):
    g = Grid(64, 32.0)
    X, Y = g.mesh
    f = RealField(g, np.exp(-((X - 16) ** 2 + (Y - 16) ** 2) / width2))
    fl = rescale_critical_same_grid(f, lam)
    want = np.exp(-((lam * (X - 16)) ** 2 + (lam * (Y - 16)) ** 2) / width2) / lam
    # beyond half width l / (2 lam) the periodic images of f come into view
    box = (np.abs(X - 16) < 16 / max(lam, 1.0)) & (np.abs(Y - 16) < 16 / max(lam, 1.0))
    assert np.allclose(fl.values[box], want[box], atol=1e-12)


def test_sup_norm_sees_between_samples():
    g = SMALL
    X, _ = g.mesh
    f = RealField(g, np.cos(3 * X + 0.3))
    assert sup_norm(transform(f), 4) >= np.max(np.abs(f.values))


def test_gagliardo_matches_spectral_formula():
    # for s in (0,1) the seminorm squared equals C(s) int |xi|^{2s} |F|^2
    g = Grid(64, 32.0)
    X, Y = g.mesh
    f = RealField(g, np.exp(-((X - 16) ** 2 + (Y - 16) ** 2) / 4))
    s = 0.5
    res = gagliardo_seminorm(f, s, REFERENCE)
    spec = sobolev_norm(transform(f), s)
    ratio = res.value**2 / spec**2
    # the constant is direction independent: check against a second profile
    f2 = RealField(g, np.exp(-((X - 16) ** 2 + 4 * (Y - 16) ** 2) / 4))
    r2 = gagliardo_seminorm(f2, s, REFERENCE).value ** 2 / sobolev_norm(transform(f2), s) ** 2
    assert ratio == pytest.approx(r2, rel=1e-2)
