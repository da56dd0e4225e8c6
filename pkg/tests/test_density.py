import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize

from cgue.basis import random_traceless_constraints
from cgue.constraining import angular_moments
from cgue.density import (EffectiveField, effective_field, effective_field_from_moments,
                          empirical_l1, iterate_density, principal_value_transform, radial_moments,
                          residual, semicircle, semicircle_cdf, semicircle_pdf, solve_density)
from cgue.ensembles import EnsembleSpec, generate
from cgue.errors import DivergenceError, InfeasibleError, InvalidArgumentError


def closed_semicircle(e):
    return np.where(np.abs(e) <= 2, np.sqrt(np.clip(4 - e * e, 0, None)) / (2 * np.pi), 0.0)


def quartic_oracle(c):
    """One-cut density for eps + c eps^3 = 2 P int rho/(eps - y):
    rho = (1 + c a^2/2 + c eps^2) sqrt(a^2 - eps^2) / (2 pi) with a^2/4 + 3 c a^4/16 = 1."""
    a = optimize.brentq(lambda a: a * a / 4 + 3 * c * a ** 4 / 16 - 1, 0.1, 2.5)
    return a, lambda e: np.where(np.abs(e) <= a, (1 + c * a * a / 2 + c * e * e)
                                 * np.sqrt(np.clip(a * a - e * e, 0, None)) / (2 * np.pi), 0.0)


def test_semicircle_closed_form_properties():
    assert integrate.quad(closed_semicircle, -2, 2)[0] == pytest.approx(1.0, abs=1e-10)
    assert integrate.quad(lambda e: e * e * closed_semicircle(e), -2, 2)[0] == pytest.approx(1.0)
    assert semicircle_cdf(0.0) == pytest.approx(0.5)
    assert semicircle_cdf(2.5) == 1.0
    e = np.linspace(-2, 2, 9)
    assert np.allclose(semicircle_pdf(e), closed_semicircle(e))


def test_semicircle_model_invariants():
    dm = semicircle()
    assert dm.normalization() == pytest.approx(1.0, abs=1e-6)
    assert dm.moments[2] == pytest.approx(1.0, abs=1e-12)
    assert dm.moments[4] == pytest.approx(2.0, abs=1e-12)  # Catalan number
    assert np.allclose(dm.rho, dm.rho[::-1], atol=1e-12)
    assert np.all(dm.rho >= 0)
    assert dm.l1_distance(closed_semicircle) < 1e-8


def test_semicircle_solves_the_saddle_equation():
    dm = semicircle()
    eps = np.linspace(-1.8, 1.8, 13)
    assert np.allclose(principal_value_transform(dm, eps), eps, atol=1e-8)


def test_zero_field_recovers_semicircle():
    fld = EffectiveField({1: 0.0, 3: 0.0, 5: 0.0})
    dm = solve_density(fld)
    x = np.linspace(-2.1, 2.1, 4001)
    assert np.max(np.abs(dm.evaluate(x) - closed_semicircle(x))) < 1e-4
    assert dm.a == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("c", [0.01, 0.1, -0.02])
def test_cubic_drive_matches_closed_form(c):
    dm = solve_density(EffectiveField({1: 0.0, 3: -c}))
    a, rho = quartic_oracle(c)
    assert dm.a == pytest.approx(a, rel=1e-10)
    x = np.linspace(-a, a, 1001)
    assert np.max(np.abs(dm.evaluate(x) - rho(x))) < 1e-10
    assert residual(dm, EffectiveField({1: 0.0, 3: -c})) < 1e-8


def test_linear_field_rescales_semicircle():
    # eps (1 - c1) drive gives a semicircle of radius 2/sqrt(1 - c1)
    c1 = 0.2
    dm = solve_density(EffectiveField({1: c1}))
    assert dm.a == pytest.approx(2 / np.sqrt(1 - c1), rel=1e-12)
    assert dm.moments[2] == pytest.approx(1 / (1 - c1), rel=1e-10)


def test_infeasible_drive():
    with pytest.raises(InfeasibleError):
        solve_density(EffectiveField({1: 1.5}))


def test_radial_moments_gaussian_oracle():
    # weight u^(q/2-1) exp(-b u) is a Gamma(q/2, 1/b) density
    q, b = 6, 0.7
    out = radial_moments({1: -b}, q, [1, 2])
    assert out[1] == pytest.approx((q / 2) / b, rel=1e-6)
    assert out[2] == pytest.approx((q / 2) * (q / 2 + 1) / b ** 2, rel=1e-6)
    with pytest.raises(DivergenceError):
        radial_moments({1: -b, 2: 0.1}, q, [1])


def test_effective_field_guards():
    ang = {2: 1.0, 4: 0.1, 6: 0.01}
    sc = semicircle().moments
    assert effective_field_from_moments(sc, ang, 10, 0, 3).coeffs == {1: 0.0, 3: 0.0, 5: 0.0}
    with pytest.raises(InvalidArgumentError):
        effective_field_from_moments(sc, ang, 10, 45, 3)
    with pytest.raises(InvalidArgumentError):
        effective_field_from_moments(sc, ang, 10, 5, 0)
    with pytest.raises(DivergenceError):
        effective_field_from_moments(sc, ang, 10, 5, 2)


def test_leading_field_coefficient():
    n, n_q = 64, 400
    fld = effective_field(semicircle(), {2: 1.0}, n, n_q, n_max=1)
    # u = r^2 is Gamma(N_Q/2) with rate 1/(2N), so <u> = N_Q N and c_1 = -<u>/N^3
    assert fld.coeffs[1] == pytest.approx(-n_q / n ** 2, rel=1e-6)
    reg = effective_field(semicircle(), {2: 1.0}, n, n_q, n_max=1, regularized=True)
    assert reg.coeffs[1] == pytest.approx(0.0, abs=1e-9)


@pytest.fixture(scope="module")
def angular64():
    return {n_q: angular_moments(random_traceless_constraints(64, n_q, 21), n_max=6, mc_samples=64)
            for n_q in (256, 512, 1024)}


@pytest.mark.parametrize("n_max", [1, 3])
def test_second_moment_self_consistency(angular64, n_max):
    ang = angular64[512]
    dm = iterate_density(ang, 64, n_max=n_max)
    assert dm.moments[2] == pytest.approx(1 - 512 / 64 ** 2, abs=2e-3)
    assert dm.normalization() == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(dm.rho, dm.rho[::-1], atol=1e-9)
    assert dm.residual < 1e-8
    assert dm.iterations > 0


def test_regularized_iteration_stays_semicircle(angular64):
    dm = iterate_density(angular64[256], 64, n_max=1, regularized=True)
    assert dm.a == pytest.approx(2.0, abs=1e-6)


def test_iteration_reports_nonconvergence(angular64):
    with pytest.raises(DivergenceError) as exc:
        iterate_density(angular64[1024], 64, n_max=3, max_iters=2, check_residual=False)
    assert len(exc.value.trace) == 2


def test_nq_crit_guard(angular64):
    with pytest.raises(InvalidArgumentError):
        iterate_density(angular64[256], 64, nq_crit=200)


def test_empirical_l1_gue():
    ev = np.concatenate([s.eigenvalues for s in generate(EnsembleSpec("gue", dim=100, seed=3), 50)])
    assert empirical_l1(semicircle(), ev) < 0.05
    assert empirical_l1(semicircle(), 0.8 * ev) > 0.1


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.2, 0.3), st.floats(-0.03, 0.03))
def test_solved_density_invariants(c1, c3):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fld = EffectiveField({1: c1, 3: c3})
    try:
        dm = solve_density(fld)
    except InfeasibleError:
        return
    assert dm.normalization() == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(dm.rho, dm.rho[::-1], atol=1e-9)
    assert dm.rho.min() >= -1e-12
