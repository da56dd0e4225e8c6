import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from cgue.ensembles import EnsembleSpec, generate
from cgue.errors import InvalidArgumentError, NumericFailure
from cgue.stats import (POISSON_RATIO_MEAN, Staircase, classify, compare, delta3,
                        fluctuation_report, nnsd, number_variance, ratio_values,
                        repulsion_exponent, spacing_ratios, unfold, unfold_many,
                        wigner_surmise_cdf, wigner_surmise_pdf)
from cgue.stats import _delta3_windows

pytestmark = pytest.mark.filterwarnings("ignore:only .* spacing ratios")


def poisson_levels(n, seed):
    return np.cumsum(np.random.default_rng(seed).exponential(size=n))


def brute_delta3(x, a, L, sub=200):
    """Weighted least-squares line fit to the staircase.

    The window is cut at every level and each piece into ``sub`` parts; the
    staircase is constant on each part, so 2-point Gauss nodes make the
    normal equations exact.
    """
    cuts = np.unique(np.concatenate([[a, a + L], x[(x > a) & (x < a + L)]]))
    edges = np.unique(np.concatenate([np.linspace(lo, hi, sub + 1)
                                      for lo, hi in zip(cuts[:-1], cuts[1:])]))
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    g = 1 / np.sqrt(3)
    t = np.concatenate([mid - g * half, mid + g * half])
    w = np.concatenate([half, half])
    n = np.searchsorted(x, t, side="right").astype(float)
    A = np.stack([t, np.ones_like(t)], axis=1)
    coef, *_ = np.linalg.lstsq(A * np.sqrt(w)[:, None], n * np.sqrt(w), rcond=None)
    return float(np.sum(w * (n - A @ coef) ** 2) / L)


def test_surmise_normalised():
    assert integrate.quad(wigner_surmise_pdf, 0, np.inf)[0] == pytest.approx(1.0, abs=1e-10)
    assert integrate.quad(lambda s: s * wigner_surmise_pdf(s), 0, np.inf)[0] == pytest.approx(1.0)
    assert wigner_surmise_cdf(50.0) == pytest.approx(1.0)


def test_poisson_ratio_constant():
    # density of r = min(s1/s2, s2/s1) for i.i.d. exponentials is 2/(1+r)^2
    val = integrate.quad(lambda r: r * 2 / (1 + r) ** 2, 0, 1)[0]
    assert POISSON_RATIO_MEAN == pytest.approx(val, abs=1e-12)
    assert POISSON_RATIO_MEAN == pytest.approx(0.386294361, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.7, 6.0), st.floats(0.0, 20.0))
def test_delta3_matches_brute_force(seed, L, offset):
    x = poisson_levels(60, seed)
    a = x[0] + offset
    if a + L > x[-1]:
        a = x[0]
    exact = _delta3_windows(x, np.array([a]), L)
    assert exact == pytest.approx(brute_delta3(x, a, L), rel=1e-8, abs=1e-12)


def test_picket_fence_rigidity():
    x = np.arange(400, dtype=float) + 0.5
    # free-slope fits undercut 1/12 at small L; the lattice limit is reached from below
    d3 = delta3([x], L_grid=(1.0, 5.0, 10.0, 20.0))
    assert np.all(np.diff(d3.value) > 0)
    assert np.allclose(d3.value[2:], 1 / 12, atol=1e-3)
    s2 = number_variance([x], L_grid=(2.0, 2.5, 3.0))
    # integer L gives exact counts; L=2.5 gives f(1-f) with f=1/2
    assert np.allclose(s2.value, [0.0, 0.25, 0.0], atol=1e-2)


def test_poisson_number_variance_and_rigidity():
    arrays = [poisson_levels(2000, s) for s in range(20)]
    L = (1.0, 2.0, 5.0)
    s2 = number_variance(arrays, L_grid=L)
    d3 = delta3(arrays, L_grid=L)
    assert np.all(np.abs(s2.value - np.array(L)) < 4 * s2.stderr + 0.02)
    assert np.all(np.abs(d3.value - np.array(L) / 15) < 4 * d3.stderr + 0.005)


def test_poisson_ratio_mean_and_classification():
    arrays = [poisson_levels(1000, s) for s in range(10)]
    r = spacing_ratios(arrays)
    assert abs(r.mean - POISSON_RATIO_MEAN) < 4 * r.stderr
    rep = fluctuation_report(arrays, method="polynomial", L_grid=(1.0, 2.0))
    assert classify(rep, gue_ratio_mean=0.60) == "Poisson-consistent"


def test_ratio_values_of_lattice():
    assert np.allclose(ratio_values(np.arange(50.0), edge_fraction=0), 1.0)


def test_unfold_uniform_linear():
    x = np.linspace(0, 1, 101)
    u = unfold(x, "polynomial", degree=1, edge_fraction=0)
    assert np.allclose(u.spacings(), 1.0, atol=1e-10)


def test_unfold_guards():
    with pytest.raises(InvalidArgumentError):
        unfold(np.arange(10.0))
    with pytest.raises(InvalidArgumentError):
        unfold(np.arange(30.0), "bogus")
    with pytest.raises(InvalidArgumentError):
        unfold(np.arange(30.0), "ensemble")
    with pytest.raises(NumericFailure):
        unfold(np.r_[np.zeros(15), np.ones(15)], "polynomial", degree=7)


def test_semicircle_unfolding_gue():
    spectra = generate(EnsembleSpec("gue", dim=200, seed=4), 10)
    for s in spectra:
        u = unfold(s, "semicircle")
        assert np.mean(u.spacings()) == pytest.approx(1.0, abs=0.02)


def test_poisson_unfolded_spacings_are_exponential():
    rng = np.random.default_rng(7)
    arrays = [np.sort(rng.uniform(0, 1, 500)) for _ in range(10)]
    un = unfold_many(arrays, "polynomial", degree=3)
    h = nnsd(un)
    assert h.ks_poisson < 0.03
    assert h.ks_gue > 0.1


def test_ensemble_staircase_unfolding_has_unit_spacing():
    spectra = generate(EnsembleSpec("gue", dim=100, seed=2), 60)
    st_ = Staircase(spectra)
    for s in spectra[:5]:
        u = unfold(s, "ensemble", staircase=st_)
        assert np.mean(u.spacings()) == pytest.approx(1.0, abs=0.05)


def test_report_invariants_and_self_compare():
    spectra = generate(EnsembleSpec("gue", dim=80, seed=6), 20)
    rep = fluctuation_report(spectra, L_grid=(1.0, 2.0, 4.0))
    h = rep.nnsd
    assert np.sum(h.density * np.diff(h.edges)) == pytest.approx(1.0, abs=1e-6)
    assert 0 <= h.ks_gue <= 1 and 0 <= h.ks_poisson <= 1
    c = compare(rep, rep)
    assert c["ks_nnsd"] == 0 and c["ratio_diff"] == 0 and c["sigma2_sup"] == 0
    d = rep.to_dict()
    assert d["n_samples"] == 20 and len(d["sigma2"]["L"]) == 3
    other = fluctuation_report(spectra, L_grid=(1.0, 2.0))
    with pytest.raises(InvalidArgumentError):
        compare(rep, other)


def test_gue_repulsion_exponent_near_two():
    spectra = generate(EnsembleSpec("gue", dim=100, seed=12), 100)
    un = unfold_many(spectra, "ensemble")
    beta = repulsion_exponent(nnsd(un).spacings, s_range=(0.05, 0.5))
    assert 1.5 < beta < 2.5


def test_too_few_spacings_flag():
    h = nnsd([np.arange(30.0)])
    assert h.ks_gue is None and "too-few-spacings" in h.flags


@settings(max_examples=10, deadline=None)
@given(st.floats(-50, 50), st.floats(0.2, 5.0))
def test_report_invariant_under_affine_maps(shift, scale):
    spectra = [s.eigenvalues for s in generate(EnsembleSpec("gue", dim=60, seed=1), 5)]
    moved = [scale * s + shift for s in spectra]
    a = fluctuation_report(spectra, method="polynomial", L_grid=(1.0, 2.0))
    b = fluctuation_report(moved, method="polynomial", L_grid=(1.0, 2.0))
    assert a.ratios.mean == pytest.approx(b.ratios.mean, abs=1e-9)
    assert np.allclose(a.sigma2.value, b.sigma2.value, atol=1e-6)
    assert np.allclose(a.delta3.value, b.delta3.value, atol=1e-6)
