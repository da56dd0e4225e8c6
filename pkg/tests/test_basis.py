import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgue.basis import (band_complement_constraints, critical_count, degeneracy_profile,
                        diagonal_p_constraints, explicit_constraints, projectors,
                        random_traceless_constraints, standard_basis, traceless_reduce)
from cgue.errors import AmbiguityError, InvalidArgumentError
from cgue.hermitian import expand, reconstruct


def test_standard_basis_small():
    b1 = standard_basis(1)
    assert len(b1) == 1 and np.allclose(b1.matrices[0], [[1]])
    b2 = standard_basis(2)
    assert len(b2) == 4
    assert np.allclose(b2.gram(), np.eye(4), atol=1e-12)
    with pytest.raises(InvalidArgumentError):
        standard_basis(0)


def test_standard_basis_completeness_n5():
    basis = standard_basis(5)
    assert basis.is_complete()
    rng = np.random.default_rng(0)
    for _ in range(10):
        z = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        a = z + z.conj().T
        assert np.max(np.abs(reconstruct(expand(a, basis), basis).entries - a)) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=6))
def test_critical_count_formula(mult):
    n = sum(mult)
    expected = n * (n - 1) // 2 - sum(m * (m - 1) // 2 for m in mult)
    assert critical_count(mult) == expected
    # pairs of levels in different clusters
    labels = np.repeat(np.arange(len(mult)), mult)
    brute = sum(1 for i in range(n) for j in range(i + 1, n) if labels[i] != labels[j])
    assert critical_count(mult) == brute


def test_critical_count_known_values():
    assert critical_count([1] * 10) == 45
    assert critical_count([4, 4]) == 16
    assert critical_count([1] * 495) == 122265
    assert 122265 == 495 * 247


def test_generic_constraints_have_no_degeneracy():
    prof = degeneracy_profile(random_traceless_constraints(10, 3, seed=4))
    assert prof.multiplicities == (1,) * 10
    assert prof.nq_crit == 45
    assert prof.J == 10 and prof.dim == 10


def test_block_degenerate_single_constraint():
    d = np.array([1.0] * 4 + [-1.0] * 4)
    prof = degeneracy_profile(explicit_constraints([np.diag(d / np.linalg.norm(d))]))
    assert prof.multiplicities == (4, 4)
    assert prof.nq_crit == 16


def test_partially_degenerate_pair_and_ambiguity():
    d1 = np.diag([1.0, 1.0, -1.0, -1.0]) / 2
    d2 = np.diag([1.0, -1.0, 0.0, 0.0]) / np.sqrt(2)
    # levels 3 and 4 coincide for every combination of the two constraints
    cs = explicit_constraints([d1, d2])
    prof = degeneracy_profile(cs)
    assert prof.multiplicities == (2, 1, 1)
    assert prof.nq_crit == 5
    # a coarse clustering tolerance merges levels for some directions only
    with pytest.raises(AmbiguityError) as exc:
        degeneracy_profile(cs, cluster_tol=0.2)
    assert len(exc.value.patterns) == 2


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.data(), st.integers(0, 10**6))
def test_random_constraints_traceless_and_orthonormal(n, data, seed):
    n_q = data.draw(st.integers(0, n * n - 1))
    cs = random_traceless_constraints(n, n_q, seed)
    assert cs.n_q == n_q and cs.n_p == n * n - n_q
    if n_q:
        rows = cs.q_rows
        assert np.allclose(rows @ rows.T, np.eye(n_q), atol=1e-10)
        assert np.all(np.abs(cs.q_traces()) < 1e-10)
        assert cs.traceless


def test_too_many_traceless_constraints():
    with pytest.raises(InvalidArgumentError):
        random_traceless_constraints(3, 9, seed=0)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10**6))
def test_projectors_are_complementary(n, seed):
    cs = random_traceless_constraints(n, n, seed)
    p, q = projectors(cs)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = z + z.conj().T
    assert np.allclose(p(h) + q(h), h, atol=1e-10)
    assert np.allclose(p(p(h)), p(h), atol=1e-10)
    assert abs(np.trace(p(h) @ q(h))) < 1e-9


def test_diagonal_and_band_partitions():
    d = diagonal_p_constraints(6)
    assert d.n_p == 6 and d.n_q == 30
    band = band_complement_constraints(6, 1)
    assert band.n_p == 6 + 2 * 5
    with pytest.raises(InvalidArgumentError):
        band_complement_constraints(6, 0)


def non_traceless_set(n, n_q, rng):
    mats = []
    for _ in range(n_q):
        z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        mats.append(z + z.conj().T)
    return explicit_constraints(mats)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.data(), st.integers(0, 10**6))
def test_traceless_reduction(n, data, seed):
    n_q = data.draw(st.integers(1, min(10, n * n - 1)))
    cs = non_traceless_set(n, n_q, np.random.default_rng(seed))
    red, info = traceless_reduce(cs)
    assert np.max(np.abs(red.q_rows.T @ red.q_rows - cs.q_rows.T @ cs.q_rows)) < 1e-9
    assert np.all(np.abs(red.q_traces()[1:]) < 1e-10)
    assert info.alpha_squared + info.trace_b1 ** 2 / n == pytest.approx(1.0, abs=1e-10)


def test_traceless_reduction_edges():
    identity = explicit_constraints([np.eye(3) / np.sqrt(3)])
    _, info = traceless_reduce(identity)
    assert info.edge == "alpha=0" and info.b1_hat is None
    _, info = traceless_reduce(random_traceless_constraints(3, 2, seed=1))
    assert info.edge == "alpha=1"
