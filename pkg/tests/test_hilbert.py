import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_hermitian
from mflaser.errors import DimensionError, NotHermitianError
from mflaser.hilbert import (SpaceDescriptor, adjoint, annihilation, build_operators, commutator,
                             expectation, frobenius_distance, hermitian_eigen, trace, trace_distance)


class TestSpaceDescriptor:
    @pytest.mark.parametrize("n_max", [1, 3, 30])
    def test_dim(self, n_max):
        assert SpaceDescriptor(n_max).dim == 2 * (n_max + 1)

    @pytest.mark.parametrize("bad", [0, -1, 2.5])
    def test_rejects_small_cutoff(self, bad):
        with pytest.raises(ValueError):
            SpaceDescriptor(bad)

    def test_index_is_bijective(self):
        sp = SpaceDescriptor(5)
        idx = [sp.idx(n, q) for n in range(6) for q in (0, 1)]
        assert sorted(idx) == list(range(sp.dim))
        assert all(sp.label(sp.idx(n, q)) == (n, q) for n in range(6) for q in (0, 1))

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            SpaceDescriptor(2).idx(3, 0)

    def test_embed_matches_index_convention(self):
        sp = SpaceDescriptor(3)
        field = np.zeros(4)
        field[2] = 1
        v = sp.embed(field, np.array([0, 1]))
        np.testing.assert_array_equal(v, sp.basis(2, 1))


@pytest.fixture(scope="module")
def ops3():
    return build_operators(SpaceDescriptor(3))


class TestOperators:
    def test_vacuum_annihilation(self, ops3):
        sp = ops3.space
        for q in (0, 1):
            np.testing.assert_array_equal(ops3.a @ sp.basis(0, q), 0)

    def test_creation_on_level_two(self, ops3):
        sp = ops3.space
        np.testing.assert_allclose(ops3.a_dag @ sp.basis(2, 0), np.sqrt(3) * sp.basis(3, 0), atol=1e-15)

    def test_canonical_commutator_with_cutoff_corner(self, ops3):
        sp = ops3.space
        c = commutator(ops3.a, ops3.a_dag)
        for n in range(3):
            for q in (0, 1):
                np.testing.assert_allclose(c @ sp.basis(n, q), sp.basis(n, q), atol=1e-14)
        for q in (0, 1):
            i = sp.idx(3, q)
            assert c[i, i] == pytest.approx(-3)

    def test_sigma_commutator(self, ops3):
        np.testing.assert_allclose(commutator(ops3.sigma_plus, ops3.sigma_minus), ops3.sigma_3, atol=1e-15)

    def test_atomic_identities(self, ops3):
        I = ops3.identity
        np.testing.assert_allclose(ops3.sigma_plus @ ops3.sigma_minus + ops3.sigma_minus @ ops3.sigma_plus, I)
        np.testing.assert_allclose(ops3.sigma_3 @ ops3.sigma_3, I)

    def test_a_dag_is_exact_adjoint(self, ops3):
        assert np.array_equal(ops3.a_dag, ops3.a.conj().T)

    def test_number_operator_diagonal(self, ops3):
        sp = ops3.space
        np.testing.assert_allclose(np.diag(ops3.n_op).real, sp.photon_numbers(), rtol=1e-14)
        assert np.count_nonzero(ops3.n_op - np.diag(np.diag(ops3.n_op))) == 0

    def test_operators_are_read_only(self, ops3):
        with pytest.raises(ValueError):
            ops3.a[0, 0] = 1

    def test_annihilation_small(self):
        np.testing.assert_allclose(annihilation(3), [[0, 1, 0], [0, 0, np.sqrt(2)], [0, 0, 0]])


class TestMatrixOps:
    def test_self_commutator_vanishes(self, rng):
        A = rng.normal(size=(6, 6))
        np.testing.assert_array_equal(commutator(A, A), 0)

    def test_sigma3_on_excited_state(self):
        sp = SpaceDescriptor(2)
        ops = build_operators(sp)
        v = sp.basis(0, 0)
        assert expectation(ops.sigma_3, np.outer(v, v.conj())) == pytest.approx(1)

    def test_sigma_minus_coherence(self):
        sp = SpaceDescriptor(2)
        ops = build_operators(sp)
        v = (sp.basis(0, 0) + sp.basis(0, 1)) / np.sqrt(2)
        assert trace(ops.sigma_minus @ np.outer(v, v.conj())) == pytest.approx(0.5)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            commutator(np.eye(2), np.eye(3))

    def test_trace_distance_of_orthogonal_pure_states(self):
        assert trace_distance(np.diag([1.0, 0]), np.diag([0, 1.0])) == pytest.approx(1.0)
        assert frobenius_distance(np.eye(2), np.eye(2)) == 0

    def test_adjoint(self):
        A = np.array([[1, 2j], [3, 4]])
        np.testing.assert_array_equal(adjoint(A), [[1, 3], [-2j, 4]])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
    def test_trace_of_commutator(self, n, seed):
        r = np.random.default_rng(seed)
        A = r.normal(size=(n, n)) + 1j * r.normal(size=(n, n))
        B = r.normal(size=(n, n)) + 1j * r.normal(size=(n, n))
        scale = np.linalg.norm(A) * np.linalg.norm(B)
        assert abs(trace(commutator(A, B))) <= 1e-12 * scale


class TestHermitianEigen:
    def test_identity(self):
        lam, _ = hermitian_eigen(np.eye(4))
        np.testing.assert_allclose(lam, 1)

    def test_sigma3_spectrum(self):
        lam, _ = hermitian_eigen(build_operators(SpaceDescriptor(1)).sigma_3)
        np.testing.assert_allclose(lam, [-1, -1, 1, 1])

    def test_random_reconstruction(self, rng):
        A = random_hermitian(rng, 8)
        lam, V = hermitian_eigen(A)
        np.testing.assert_allclose((V * lam) @ V.conj().T, A, atol=1e-10)
        np.testing.assert_allclose(V.conj().T @ V, np.eye(8), atol=1e-10)
        np.testing.assert_allclose(A @ V, V * lam, atol=1e-8 * np.linalg.norm(A, 2))

    def test_rejects_non_hermitian(self):
        with pytest.raises(NotHermitianError):
            hermitian_eigen(np.array([[0, 1], [0, 0]]))
