import numpy as np
import pytest

from qimex.linalg import (
    EXP_NORM_CAP,
    block_norm_bound,
    central_difference_matrix,
    hermitian_split,
    log_norm,
    matrix_exp,
    second_derivative_matrix,
    spectral_norm,
    weyl_gap_bound,
)

from oracles import assemble_blocks, lognorm_fd, taylor_expm


class TestHermitianSplit:
    def test_identity(self):
        s = hermitian_split(np.eye(3))
        assert np.allclose(s.herm, np.eye(3))
        assert np.allclose(s.antiherm, 0)

    def test_skew_case(self):
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])
        s = hermitian_split(A)
        assert np.allclose(s.herm, 0)
        assert np.allclose(s.antiherm, np.array([[0, -1j], [1j, 0]]))

    def test_parts_hermitian_and_roundtrip(self, rng):
        A = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        s = hermitian_split(A)
        scale = np.max(np.abs(A))
        assert np.max(np.abs(s.herm - s.herm.conj().T)) <= 1e-12 * scale
        assert np.max(np.abs(s.antiherm - s.antiherm.conj().T)) <= 1e-12 * scale
        assert np.max(np.abs(s.reconstruct() - A)) <= 1e-12 * scale

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            hermitian_split(np.ones((2, 3)))


class TestLogNorm:
    def test_negative_identity(self):
        assert log_norm(-np.eye(4)) == pytest.approx(-1.0)

    def test_triangular_example(self):
        A = np.array([[-1.0, 4.0], [0.0, -2.0]])
        assert log_norm(A) == pytest.approx((-3 + np.sqrt(17)) / 2, abs=1e-12)

    def test_matches_finite_difference_oracle(self, rng):
        for _ in range(5):
            A = rng.standard_normal((4, 4))
            assert log_norm(A) == pytest.approx(lognorm_fd(A), abs=1e-5)


class TestMatrixExp:
    def test_zero(self):
        assert np.allclose(matrix_exp(np.zeros((3, 3)), 1.0), np.eye(3))

    def test_diagonal(self):
        out = matrix_exp(np.diag([-1.0, -2.0]), 1.0)
        assert np.allclose(out, np.diag([np.exp(-1), np.exp(-2)]), atol=1e-14)

    def test_matches_taylor_oracle(self, rng):
        A = rng.standard_normal((6, 6))
        got = matrix_exp(A, 0.7)
        ref = taylor_expm(A, 0.7)
        assert spectral_norm(got - ref) <= 1e-10 * spectral_norm(ref)

    def test_hermitian_and_unitary_paths(self, rng):
        G = rng.standard_normal((5, 5))
        H = (G + G.T) / 2
        assert spectral_norm(matrix_exp(H, 0.5) - taylor_expm(H, 0.5)) < 1e-11
        U = matrix_exp(-1j * H, 2.0)  # skew-Hermitian generator
        assert spectral_norm(U @ U.conj().T - np.eye(5)) < 1e-13

    def test_overflow_guard(self):
        with pytest.raises(ValueError, match="cap"):
            matrix_exp(np.eye(2) * (2 * EXP_NORM_CAP), 1.0)


class TestDifferenceOperators:
    def test_second_derivative_n3(self):
        _, eigs = second_derivative_matrix(3)
        assert sorted(eigs) == pytest.approx(sorted([-2 + np.sqrt(2), -2.0, -2 - np.sqrt(2)]))

    def test_negative_spectrum(self):
        for N in (1, 2, 5, 17):
            _, eigs = second_derivative_matrix(N)
            assert eigs.max() == pytest.approx(-2 + 2 * np.cos(np.pi / (N + 1)))
            assert eigs.max() < 0

    @pytest.mark.parametrize("N", list(range(2, 33)))
    def test_spectra_match_dense_solver(self, N):
        L, eigs = second_derivative_matrix(N)
        assert np.allclose(np.sort(eigs), np.linalg.eigvalsh(L), atol=1e-10)
        M, meigs = central_difference_matrix(N)
        got = np.linalg.eigvals(M)
        assert np.allclose(np.sort(meigs.imag), np.sort(got.imag), atol=1e-10)
        assert np.max(np.abs(got.real)) < 1e-10

    def test_central_difference_n3(self):
        _, eigs = central_difference_matrix(3)
        assert np.allclose(sorted(eigs.imag), [-np.sqrt(2), 0.0, np.sqrt(2)], atol=1e-12)

    def test_skew_symmetry_exact(self):
        M, _ = central_difference_matrix(9)
        assert np.all(M + M.T == 0)

    def test_squared_pentadiagonal_form(self):
        N = 8
        M, _ = central_difference_matrix(N)
        M2 = M @ M
        expected = np.diag(-2.0 * np.ones(N)) + np.diag(np.ones(N - 2), 2) + np.diag(np.ones(N - 2), -2)
        expected[0, 0] = expected[-1, -1] = -1.0
        assert np.allclose(M2, expected)
        assert np.all(np.linalg.eigvalsh(M2) <= 1e-12)
        assert np.all(np.linalg.eigvalsh(M2) > -4)


class TestBlockNormBound:
    def test_identity_diagonal(self):
        I = np.eye(3)
        Z = np.zeros((3, 3))
        assert block_norm_bound([[I, Z], [Z, I]]) == pytest.approx(1.0)

    def test_scalar_bidiagonal(self):
        p, q = -1.7, 0.4
        P = np.array([[p]])
        Q = np.array([[-q]])
        Z = np.zeros((1, 1))
        assert block_norm_bound([[P, Q], [Z, P]]) == pytest.approx(abs(p) + abs(q))

    def test_dominates_assembled_norm(self, rng):
        for _ in range(100):
            m = rng.integers(2, 5)
            k = rng.integers(1, 5)
            blocks = [[rng.standard_normal((k, k)) for _ in range(m)] for _ in range(m)]
            bound = block_norm_bound(blocks)
            assert bound >= spectral_norm(assemble_blocks(blocks)) - 1e-12

    def test_ragged_rejected(self):
        with pytest.raises(ValueError):
            block_norm_bound([[np.eye(2), np.eye(2)]])


class TestWeylGapBound:
    def test_scalar_case(self):
        assert weyl_gap_bound([2 * np.eye(3)] * 2, [np.eye(3)] * 2) == pytest.approx(1.0)

    def test_heat_structure(self):
        from qimex.linalg import second_derivative_matrix

        eps, lam, a = 1.0, 0.5, 3.0
        L, eigs = second_derivative_matrix(6)
        P = eps * np.eye(6) - lam * a * L
        Q = eps * np.eye(6)
        got = weyl_gap_bound([P], [Q])
        assert got == pytest.approx(-lam * a * eigs.max(), abs=1e-12)

    def test_sound_against_assembled(self, rng):
        from conftest import random_dissipative_steps

        steps = random_dissipative_steps(rng, dim=4, Nt=4)
        Ps = [P for P, _, _ in steps]
        Qs = [Q for _, Q, _ in steps]
        bound = weyl_gap_bound(Ps, Qs)
        # assemble the Hermitian part of the all-at-once matrix directly
        Nt, d = 4, 4
        H = np.zeros((Nt * d, Nt * d))
        for k in range(Nt):
            H[k * d:(k + 1) * d, k * d:(k + 1) * d] = Ps[Nt - 1 - k]
            if k + 1 < Nt:
                H[k * d:(k + 1) * d, (k + 1) * d:(k + 2) * d] = -Qs[Nt - 1 - k]
        lam_min = np.linalg.eigvalsh((H + H.T) / 2).min()
        assert lam_min >= bound - 1e-12


class TestExponentialChain:
    def test_ordering_chain(self, rng):
        ts = (0.1, 1.0, 5.0)
        for _ in range(20):
            A = rng.standard_normal((5, 5)) * 0.6
            alpha = np.max(np.linalg.eigvals(A).real)
            mu = log_norm(A)
            nrm = spectral_norm(A)
            assert alpha <= mu + 1e-12
            for t in ts:
                et = spectral_norm(matrix_exp(A, t))
                assert np.exp(alpha * t) <= et * (1 + 1e-8)
                assert et <= np.exp(mu * t) * (1 + 1e-8)
                assert np.exp(mu * t) <= np.exp(nrm * t) * (1 + 1e-8)
