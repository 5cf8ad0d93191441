import numpy as np
import pytest

from snsmimo import linalg


def rand_complex(rng, rows, cols):
    return rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))


def rand_hermitian(rng, n):
    a = rand_complex(rng, n, n)
    return 0.5 * (a + a.conj().T)


def rand_psd(rng, n, rank=None):
    r = n if rank is None else rank
    f = rand_complex(rng, n, r)
    return f @ f.conj().T


class TestHermEig:
    def test_identity(self):
        eig = linalg.herm_eig(np.eye(3))
        assert np.allclose(eig.values, [1.0, 1.0, 1.0])

    def test_diagonal(self):
        eig = linalg.herm_eig(np.diag([2.0, -1.0]))
        assert np.allclose(eig.values, [2.0, -1.0])
        # eigenvectors are permuted identity columns (phase-fixed)
        assert np.allclose(np.abs(eig.vectors), [[1.0, 0.0], [0.0, 1.0]])
        assert np.allclose(eig.vectors, [[1.0, 0.0], [0.0, 1.0]])

    @pytest.mark.parametrize("seed", range(5))
    def test_reconstruction(self, seed):
        rng = np.random.default_rng(seed)
        a = rand_hermitian(rng, 4)
        eig = linalg.herm_eig(a)
        rebuilt = (eig.vectors * eig.values) @ eig.vectors.conj().T
        tol = 1e-10 * max(1.0, np.linalg.norm(a))
        assert np.linalg.norm(rebuilt - a) <= tol

    @pytest.mark.parametrize("seed", range(3))
    def test_orthonormal_columns(self, seed):
        rng = np.random.default_rng(seed)
        eig = linalg.herm_eig(rand_hermitian(rng, 6))
        gram = eig.vectors.conj().T @ eig.vectors
        assert np.max(np.abs(gram - np.eye(6))) <= 1e-10

    def test_descending_order(self):
        rng = np.random.default_rng(11)
        eig = linalg.herm_eig(rand_hermitian(rng, 7))
        assert np.all(np.diff(eig.values) <= 0)

    def test_phase_convention(self):
        rng = np.random.default_rng(4)
        eig = linalg.herm_eig(rand_hermitian(rng, 5))
        for j in range(5):
            col = eig.vectors[:, j]
            pivot = col[int(np.argmax(np.abs(col)))]
            assert abs(pivot.imag) <= 1e-12
            assert pivot.real >= 0.0

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            linalg.herm_eig(np.ones((2, 3)))

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            linalg.herm_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            linalg.herm_eig(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestSvd:
    def test_identity(self):
        _, s, _ = linalg.svd(np.eye(2))
        assert np.allclose(s, [1.0, 1.0])

    def test_rank_one(self):
        rng = np.random.default_rng(0)
        u = rand_complex(rng, 4, 1)
        v = rand_complex(rng, 3, 1)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        _, s, _ = linalg.svd(u @ v.conj().T)
        assert abs(s[0] - 1.0) <= 1e-12
        assert np.all(s[1:] <= 1e-12)

    @pytest.mark.parametrize("shape", [(3, 5), (5, 3), (4, 4)])
    def test_reconstruction(self, shape):
        rng = np.random.default_rng(sum(shape))
        a = rand_complex(rng, *shape)
        u, s, v = linalg.svd(a)
        k = min(shape)
        rebuilt = (u[:, :k] * s) @ v[:, :k].conj().T
        assert np.linalg.norm(rebuilt - a) <= 1e-10 * max(1.0, np.linalg.norm(a))

    def test_null_space_columns(self):
        rng = np.random.default_rng(9)
        a = rand_complex(rng, 3, 5)
        _, s, v = linalg.svd(a)
        rank = linalg.numerical_rank(s)
        assert rank == 3
        for j in range(rank, 5):
            assert np.linalg.norm(a @ v[:, j]) <= 1e-10

    def test_orthonormal_factors(self):
        rng = np.random.default_rng(21)
        a = rand_complex(rng, 4, 6)
        u, _, v = linalg.svd(a)
        assert np.max(np.abs(u.conj().T @ u - np.eye(4))) <= 1e-10
        assert np.max(np.abs(v.conj().T @ v - np.eye(6))) <= 1e-10

    def test_agrees_with_herm_eig_on_psd(self):
        rng = np.random.default_rng(3)
        x = rand_psd(rng, 5)
        _, s, _ = linalg.svd(x)
        eig = linalg.herm_eig(x)
        assert np.max(np.abs(s - eig.values)) <= 1e-9 * max(1.0, eig.values[0])


class TestNumericalRank:
    def test_relative_threshold(self):
        assert linalg.numerical_rank(np.array([1.0, 1e-9, 1e-11])) == 2
        assert linalg.numerical_rank(np.array([1.0, 2e-10])) == 2
        assert linalg.numerical_rank(np.array([1.0, 0.5e-10])) == 1

    def test_zero_matrix(self):
        assert linalg.numerical_rank(np.array([0.0, 0.0])) == 0
        assert linalg.numerical_rank(np.array([])) == 0


class TestLogdetPsd:
    def test_identity(self):
        assert linalg.logdet_psd(np.eye(4)) == pytest.approx(0.0, abs=1e-12)

    def test_diagonal(self):
        assert linalg.logdet_psd(np.diag([2.0, 2.0])) == pytest.approx(2.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_eigenvalue_product(self, seed):
        rng = np.random.default_rng(seed)
        a = np.eye(5) + rand_psd(rng, 5)
        expect = float(np.sum(np.log2(np.linalg.eigvalsh(0.5 * (a + a.conj().T)))))
        assert linalg.logdet_psd(a) == pytest.approx(expect, abs=1e-9)

    @pytest.mark.parametrize("seed", range(4))
    def test_sylvester_identity(self, seed):
        rng = np.random.default_rng(100 + seed)
        a = rand_complex(rng, 3, 6)
        lhs = linalg.logdet_psd(np.eye(3) + a @ a.conj().T)
        rhs = linalg.logdet_psd(np.eye(6) + a.conj().T @ a)
        assert lhs == pytest.approx(rhs, abs=1e-9)

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            linalg.logdet_psd(np.diag([1.0, -0.5]))

    def test_rejects_singular(self):
        with pytest.raises(ValueError):
            linalg.logdet_psd(np.diag([1.0, 0.0]))


class TestLogdetEyePlusPsd:
    def test_psd_clamp_window(self):
        # tiny negative eigenvalues inside the clamp window are treated as zero
        val = linalg.logdet_eye_plus_psd(np.diag([1.0, -1e-10]))
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_rejects_clearly_indefinite(self):
        # indefinite enough that I + P is not positive definite
        with pytest.raises(ValueError):
            linalg.logdet_eye_plus_psd(np.diag([1.0, -2.0]))


class TestPsdSqrtFactor:
    def test_zero_matrix(self):
        f = linalg.psd_sqrt_factor(np.zeros((3, 3)), 2)
        assert f.shape == (3, 2)
        assert np.all(f == 0)

    def test_diagonal_closed_form(self):
        f = linalg.psd_sqrt_factor(np.diag([4.0, 0.0]), 1)
        assert f.shape == (2, 1)
        assert np.allclose(f[:, 0], [2.0, 0.0])

    @pytest.mark.parametrize("seed", range(4))
    def test_rank_two_reconstruction(self, seed):
        rng = np.random.default_rng(seed)
        x = rand_psd(rng, 5, rank=2)
        f = linalg.psd_sqrt_factor(x, 2)
        assert np.linalg.norm(f @ f.conj().T - x) <= 1e-9 * max(1.0, np.linalg.norm(x))

    def test_best_rank_r_truncation(self):
        rng = np.random.default_rng(8)
        x = rand_psd(rng, 5)
        f = linalg.psd_sqrt_factor(x, 2)
        eig = linalg.herm_eig(x)
        best = (eig.vectors[:, :2] * eig.values[:2]) @ eig.vectors[:, :2].conj().T
        assert np.linalg.norm(f @ f.conj().T - best) <= 1e-9 * max(1.0, np.linalg.norm(x))

    def test_columns_ordered_by_eigenvalue(self):
        x = np.diag([1.0, 9.0, 4.0])
        f = linalg.psd_sqrt_factor(x, 3)
        norms = np.linalg.norm(f, axis=0)
        assert np.allclose(norms, [3.0, 2.0, 1.0])

    def test_pads_when_rank_bound_exceeds_size(self):
        f = linalg.psd_sqrt_factor(np.diag([1.0]), 3)
        assert f.shape == (1, 3)

    def test_rejects_nonpositive_rank(self):
        with pytest.raises(ValueError):
            linalg.psd_sqrt_factor(np.eye(2), 0)

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            linalg.psd_sqrt_factor(np.diag([1.0, -0.5]), 1)
