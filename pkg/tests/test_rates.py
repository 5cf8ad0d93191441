import numpy as np
import pytest

from snsmimo.channel import ChannelSet, SystemConfig, generate_channel
from snsmimo.nullspace import successive_null_bases
from snsmimo.rates import (
    CovarianceSolution,
    common_rate_at_user,
    effective_covariances,
    evaluate,
    private_rate,
)

SIGMA2 = 10.0 ** -3.5


def fig3_setup(trial=0, order=(0, 1, 2), eta=()):
    cfg = SystemConfig(
        n_tx=10, m_rx=(2, 4, 4), sigma2=SIGMA2, p_t=100.0, dist=(50.0,) * 3, eta=eta
    )
    ch = generate_channel(cfg, trial)
    bases = successive_null_bases(ch, order)
    return cfg, ch, bases


def rand_psd(rng, n, rank, trace):
    f = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    p = f @ f.conj().T
    return p * (trace / np.trace(p).real)


def random_solution(rng, cfg, bases, power=None):
    power = cfg.p_t if power is None else power
    shares = rng.dirichlet(np.ones(cfg.n_users + 1)) * power
    xs = []
    for i in range(cfg.n_users):
        m_i = cfg.m_rx[bases.order[i]]
        xs.append(rand_psd(rng, bases.dim(i), m_i, shares[i]))
    qc = rand_psd(rng, bases.n_tx, cfg.common_dim, shares[-1])
    return CovarianceSolution(order=bases.order, mode="relaxed", Qc=qc, X=tuple(xs))


def direct_inverse_rate(h, q_signal, q_interf_sum, sigma2):
    # reference evaluation with the explicit matrix inverse
    m = h.shape[0]
    denom = sigma2 * np.eye(m) + h @ q_interf_sum @ h.conj().T
    num = h @ q_signal @ h.conj().T
    sign, ld = np.linalg.slogdet(np.eye(m) + num @ np.linalg.inv(denom))
    return ld / np.log(2.0)


class TestEffectiveCovariances:
    def test_zero_blocks(self):
        cfg, ch, bases = fig3_setup()
        sol = CovarianceSolution(
            order=bases.order,
            mode="relaxed",
            Qc=np.zeros((10, 10)),
            X=tuple(np.zeros((bases.dim(i),) * 2) for i in range(3)),
        )
        qs, qc = effective_covariances(sol, bases)
        assert all(np.all(q == 0) for q in qs)
        assert np.all(qc == 0)

    def test_first_position_passthrough(self):
        # identity basis at position 0 leaves its block untouched
        rng = np.random.default_rng(0)
        cfg, ch, bases = fig3_setup()
        sol = random_solution(rng, cfg, bases)
        qs, _ = effective_covariances(sol, bases)
        assert np.allclose(qs[0], sol.X[0])

    def test_traces_preserved(self):
        rng = np.random.default_rng(1)
        cfg, ch, bases = fig3_setup(order=(2, 0, 1))
        sol = random_solution(rng, cfg, bases)
        qs, _ = effective_covariances(sol, bases)
        for q, x in zip(qs, sol.X):
            assert np.trace(q).real == pytest.approx(np.trace(x).real, abs=1e-9)

    def test_reformulated_rank_caps(self):
        rng = np.random.default_rng(2)
        cfg, ch, bases = fig3_setup()
        u_list, x_list = [], []
        for i in range(3):
            m_i = cfg.m_rx[bases.order[i]]
            raw = rng.standard_normal((bases.dim(i), m_i)) + 1j * rng.standard_normal(
                (bases.dim(i), m_i)
            )
            u, _ = np.linalg.qr(raw)
            u_list.append(u)
            x_list.append(rand_psd(rng, m_i, m_i, 10.0))
        uc_raw = rng.standard_normal((10, 2)) + 1j * rng.standard_normal((10, 2))
        uc, _ = np.linalg.qr(uc_raw)
        core = rand_psd(rng, 2, 2, 10.0)
        sol = CovarianceSolution(
            order=bases.order,
            mode="reformulated",
            Qc=uc @ core @ uc.conj().T,
            X=tuple(x_list),
            Uc=uc,
            U=tuple(u_list),
        )
        qs, qc = effective_covariances(sol, bases)
        for q, m_i in zip(qs, (2, 4, 4)):
            evals = np.linalg.eigvalsh(q)
            assert np.sum(evals > 1e-10 * max(evals.max(), 1e-30)) <= m_i
        evc = np.linalg.eigvalsh(qc)
        assert np.sum(evc > 1e-10 * max(evc.max(), 1e-30)) <= 2

    def test_shape_mismatch_rejected(self):
        cfg, ch, bases = fig3_setup()
        sol = CovarianceSolution(
            order=bases.order,
            mode="relaxed",
            Qc=np.zeros((10, 10)),
            X=tuple(np.zeros((3, 3)) for _ in range(3)),
        )
        with pytest.raises(ValueError):
            effective_covariances(sol, bases)


class TestPrivateRate:
    def test_zero_signal(self):
        cfg, ch, bases = fig3_setup()
        h_pos = [ch.H[u] for u in bases.order]
        qs = [np.zeros((10, 10))] * 3
        assert private_rate(1, h_pos, qs, SIGMA2) == 0.0

    def test_first_position_interference_free(self):
        rng = np.random.default_rng(3)
        cfg, ch, bases = fig3_setup()
        h_pos = [ch.H[u] for u in bases.order]
        q1 = rand_psd(rng, 10, 2, 40.0)
        qs = [q1, np.zeros((10, 10)), np.zeros((10, 10))]
        got = private_rate(0, h_pos, qs, SIGMA2)
        h = h_pos[0]
        sign, ld = np.linalg.slogdet(np.eye(2) + h @ q1 @ h.conj().T / SIGMA2)
        assert got == pytest.approx(ld / np.log(2.0), abs=1e-10)

    def test_scalar_closed_form(self):
        h = np.array([[0.3 - 0.4j]])
        q = np.array([[5.0]])
        got = private_rate(0, [h], [q], 2.0)
        assert got == pytest.approx(np.log2(1 + 5.0 * 0.25 / 2.0), abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_difference_form_matches_direct_inverse(self, seed):
        rng = np.random.default_rng(seed)
        cfg, ch, bases = fig3_setup(trial=seed)
        sol = random_solution(rng, cfg, bases)
        qs, qc = effective_covariances(sol, bases)
        h_pos = [ch.H[u] for u in bases.order]
        for i in range(3):
            got = private_rate(i, h_pos, qs, SIGMA2)
            interf = sum(qs[:i]) if i else np.zeros((10, 10))
            want = direct_inverse_rate(h_pos[i], qs[i], interf, SIGMA2)
            assert got == pytest.approx(want, abs=1e-8)
            got_c = common_rate_at_user(i, h_pos, qc, qs, SIGMA2)
            want_c = direct_inverse_rate(h_pos[i], qc, sum(qs[: i + 1]), SIGMA2)
            assert got_c == pytest.approx(want_c, abs=1e-8)

    def test_rejects_bad_noise(self):
        cfg, ch, bases = fig3_setup()
        h_pos = [ch.H[u] for u in bases.order]
        with pytest.raises(ValueError):
            private_rate(0, h_pos, [np.zeros((10, 10))] * 3, 0.0)

    def test_monotone_in_own_covariance(self):
        # adding any rank-1 term to the first position's covariance cannot
        # decrease its interference-free rate
        rng = np.random.default_rng(11)
        cfg, ch, bases = fig3_setup()
        h_pos = [ch.H[u] for u in bases.order]
        q1 = rand_psd(rng, 10, 3, 30.0)
        qs = [q1, np.zeros((10, 10)), np.zeros((10, 10))]
        base = private_rate(0, h_pos, qs, SIGMA2)
        for _ in range(10):
            v = rng.standard_normal(10) + 1j * rng.standard_normal(10)
            bumped = [q1 + np.outer(v, v.conj()), qs[1], qs[2]]
            assert private_rate(0, h_pos, bumped, SIGMA2) >= base - 1e-10


class TestCommonRate:
    def test_zero_common_covariance(self):
        rng = np.random.default_rng(4)
        cfg, ch, bases = fig3_setup()
        sol = random_solution(rng, cfg, bases)
        qs, _ = effective_covariances(sol, bases)
        h_pos = [ch.H[u] for u in bases.order]
        assert common_rate_at_user(1, h_pos, np.zeros((10, 10)), qs, SIGMA2) == 0.0

    def test_interference_free_form(self):
        rng = np.random.default_rng(5)
        cfg, ch, bases = fig3_setup()
        h_pos = [ch.H[u] for u in bases.order]
        qc = rand_psd(rng, 10, 2, 50.0)
        qs = [np.zeros((10, 10))] * 3
        got = common_rate_at_user(2, h_pos, qc, qs, SIGMA2)
        h = h_pos[2]
        sign, ld = np.linalg.slogdet(np.eye(4) + h @ qc @ h.conj().T / SIGMA2)
        assert got == pytest.approx(ld / np.log(2.0), abs=1e-10)

    def test_scalar_closed_form(self):
        h = np.array([[1.0 + 1.0j]])
        qc = np.array([[3.0]])
        q1 = np.array([[2.0]])
        got = common_rate_at_user(0, [h], qc, [q1], 1.5)
        g = 2.0
        assert got == pytest.approx(np.log2(1 + 3.0 * g / (1.5 + 2.0 * g)), abs=1e-12)


class TestEvaluate:
    def test_all_zero_solution(self):
        cfg, ch, bases = fig3_setup()
        sol = CovarianceSolution(
            order=bases.order,
            mode="relaxed",
            Qc=np.zeros((10, 10)),
            X=tuple(np.zeros((bases.dim(i),) * 2) for i in range(3)),
        )
        rep = evaluate(sol, ch, bases, cfg)
        assert rep.R_c == 0.0 and rep.R_wsr == 0.0 and rep.R_sum == 0.0
        assert np.all(rep.R_k == 0) and np.all(rep.R_kc == 0)

    def test_common_rate_is_min(self):
        rng = np.random.default_rng(6)
        cfg, ch, bases = fig3_setup(trial=2)
        sol = random_solution(rng, cfg, bases)
        rep = evaluate(sol, ch, bases, cfg)
        assert rep.R_c == pytest.approx(np.min(rep.R_kc), abs=0.0)
        assert np.all(rep.R_k >= 0) and np.all(rep.R_kc >= 0)

    def test_equal_weights_identity(self):
        rng = np.random.default_rng(7)
        cfg, ch, bases = fig3_setup(trial=3)
        sol = random_solution(rng, cfg, bases)
        rep = evaluate(sol, ch, bases, cfg)
        assert rep.R_sum == pytest.approx(3.0 * rep.R_wsr, rel=1e-12)

    def test_degenerate_weights(self):
        rng = np.random.default_rng(8)
        cfg, ch, bases = fig3_setup(trial=4, eta=(1.0, 0.0, 0.0))
        sol = random_solution(rng, cfg, bases)
        rep = evaluate(sol, ch, bases, cfg)
        assert rep.R_wsr == pytest.approx(rep.R_c + rep.R_k[0], rel=1e-12)

    def test_relabeling_invariance(self):
        # permuting user labels together with weights and ordering leaves the
        # weighted sum rate unchanged
        rng = np.random.default_rng(9)
        eta = (0.5, 0.3, 0.2)
        cfg = SystemConfig(
            n_tx=10, m_rx=(2, 4, 4), sigma2=SIGMA2, p_t=100.0, dist=(50.0,) * 3, eta=eta
        )
        ch = generate_channel(cfg, 5)
        order = (1, 2, 0)
        bases = successive_null_bases(ch, order)
        sol = random_solution(rng, cfg, bases)
        rep = evaluate(sol, ch, bases, cfg)

        perm = (2, 0, 1)  # new label of each old user
        inv = tuple(perm.index(u) for u in range(3))
        cfg2 = SystemConfig(
            n_tx=10,
            m_rx=tuple(cfg.m_rx[inv[u]] for u in range(3)),
            sigma2=SIGMA2,
            p_t=100.0,
            dist=tuple(cfg.dist[inv[u]] for u in range(3)),
            eta=tuple(eta[inv[u]] for u in range(3)),
        )
        ch2 = ChannelSet(H=tuple(ch.H[inv[u]] for u in range(3)), L=cfg2.path_loss)
        order2 = tuple(perm[u] for u in order)
        bases2 = successive_null_bases(ch2, order2)
        sol2 = CovarianceSolution(order=order2, mode="relaxed", Qc=sol.Qc, X=sol.X)
        rep2 = evaluate(sol2, ch2, bases2, cfg2)
        assert rep2.R_wsr == pytest.approx(rep.R_wsr, rel=1e-10)
        assert rep2.R_sum == pytest.approx(rep.R_sum, rel=1e-10)

    def test_power_violation_rejected(self):
        rng = np.random.default_rng(10)
        cfg, ch, bases = fig3_setup()
        sol = random_solution(rng, cfg, bases, power=2.0 * cfg.p_t)
        with pytest.raises(ValueError, match="budget"):
            evaluate(sol, ch, bases, cfg)

    def test_order_mismatch_rejected(self):
        rng = np.random.default_rng(12)
        cfg, ch, bases = fig3_setup()
        sol = random_solution(rng, cfg, bases)
        other = successive_null_bases(ch, (2, 1, 0))
        with pytest.raises(ValueError):
            evaluate(sol, ch, other, cfg)
