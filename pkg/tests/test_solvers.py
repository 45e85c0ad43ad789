import numpy as np
import pytest

from nnrank.experiments import planted_decomposition, sample_rng, uniform_tensor
from nnrank.rank_oracles import paper_222_tensor
from nnrank.solvers import (SolverConfig, als_solve_real, kkt_residuals,
                            nncp_solve, tangent_vectors)
from nnrank.tensor import (Decomposition, RankOneTerm, Tensor, evaluate,
                           match_decompositions)


def planted(shape, r, seed, mode="nonnegative"):
    return planted_decomposition(shape, r, np.random.default_rng(seed), mode)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"restarts": 0}, {"max_outer_iters": 0},
                                    {"inner_tol": 0.0}, {"stall_tol": -1.0},
                                    {"feas_tol": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_echo(self):
        d = SolverConfig(seed=5).to_dict()
        assert d["seed"] == 5 and d["restarts"] == 10


class TestNncp:
    def test_planted_rank2(self):
        D = planted((3, 3, 3), 2, 1)
        A = evaluate(D)
        res = nncp_solve(A, 2, SolverConfig(restarts=20))
        assert min(res.restart_residuals) <= 1e-8 * A.norm()

    def test_rank_one_recovery(self):
        D = planted((3, 4, 2), 1, 2)
        A = evaluate(D)
        res = nncp_solve(A, 1)
        assert res.residual <= 1e-10
        assert match_decompositions(res.best, D, 1e-8).matched

    def test_ex222_tensor_r3_floor(self):
        res = nncp_solve(paper_222_tensor(), 3, SolverConfig(restarts=30),
                         diagnostics=False)
        assert res.residual >= 0.1

    def test_invariants(self):
        A = uniform_tensor((3, 3, 3), sample_rng(3, 0))
        res = nncp_solve(A, 2)
        assert res.residual == pytest.approx(min(res.restart_residuals),
                                             abs=1e-12)
        assert res.restart_residuals[res.best_index] == res.residual
        assert all(np.all(f >= 0) for f in res.best.factor_matrices())
        direct = np.linalg.norm(A.data - evaluate(res.best).data)
        assert res.residual == pytest.approx(direct, abs=1e-12)
        assert res.input_norm == pytest.approx(A.norm())

    def test_deterministic(self):
        A = uniform_tensor((3, 3, 2), sample_rng(4, 0))
        a = nncp_solve(A, 2, SolverConfig(seed=9))
        b = nncp_solve(A, 2, SolverConfig(seed=9))
        assert a.restart_residuals == b.restart_residuals
        assert a.best == b.best

    def test_errors(self):
        A = paper_222_tensor()
        with pytest.raises(ValueError):
            nncp_solve(A, 0)
        with pytest.raises(ValueError):
            nncp_solve(Tensor(A.shape, A.data, False), 2)

    def test_zero_tensor(self):
        res = nncp_solve(Tensor.zeros((2, 2, 2)), 2)
        assert res.residual == 0.0

    def test_planted_recovery_below_dd_bound(self):
        # (3,3,3) with r = 3 satisfies the Domanov-De Lathauwer inequality
        hits = 0
        for seed in range(20):
            D = planted((3, 3, 3), 3, 100 + seed)
            A = evaluate(D)
            res = nncp_solve(A, 3, SolverConfig(restarts=20, seed=seed),
                             diagnostics=False)
            if (res.residual <= 1e-8 * A.norm()
                    and match_decompositions(res.best, D, 1e-5).matched):
                hits += 1
        assert hits >= 18

    def test_membership_monotone(self):
        D = planted((3, 3, 3), 2, 7)
        A = evaluate(D)
        r2 = nncp_solve(A, 2, SolverConfig(restarts=20), diagnostics=False)
        assert r2.residual <= 1e-8 * A.norm()
        extra = planted((3, 3, 3), 1, 8)
        B = evaluate(Decomposition(D.shape, D.terms + extra.terms, D.mode))
        r3 = nncp_solve(B, 3, SolverConfig(restarts=20), diagnostics=False)
        assert r3.residual <= 1e-8 * B.norm()


class TestRealAls:
    def test_ex222_tensor_real_rank_2(self):
        res = als_solve_real(paper_222_tensor(), 2)
        assert res.residual <= 1e-8

    def test_planted_real_rank3(self):
        D = planted((3, 3, 3), 3, 11, "real")
        A = evaluate(D)
        res = als_solve_real(A, 3, SolverConfig(restarts=20))
        assert res.residual <= 1e-8 * max(1.0, A.norm())

    def test_enough_terms_fit_anything(self, rng):
        A = Tensor.from_array(rng.standard_normal((2, 3, 4)))
        res = als_solve_real(A, 6)
        assert res.residual <= 1e-8


class TestKkt:
    def test_exact_fit_all_zero(self):
        D = planted((3, 3, 3), 2, 5)
        rep = kkt_residuals(evaluate(D), D)
        assert rep.max() == 0.0
        assert rep.max_inequality_violation == 0.0

    def test_random_positive_r2(self):
        passed = 0
        for i in range(10):
            A = uniform_tensor((3, 3, 3), sample_rng(11, i))
            rep = nncp_solve(A, 2, SolverConfig(seed=i)).kkt
            passed += (rep.max_inequality_violation <= 1e-6
                       and rep.max_support_equality_residual <= 1e-6
                       and rep.tangent_orthogonality <= 1e-6)
        assert passed >= 9

    def test_perturbed_optimum(self):
        A = uniform_tensor((3, 3, 3), sample_rng(12, 0))
        best = nncp_solve(A, 2).best
        mats = best.factor_matrices()
        mats[0] = mats[0].copy()
        mats[0][0, 0] += 0.1
        bad = Decomposition.from_factor_matrices(mats, "nonnegative")
        assert kkt_residuals(A, bad).max() > 1e-3

    def test_gauge_free(self):
        A = uniform_tensor((3, 3, 3), sample_rng(13, 0))
        best = nncp_solve(A, 2).best
        t = best.terms[0]
        scaled = Decomposition(best.shape, (RankOneTerm(
            (4 * t.factors[0], t.factors[1] / 2, t.factors[2] / 2)),)
            + best.terms[1:], best.mode)
        a, b = kkt_residuals(A, best), kkt_residuals(A, scaled)
        assert b.max() == pytest.approx(a.max(), abs=1e-12)

    def test_real_mode_rejected(self):
        D = planted((2, 2, 2), 1, 0, "real")
        with pytest.raises(ValueError):
            kkt_residuals(evaluate(D), D)

    def test_tangent_vectors_count(self):
        D = planted((2, 3, 4), 2, 0)
        T = tangent_vectors(D, restrict=False)
        assert T.shape == (24, 2 * 9)
