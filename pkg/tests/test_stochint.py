import numpy as np
import pytest
from scipy import integrate, stats

from cylfbm.cylindrical import Embedding
from cylfbm.fbm import TimeGrid, covariance
from cylfbm.fracops import kstar
from cylfbm.functions import SampledFunction, l2_inner
from cylfbm.harness import mc_compare
from cylfbm.stochint import (OperatorIntegrand, covariance_q_psi, domination_check, driving_noise, gamma_adjoint,
                             gamma_operator, hs_test, mean_square_continuity, semigroup_norm_sq, simulate)

LAM = np.array([1.0, 4.0, 9.0])
Q = np.array([1.0, 0.7, 0.5])


def decay_variance_oracle(lam, H, T):
    """Var int_0^T e^{-lam s} db(s) after integration by parts: only R(s, r) enters."""
    f = lambda s: np.exp(-lam * s)
    df = lambda s: -lam * np.exp(-lam * s)
    R = lambda s, r: covariance(s, r, H)
    a = f(T) ** 2 * T ** (2 * H)
    b = integrate.quad(lambda s: df(s) * R(s, T), 0, T, epsabs=1e-13)[0]
    c = integrate.dblquad(lambda r, s: df(s) * df(r) * R(s, r), 0, T, 0, T, epsabs=1e-12)[0]
    return a - 2 * f(T) * b + c


@pytest.fixture(scope="module")
def fine():
    return TimeGrid(1.0, 2048)


class TestIntegrand:
    def test_exactly_one_rule(self):
        g = TimeGrid(1.0, 4)
        with pytest.raises(ValueError):
            OperatorIntegrand(g, 2, 2)
        with pytest.raises(ValueError):
            OperatorIntegrand(g, 2, 2, rule=lambda t: t, decay=np.ones(2))

    def test_negative_decay(self):
        with pytest.raises(ValueError):
            OperatorIntegrand.diagonal_semigroup(TimeGrid(1.0, 4), [-1.0])

    def test_from_matrices_interpolates(self):
        g = TimeGrid(1.0, 2)
        psi = OperatorIntegrand.from_matrices(g, [np.eye(2) * v for v in (0.0, 1.0, 3.0)])
        np.testing.assert_allclose(psi.matrices([0.25, 0.75])[:, 0, 0], [0.5, 2.0])

    def test_support_must_be_node(self):
        with pytest.raises(ValueError):
            OperatorIntegrand.diagonal_semigroup(TimeGrid(1.0, 4), LAM).restricted(0.3)


class TestSemigroupNorm:
    @pytest.mark.parametrize("H", [0.2, 0.3, 0.7, 0.85])
    @pytest.mark.parametrize("lam,T", [(1.0, 1.0), (4.0, 0.5), (25.0, 1.0)])
    def test_against_oracle(self, H, lam, T):
        assert semigroup_norm_sq(lam, H, T) == pytest.approx(decay_variance_oracle(lam, H, T), rel=1e-5)

    def test_degenerate(self, hurst):
        assert semigroup_norm_sq(0.0, hurst, 0.7) == pytest.approx(0.7 ** (2 * hurst), rel=1e-15)
        assert semigroup_norm_sq(3.0, hurst, 0.0) == 0.0


class TestGammaAdjoint:
    def test_zero(self, hurst):
        psi = OperatorIntegrand.constant(TimeGrid(1.0, 64), np.zeros((2, 3)))
        assert np.all(gamma_adjoint(psi, [1.0, 2.0], hurst).values == 0)

    def test_rank_one(self, hurst, fine):
        x, y = np.array([1.0, -2.0]), np.array([0.5, 0.0, 3.0])
        phi = lambda t: np.cos(2 * t)
        psi = OperatorIntegrand.from_callable(fine, lambda t: phi(t)[:, None, None] * np.outer(x, y)[None], 2, 3)
        emb = Embedding.diagonal([1.0, 2.0, 0.5])
        v = np.array([0.3, 0.7])
        got = gamma_adjoint(psi, v, hurst, emb)
        scalar = kstar(SampledFunction.from_callable(fine, phi), hurst).values[:, 0]
        ref = np.outer(scalar, (x @ v) * (y * emb.weights))
        np.testing.assert_allclose(got.values, ref, rtol=1e-12, atol=1e-12)

    def test_diagonal_semigroup(self, hurst, fine):
        psi = OperatorIntegrand.diagonal_semigroup(fine, LAM)
        emb = Embedding.diagonal(Q)
        for k in range(3):
            got = gamma_adjoint(psi, np.eye(3)[k], hurst, emb)
            ref = kstar(SampledFunction.from_callable(fine, lambda t: np.exp(-LAM[k] * t)), hurst).values[:, 0]
            np.testing.assert_allclose(got.values[:, k], Q[k] * ref, rtol=1e-12, atol=1e-12)
            assert np.all(np.delete(got.values, k, axis=1) == 0)


class TestCovarianceQPsi:
    def test_zero(self, hurst):
        psi = OperatorIntegrand.constant(TimeGrid(1.0, 32), np.zeros((2, 2)))
        assert np.all(covariance_q_psi(psi, hurst) == 0)

    def test_diagonal(self, hurst, fine):
        Qm = covariance_q_psi(OperatorIntegrand.diagonal_semigroup(fine, LAM), hurst, Embedding.diagonal(Q))
        np.testing.assert_allclose(np.diag(Qm), Q**2 * [semigroup_norm_sq(l, hurst, 1.0) for l in LAM], rtol=1e-5)
        assert np.all(Qm[~np.eye(3, dtype=bool)] == 0)

    def test_gram_factorization(self, hurst):
        g = TimeGrid(1.0, 256)
        psi = OperatorIntegrand.from_callable(g, lambda t: np.stack([np.array([[1 + s, s], [0.0, np.exp(-s)]]) for s in t]), 2, 2)
        G = gamma_operator(psi, hurst)
        ref = np.array([[l2_inner(a, b) for b in G.images] for a in G.images])
        np.testing.assert_allclose(G.gram, ref, rtol=1e-13)
        np.testing.assert_allclose(covariance_q_psi(psi, hurst), ref, rtol=1e-13)


class TestHsTest:
    @pytest.mark.parametrize("H,verdict", [(0.3, "integrable"), (0.2, "not integrable")])
    def test_heat_semigroup(self, H, verdict, fine):
        lam = np.arange(1, 513, dtype=float) ** 2
        rep = hs_test(OperatorIntegrand.diagonal_semigroup(fine, lam), H)
        assert rep.verdict == verdict
        assert rep.tail.exponent == pytest.approx(4 * H, abs=0.02)
        assert np.all(np.diff(rep.partial_sums) >= 0)

    def test_zero(self, hurst):
        rep = hs_test(OperatorIntegrand.constant(TimeGrid(1.0, 32), np.zeros((3, 3))), hurst)
        assert rep.verdict == "integrable" and rep.tail.total == 0

    def test_general_path_matches_fast_path(self, hurst):
        g = TimeGrid(1.0, 1024)
        fast = hs_test(OperatorIntegrand.diagonal_semigroup(g, LAM), hurst)
        slow = hs_test(OperatorIntegrand.from_callable(
            g, lambda t: np.stack([np.diag(np.exp(-LAM * s)) for s in t]), 3, 3), hurst)
        np.testing.assert_allclose(slow.tail.terms, fast.tail.terms, rtol=1e-4)


class TestSimulate:
    def test_zero(self):
        g = TimeGrid(1.0, 8)
        psi = OperatorIntegrand.constant(g, np.zeros((2, 2)))
        B = driving_noise(Embedding.diagonal([1.0, 1.0]), 0.3, g, 50, 1)
        assert np.all(simulate(psi, B, 1.0) == 0)

    def test_constant_identity_telescopes(self):
        g = TimeGrid(1.0, 8)
        B = driving_noise(Embedding.diagonal(Q), 0.3, g, 50, 1)
        S = simulate(OperatorIntegrand.constant(g, np.eye(3)), B, 0.5)
        for k in range(3):
            np.testing.assert_allclose(S[:, k], Q[k] * B.component(k).at(0.5), rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("H", [0.3, 0.75])
    def test_covariance(self, H, fine):
        emb = Embedding.diagonal(Q)
        coarse = TimeGrid(1.0, 16)
        B = driving_noise(emb, H, coarse, 100_000, 5)
        for t in (0.5, 1.0):
            S = simulate(OperatorIntegrand.diagonal_semigroup(coarse, LAM), B, t)
            Qm = covariance_q_psi(OperatorIntegrand.diagonal_semigroup(fine, LAM).restricted(t), H, emb)
            for i in range(3):
                for j in range(i, 3):
                    assert mc_compare(S[:, i] * S[:, j], Qm[i, j]).passed, (t, i, j)

    @pytest.mark.parametrize("H", [0.3, 0.75])
    def test_functional_isometry_and_gaussianity(self, H, fine, rng):
        emb = Embedding.sheet([1.0, 2.0, 0.5], [(0.0, 0.5), (0.5, 1.0), (0.25, 0.75)], 5)
        A = rng.normal(size=(2, 5))
        coarse = TimeGrid(1.0, 16)
        B = driving_noise(emb, H, coarse, 100_000, 9)
        S = simulate(OperatorIntegrand.constant(coarse, A), B, 1.0)
        v = rng.normal(size=2)
        g = gamma_adjoint(OperatorIntegrand.constant(fine, A), v, H, emb)
        assert mc_compare(S @ v, l2_inner(g, g), statistic="variance").passed
        assert stats.normaltest((S @ v)[:10_000]).pvalue > 0.01


class TestDomination:
    def test_half(self, hurst, fine):
        psi = OperatorIntegrand.diagonal_semigroup(fine, LAM)
        rep = domination_check(psi * 0.5, psi, hurst)
        np.testing.assert_allclose(rep.ratios, 0.5, rtol=1e-12)
        assert rep.holds

    def test_zero(self, hurst, fine):
        psi = OperatorIntegrand.diagonal_semigroup(fine, LAM)
        rep = domination_check(OperatorIntegrand.constant(fine, np.zeros((3, 3))), psi, hurst)
        assert rep.max_ratio == 0.0 and rep.holds

    @pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
    def test_restriction(self, hurst, fine, t):
        psi = OperatorIntegrand.diagonal_semigroup(fine, LAM)
        rep = domination_check(psi.restricted(t), psi, hurst, functionals=[[1.0, 1.0, 1.0]])
        print(f"restriction ratio c_t at H={hurst}, t={t}: {rep.max_ratio:.4f}")
        assert np.isfinite(rep.max_ratio) and rep.holds
        if hurst > 0.5:
            # for H > 1/2 the |M| norm is monotone under restriction of nonnegative integrands
            assert rep.max_ratio <= 1 + 1e-9


class TestContinuity:
    def test_zero_dt_and_zero_integrand(self, hurst):
        g = TimeGrid(1.0, 256)
        psi = OperatorIntegrand.diagonal_semigroup(g, LAM)
        rep = mean_square_continuity(psi, hurst, 0.5, [0.0, 0.125], [1.0, 0.0, 0.0])
        assert rep.errors[0] == 0 and rep.errors[1] > 0
        zero = OperatorIntegrand.constant(g, np.zeros((3, 3)))
        assert np.all(mean_square_continuity(zero, hurst, 0.5, [0.25, 0.125], [1.0, 0.0, 0.0]).errors == 0)

    @pytest.mark.parametrize("H", [0.3, 0.75])
    def test_rate(self, H, fine):
        psi = OperatorIntegrand.diagonal_semigroup(fine, LAM)
        dts = 0.25 * 0.5 ** np.arange(6)
        rep = mean_square_continuity(psi, H, 0.5, dts, [1.0, 0.5, 0.0])
        print(f"mean-square continuity H={H}: rate {rep.rate:.3f} (dt^(2H) = {2 * H})")
        assert rep.monotone
        assert rep.rate == pytest.approx(2 * H, abs=0.1)
