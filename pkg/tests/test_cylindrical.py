import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cylfbm.cylindrical import (CylFbm, Embedding, EmbeddingKind, apply, covariance_operator, is_genuine,
                                power_weights, sine_basis, spatial_grid)
from cylfbm.fbm import TimeGrid, covariance
from cylfbm.harness import mc_compare

SETS = [(0.0, 0.5), (0.5, 1.0), (0.25, 0.75)]


@pytest.fixture(scope="module")
def embeddings():
    return {
        "diagonal": Embedding.diagonal([1.0, 0.5, 0.25, 2.0]),
        "sheet": Embedding.sheet([1.0, 2.0, 0.5], SETS, 9),
        "weighted": Embedding.weighted_basis(lambda k, x: (1 + x) / k, 4, 17),
    }


class TestSpatial:
    def test_trapezoid_orthonormal(self):
        x, w = spatial_grid(33)
        E = sine_basis(np.arange(1, 31), x)
        np.testing.assert_allclose(E.T @ (w[:, None] * E), np.eye(30), atol=1e-13)

    def test_small_grid_rejected(self):
        with pytest.raises(ValueError):
            spatial_grid(1)

    def test_power_weights(self):
        np.testing.assert_allclose(power_weights(3, -1.0, 2.0), [2.0, 1.0, 2 / 3])


class TestEmbedding:
    def test_diagonal_q(self):
        E = Embedding.diagonal([1.0, 0.5, 2.0])
        np.testing.assert_allclose(covariance_operator(E), np.diag([1.0, 0.25, 4.0]))

    def test_zero_weights(self):
        assert np.all(covariance_operator(Embedding.diagonal(np.zeros(4))) == 0)

    def test_sheet_brute_force(self):
        q = np.array([1.0, 3.0])
        x, _ = spatial_grid(5)
        E = Embedding.sheet(q, [(0.0, 0.5), (0.5, 1.01)], 5)
        Q = np.zeros((5, 5))
        for k, (a, b) in enumerate([(0.0, 0.5), (0.5, 1.01)]):
            for i in range(5):
                for j in range(5):
                    inside = (a <= x[i] < b) and (a <= x[j] < b)
                    ek = np.sqrt(2) * np.sin((k + 1) * np.pi * np.array([x[i], x[j]]))
                    Q[i, j] += q[k] ** 2 * inside * ek[0] * ek[1]
        np.testing.assert_allclose(covariance_operator(E), Q, atol=1e-14)

    def test_sheet_masks(self):
        x, _ = spatial_grid(9)
        a = Embedding.sheet([1.0, 2.0], [x < 0.5, x >= 0.5], 9)
        b = Embedding.sheet([1.0, 2.0], [(0.0, 0.5), (0.5, 2.0)], 9)
        np.testing.assert_array_equal(a.columns, b.columns)

    @pytest.mark.parametrize("bad", [dict(columns=np.ones((3, 2)), pairing=np.ones(2)),
                                     dict(columns=np.ones((2, 2)), pairing=np.array([1.0, 0.0])),
                                     dict(columns=np.array([[np.inf]]), pairing=np.ones(1))])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            Embedding(EmbeddingKind.DIAGONAL, **bad)

    def test_rotation_invariance(self, embeddings, rng):
        for E in embeddings.values():
            O = np.linalg.qr(rng.normal(size=(E.N, E.N)))[0]
            assert np.max(np.abs(covariance_operator(E.rotated(O)) - covariance_operator(E))) < 1e-12

    def test_q_form_matches_matrix(self, embeddings, rng):
        for E in embeddings.values():
            u, v = rng.normal(size=E.m), rng.normal(size=E.m)
            W = np.diag(E.pairing)
            assert E.q_form(u, v) == pytest.approx(u @ W @ covariance_operator(E) @ W @ v, rel=1e-12)

    def test_truncated(self):
        E = Embedding.diagonal([1.0, 2.0, 3.0]).truncated(2)
        assert E.N == 2 and E.m == 2
        np.testing.assert_allclose(E.norms_sq(), [1.0, 4.0])


class TestApply:
    def test_zero_functional(self, embeddings):
        B = CylFbm(embeddings["diagonal"], 0.3, TimeGrid(1.0, 8), 100, 1)
        assert np.all(apply(B, 1.0, np.zeros(4)) == 0)

    def test_first_coordinate(self):
        B = CylFbm(Embedding.diagonal([2.0, 0.5]), 0.3, TimeGrid(1.0, 8), 100, 1)
        np.testing.assert_allclose(apply(B, 0.5, [1.0, 0.0]), 2.0 * B.component(0).at(0.5))

    @pytest.mark.parametrize("H", [0.25, 0.75])
    def test_first_coordinate_variance(self, H):
        B = CylFbm(Embedding.diagonal([2.0, 0.5]), H, TimeGrid(1.0, 8), 100_000, 3)
        assert mc_compare(apply(B, 0.5, [1.0, 0.0]), 4.0 * 0.5 ** (2 * H), statistic="variance").passed

    @settings(max_examples=20, deadline=None)
    @given(a=st.floats(-3, 3), b=st.floats(-3, 3))
    def test_linear(self, a, b):
        E = Embedding.sheet([1.0, 2.0, 0.5], SETS, 9)
        B = CylFbm(E, 0.7, TimeGrid(1.0, 4), 20, 5)
        u, v = np.linspace(-1, 1, 9), np.cos(np.arange(9))
        np.testing.assert_allclose(apply(B, 0.75, a * u + b * v), a * apply(B, 0.75, u) + b * apply(B, 0.75, v),
                                   atol=1e-10)

    def test_components_independent_streams(self):
        B = CylFbm(Embedding.diagonal([1.0, 1.0]), 0.3, TimeGrid(1.0, 8), 10, 1)
        assert not np.array_equal(B.component(0).paths, B.component(1).paths)

    @pytest.mark.parametrize("name", ["diagonal", "sheet", "weighted"])
    def test_projection_law(self, embeddings, name, hurst, rng):
        E = embeddings[name]
        B = CylFbm(E, hurst, TimeGrid(1.0, 16), 100_000, 7)
        u, v = rng.normal(size=E.m), rng.normal(size=E.m)
        for s, t in ((0.5, 1.0), (0.25, 0.75)):
            X, Y = apply(B, s, u), apply(B, t, v)
            Xu, Xv = apply(B, s, u), apply(B, s, v)
            R = covariance(s, t, hurst)
            assert mc_compare(X * Y, E.q_form(u, v) * R).passed
            assert mc_compare(Xu * apply(B, t, u), E.q_form(u, u) * R).passed
            assert mc_compare(Xv * apply(B, t, v), E.q_form(v, v) * R).passed


class TestIsGenuine:
    def test_inverse_k(self):
        rep = is_genuine(Embedding.diagonal(power_weights(400, -1.0)))
        assert rep.verdict == "genuine"
        assert rep.tail.total < np.pi**2 / 6 < rep.tail.total + rep.tail.tail_estimate

    def test_constant(self):
        assert is_genuine(Embedding.diagonal(np.ones(400))).verdict == "cylindrical-only"

    def test_inverse_sqrt_declared(self):
        rep = is_genuine(Embedding.diagonal(power_weights(400, -0.5)), tail_rule=1.0)
        assert rep.verdict == "cylindrical-only"

    def test_inverse_sqrt_fitted_is_boundary(self):
        # fitted exponent 1 falls in the undecidable band
        assert is_genuine(Embedding.diagonal(power_weights(400, -0.5))).verdict == "inconclusive"

    def test_truncation_argument(self):
        rep = is_genuine(Embedding.diagonal(power_weights(400, -1.0)), N=100)
        assert rep.tail.N == 100

    def test_weighted_basis(self):
        E = Embedding.weighted_basis(lambda k, x: np.ones_like(x) / k, 60, 129)
        assert is_genuine(E).verdict == "genuine"
        assert is_genuine(Embedding.weighted_basis(lambda k, x: np.ones_like(x), 60, 129)).verdict == "cylindrical-only"
