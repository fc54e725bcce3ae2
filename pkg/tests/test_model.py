import numpy as np
import pytest

from groupgating.core_math import sigmoid
from groupgating.cores import CoreStructure
from groupgating.model import (
    FactorModel,
    SquarePoolingModel,
    UnsupportedOperation,
    compose_tensor,
    factor_energy,
    grad,
    infer,
    infer_square_pooling,
    loss,
    loss_and_grad,
    reconstruct_x,
    reconstruct_y,
    square_pooling_loss_and_grad,
)

CORES = {
    "diagonal": CoreStructure.diagonal(6),
    "grouped": CoreStructure.grouped(6, 2),
    "asym_grouped": CoreStructure.asym_grouped(3, 2),
    "topographic": CoreStructure.topographic(2, 3, 2),
}


def random_model(core, rng, dim=4, hidden=3, std=0.5):
    m = FactorModel.init(core, dim, dim, hidden, rng, std=std)
    m.bh[:] = rng.normal(size=hidden)
    m.bx[:] = 0.1 * rng.normal(size=dim)
    m.by[:] = 0.1 * rng.normal(size=dim)
    return m


def numeric_gradient(f, P, eps=1e-5):
    out = np.zeros_like(P)
    for i in np.ndindex(P.shape):
        old = P[i]
        P[i] = old + eps
        hi = f()
        P[i] = old - eps
        lo = f()
        P[i] = old
        out[i] = (hi - lo) / (2 * eps)
    return out


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-300)


class TestInference:
    def test_zero_mapping_weights_give_half(self):
        m = random_model(CORES["grouped"], np.random.default_rng(0))
        m.Wh[:] = 0
        m.bh[:] = 0
        h = infer(m, np.ones((5, 4)), np.ones((5, 4)))
        assert np.all(h == 0.5)

    @pytest.mark.parametrize("kind", list(CORES))
    def test_matches_composed_tensor(self, kind):
        rng = np.random.default_rng(1)
        m = random_model(CORES[kind], rng, std=0.3)
        w = compose_tensor(m)
        x, y = rng.normal(size=4), rng.normal(size=4)
        expected = sigmoid(m.bh + np.einsum("ijk,i,j->k", w, x, y))
        np.testing.assert_allclose(infer(m, x, y), expected, rtol=1e-12, atol=1e-14)

    def test_diagonal_tiny_case(self):
        # 2x2 images, two factors, one mapping unit, written out by hand
        rng = np.random.default_rng(2)
        m = random_model(CoreStructure.diagonal(2), rng, hidden=1, std=0.2)
        m.bh[:] = 0
        x, y = rng.normal(size=4), rng.normal(size=4)
        act = sum(m.Wh[f, 0] * (m.Wx[:, f] @ x) * (m.Wy[:, f] @ y) for f in range(2))
        assert infer(m, x, y)[0] == pytest.approx(1.0 / (1.0 + np.exp(-act)), rel=1e-14)

    def test_units_are_conditionally_independent(self):
        rng = np.random.default_rng(3)
        m = random_model(CORES["topographic"], rng, hidden=5)
        x, y = rng.normal(size=(7, 4)), rng.normal(size=(7, 4))
        joint = infer(m, x, y)
        for k in range(5):
            single = FactorModel(m.Wx, m.Wy, m.Wh[:, [k]], m.bh[[k]], m.bx, m.by, m.core)
            np.testing.assert_allclose(infer(single, x, y)[:, 0], joint[:, k], rtol=1e-12, atol=0)
        # changing unit 0's weights leaves the other units untouched
        m2 = m.copy()
        m2.Wh[:, 0] += 1.0
        np.testing.assert_array_equal(infer(m2, x, y)[:, 1:], joint[:, 1:])

    def test_dimension_mismatch(self):
        m = random_model(CORES["diagonal"], np.random.default_rng(0))
        with pytest.raises(ValueError):
            infer(m, np.ones(5), np.ones(4))
        with pytest.raises(ValueError):
            infer(m, np.ones((2, 4)), np.ones((3, 4)))

    def test_model_shape_validation(self):
        core = CoreStructure.grouped(4, 2)
        with pytest.raises(ValueError):
            FactorModel(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 2)), np.zeros(2),
                        np.zeros(4), np.zeros(4), core)


class TestComposeTensor:
    def test_diagonal_is_parafac(self):
        rng = np.random.default_rng(4)
        m = random_model(CoreStructure.diagonal(3), rng)
        expected = np.zeros((4, 4, 3))
        for i in range(4):
            for j in range(4):
                for k in range(3):
                    expected[i, j, k] = sum(m.Wx[i, f] * m.Wy[j, f] * m.Wh[f, k] for f in range(3))
        np.testing.assert_allclose(compose_tensor(m), expected, rtol=1e-13)

    def test_zero_factors(self):
        m = FactorModel.init(CORES["grouped"], 4, 4, 3, np.random.default_rng(0), std=0.0)
        assert np.all(compose_tensor(m) == 0)

    def test_non_diagonal_core_contraction(self):
        # dense C_def with ones on the product map, contracted term by term
        rng = np.random.default_rng(5)
        core = CoreStructure.grouped(4, 2)
        m = random_model(core, rng)
        C = np.zeros((4, 4, core.num_products))
        for d, e, s in core.product_index_map:
            C[d, e, s] = 1.0
        expected = np.einsum("def,id,je,fk->ijk", C, m.Wx, m.Wy, m.Wh)
        np.testing.assert_allclose(compose_tensor(m), expected, rtol=1e-12)

    def test_size_guard(self):
        m = FactorModel.init(CoreStructure.diagonal(2), 200, 200, 30, np.random.default_rng(0))
        with pytest.raises(ValueError):
            compose_tensor(m)

    @pytest.mark.parametrize("kind", list(CORES))
    def test_energy_equivalence_over_random_models(self, kind):
        rng = np.random.default_rng(6)
        for _ in range(100):
            m = random_model(CORES[kind], rng)
            w = compose_tensor(m)
            x, y, h = rng.normal(size=4), rng.normal(size=4), rng.random(3)
            dense = np.einsum("ijk,i,j,k->", w, x, y, h)
            assert abs(dense - factor_energy(m, x, y, h)) <= 1e-10


class TestReconstruction:
    def test_zero_activations_give_bias(self):
        m = random_model(CORES["grouped"], np.random.default_rng(7))
        x = np.random.default_rng(8).normal(size=4)
        np.testing.assert_array_equal(reconstruct_y(m, x, np.zeros(3)), m.by)
        np.testing.assert_array_equal(reconstruct_x(m, x, np.zeros(3)), m.bx)

    @pytest.mark.parametrize("kind", ["diagonal", "grouped", "topographic"])
    def test_matches_composed_tensor(self, kind):
        rng = np.random.default_rng(9)
        m = random_model(CORES[kind], rng)
        w = compose_tensor(m)
        x, y, h = rng.normal(size=4), rng.normal(size=4), rng.random(3)
        np.testing.assert_allclose(reconstruct_y(m, x, h), np.einsum("ijk,i,k->j", w, x, h) + m.by,
                                   rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(reconstruct_x(m, y, h), np.einsum("ijk,j,k->i", w, y, h) + m.bx,
                                   rtol=1e-12, atol=1e-14)

    def test_asymmetric_has_no_input_reconstruction(self):
        m = random_model(CORES["asym_grouped"], np.random.default_rng(0))
        with pytest.raises(UnsupportedOperation):
            reconstruct_x(m, np.zeros(4), np.zeros(3))


class TestLoss:
    def test_perfect_reconstruction_is_zero(self):
        m = FactorModel.init(CORES["grouped"], 4, 4, 3, np.random.default_rng(0), std=0.0)
        m.bx[:] = [1, 2, 3, 4]
        m.by[:] = [-1, 0, 1, 0]
        X, Y = np.tile(m.bx, (5, 1)), np.tile(m.by, (5, 1))
        assert loss(m, X, Y) == 0.0

    def test_zero_model_loss_is_twice_variance(self):
        rng = np.random.default_rng(1)
        X, Y = rng.standard_normal((4000, 9)), rng.standard_normal((4000, 9))
        m = FactorModel.init(CoreStructure.diagonal(3), 9, 9, 2, rng, std=0.0)
        assert loss(m, X, Y) == pytest.approx(2 * 9 * 1.0, rel=0.03)

    def test_asymmetric_single_term(self):
        rng = np.random.default_rng(2)
        m = random_model(CORES["asym_grouped"], rng)
        X, Y = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
        yhat = reconstruct_y(m, X, infer(m, X, Y))
        assert loss(m, X, Y) == pytest.approx(np.mean(np.sum((yhat - Y) ** 2, axis=1)), rel=1e-12)

    def test_noisy_inputs_clean_targets(self):
        rng = np.random.default_rng(3)
        m = random_model(CORES["grouped"], rng)
        X, Y = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
        Xn, Yn = X + 0.3, Y - 0.2
        h = infer(m, Xn, Yn)
        expected = np.mean(np.sum((reconstruct_y(m, Xn, h) - Y) ** 2, 1)
                           + np.sum((reconstruct_x(m, Yn, h) - X) ** 2, 1))
        assert loss(m, Xn, Yn, X, Y) == pytest.approx(expected, rel=1e-12)


class TestGradient:
    @pytest.mark.parametrize("kind", list(CORES))
    def test_finite_differences(self, kind):
        rng = np.random.default_rng(10)
        m = random_model(CORES[kind], rng, dim=25, std=0.3)
        X, Y = rng.normal(size=(4, 25)), rng.normal(size=(4, 25))
        Xc, Yc = X + 0.1 * rng.normal(size=X.shape), Y + 0.1 * rng.normal(size=Y.shape)
        g = grad(m, X, Y, Xc, Yc)
        for name in ("Wx", "Wy", "Wh", "bh", "bx", "by"):
            num = numeric_gradient(lambda: loss(m, X, Y, Xc, Yc), getattr(m, name))
            assert rel_err(num, g[name]) < 1e-4, name

    def test_zero_loss_gives_zero_gradient(self):
        m = FactorModel.init(CORES["grouped"], 4, 4, 3, np.random.default_rng(0), std=0.0)
        m.bx[:] = [1, 2, 3, 4]
        m.by[:] = [-1, 0, 1, 0]
        g = grad(m, np.tile(m.bx, (3, 1)), np.tile(m.by, (3, 1)))
        assert all(np.all(v == 0) for v in g.values())

    def test_disconnected_factor_has_zero_gradient(self):
        core = CoreStructure.custom([(0, 0), (1, 2), (2, 1)], 4, 4)
        rng = np.random.default_rng(11)
        m = random_model(core, rng)
        g = grad(m, rng.normal(size=(5, 4)), rng.normal(size=(5, 4)))
        assert np.all(g["Wx"][:, 3] == 0)
        assert np.all(g["Wy"][:, 3] == 0)
        assert np.any(g["Wx"][:, 0] != 0)


class TestDegeneration:
    def test_grouped_one_equals_diagonal(self):
        rng = np.random.default_rng(12)
        d = random_model(CoreStructure.diagonal(5), rng)
        g = FactorModel(d.Wx, d.Wy, d.Wh, d.bh, d.bx, d.by, CoreStructure.grouped(5, 1))
        X, Y = rng.normal(size=(8, 4)), rng.normal(size=(8, 4))
        h = infer(d, X, Y)
        np.testing.assert_array_equal(infer(g, X, Y), h)
        np.testing.assert_array_equal(reconstruct_y(g, X, h), reconstruct_y(d, X, h))
        np.testing.assert_array_equal(reconstruct_x(g, Y, h), reconstruct_x(d, Y, h))
        ld, gd = loss_and_grad(d, X, Y)
        lg, gg = loss_and_grad(g, X, Y)
        assert ld == lg
        for k in gd:
            np.testing.assert_array_equal(gd[k], gg[k])


class TestSquarePooling:
    def test_zero_pooling_gives_half(self):
        m = SquarePoolingModel.init(8, 5, 3, np.random.default_rng(0))
        m.Wh[:] = 0
        assert np.all(infer_square_pooling(m, np.ones((2, 4)), np.ones((2, 4))) == 0.5)

    def test_filter_sign_flip_invariance(self):
        rng = np.random.default_rng(1)
        m = SquarePoolingModel.init(8, 5, 3, rng, std=0.5)
        x, y = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
        h = infer_square_pooling(m, x, y)
        m.Wc[:, 2] *= -1
        np.testing.assert_allclose(infer_square_pooling(m, x, y), h, rtol=0, atol=1e-15)

    def test_equals_gated_unit_on_identical_images(self):
        # energy response == gated mapping unit with x = y = z and tied filters
        rng = np.random.default_rng(2)
        m = SquarePoolingModel.init(8, 5, 3, rng, std=0.5)
        gated = FactorModel(m.Wc, m.Wc, m.Wh, m.bh, m.bz, m.bz, CoreStructure.diagonal(5))
        z = rng.normal(size=(4, 8))
        np.testing.assert_allclose(infer_square_pooling(m, z[:, :4], z[:, 4:]), infer(gated, z, z),
                                   rtol=1e-13)

    def test_dimension_mismatch(self):
        m = SquarePoolingModel.init(8, 5, 3, np.random.default_rng(0))
        with pytest.raises(ValueError):
            infer_square_pooling(m, np.ones(4), np.ones(3))

    def test_finite_differences(self):
        rng = np.random.default_rng(3)
        m = SquarePoolingModel.init(10, 4, 3, rng, std=0.4)
        m.bh[:] = rng.normal(size=3)
        Z = rng.normal(size=(5, 10))
        Zc = Z + 0.1
        g = square_pooling_loss_and_grad(m, Z, Zc)[1]
        for name, P in m.params().items():
            num = numeric_gradient(lambda: square_pooling_loss_and_grad(m, Z, Zc, need_grad=False)[0], P)
            assert rel_err(num, g[name]) < 1e-4, name
