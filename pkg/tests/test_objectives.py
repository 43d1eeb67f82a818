import numpy as np
import pytest

from flatopt.datasets import make_two_moons
from flatopt.errors import DimensionTooLarge, ShapeMismatch
from flatopt.objectives import (
    HESSIAN_LIMIT,
    ToyLandscape2D,
    count_grid_minima,
    mlp_objective,
    quadratic_objective,
    smoothed_cross_entropy_floor,
    toy_landscape,
)
from flatopt.rng import philox_generator


def central_diff_gradient(f, theta, h=1e-6):
    """Independent finite-difference oracle for gradients."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        grad[j] = (f(theta + e) - f(theta - e)) / (2.0 * h)
    return grad


def central_diff_hessian(f, theta, h=1e-4):
    theta = np.asarray(theta, dtype=np.float64)
    p = theta.size
    H = np.zeros((p, p))
    for i in range(p):
        for j in range(p):
            ei = np.zeros(p)
            ej = np.zeros(p)
            ei[i] = h
            ej[j] = h
            H[i, j] = (
                f(theta + ei + ej) - f(theta + ei - ej) - f(theta - ei + ej) + f(theta - ei - ej)
            ) / (4.0 * h * h)
    return H


# ---------------------------------------------------------------------------
# quadratic


def test_quadratic_minimum_at_origin():
    obj = quadratic_objective([1.0, 2.0, 3.0])
    assert obj.value(np.zeros(3)) == 0.0
    assert np.allclose(obj.gradient(np.zeros(3)), 0.0)


def test_quadratic_direct_evaluation():
    obj = quadratic_objective([1.0, 2.0])
    theta = np.array([1.0, 1.0])
    assert obj.value(theta) == pytest.approx(1.5)
    assert np.allclose(obj.gradient(theta), [1.0, 2.0])


def test_quadratic_hessian_trace():
    obj = quadratic_objective([1.0, 2.0, 3.0])
    for theta in (np.zeros(3), np.array([1.0, -2.0, 0.5])):
        assert np.trace(obj.hessian(theta)) == pytest.approx(6.0)


def test_quadratic_with_linear_term():
    obj = quadratic_objective([2.0, 4.0], b=[1.0, -1.0])
    theta = np.array([0.5, 0.25])
    expected = 0.5 * (2 * 0.25 + 4 * 0.0625) - (0.5 - 0.25)
    assert obj.value(theta) == pytest.approx(expected)
    assert np.allclose(obj.gradient(theta), [2 * 0.5 - 1, 4 * 0.25 + 1])


def test_quadratic_value_batch_matches_loop():
    obj = quadratic_objective([1.0, 3.0], b=[0.2, -0.1])
    thetas = philox_generator(0).standard_normal((40, 2))
    batch = obj.value_batch(thetas)
    loop = np.array([obj.value(t) for t in thetas])
    assert np.allclose(batch, loop, rtol=1e-14)


def test_quadratic_hvp_exact():
    obj = quadratic_objective([1.0, 5.0, 0.5])
    v = np.array([1.0, -2.0, 4.0])
    assert np.allclose(obj.hvp(np.ones(3), v), obj.a_diag * v)


# ---------------------------------------------------------------------------
# toy landscape


def test_toy_gradient_vanishes_at_wide_center_without_confinement():
    obj = toy_landscape(ToyLandscape2D(kappa=0.0))
    grad = obj.gradient(np.array([2.0, 0.0]))
    assert np.linalg.norm(grad) < 1e-8


def test_toy_sharp_minimum_has_larger_top_curvature():
    obj = toy_landscape()
    sharp, wide = obj.minima()
    lam_sharp = np.linalg.eigvalsh(obj.hessian(sharp)).max()
    lam_wide = np.linalg.eigvalsh(obj.hessian(wide)).max()
    assert lam_sharp > lam_wide


def test_toy_grid_search_finds_exactly_two_basins():
    assert count_grid_minima(toy_landscape(), bounds=(-4.0, 4.0), resolution=400) == 2


def test_toy_gradient_matches_finite_differences():
    obj = toy_landscape()
    gen = philox_generator(11)
    for _ in range(20):
        theta = gen.uniform(-4.0, 4.0, 2)
        oracle = central_diff_gradient(obj.value, theta)
        grad = obj.gradient(theta)
        denom = max(1.0, np.linalg.norm(oracle))
        assert np.linalg.norm(grad - oracle) / denom < 1e-5


def test_toy_hessian_matches_finite_differences_and_symmetric():
    obj = toy_landscape()
    gen = philox_generator(12)
    for _ in range(10):
        theta = gen.uniform(-3.0, 3.0, 2)
        H = obj.hessian(theta)
        assert np.allclose(H, H.T, atol=1e-10)
        oracle = central_diff_hessian(obj.value, theta)
        assert np.max(np.abs(H - oracle)) < 1e-4


def test_toy_value_batch_matches_loop():
    obj = toy_landscape()
    thetas = philox_generator(13).uniform(-4, 4, (50, 2))
    assert np.allclose(obj.value_batch(thetas), [obj.value(t) for t in thetas])


def test_toy_rejects_wrong_widths():
    with pytest.raises(ValueError):
        ToyLandscape2D(s1=1.5, s2=0.3)


# ---------------------------------------------------------------------------
# MLP


def make_small_batch(n=8, seed=5):
    data = make_two_moons(n, noise=0.1, seed=seed)
    return data.inputs, data.targets


def test_mlp_uniform_softmax_loss_is_log2():
    obj = mlp_objective((2, 2), label_smoothing=0.0)
    x, y = make_small_batch()
    theta = np.zeros(obj.p)  # zero weights give equal logits
    assert obj.value(theta, (x, y)) == pytest.approx(np.log(2.0), rel=1e-12)


def test_mlp_smoothed_loss_floor():
    ls, k = 0.1, 2
    # closed-form oracle: entropy of the smoothed target distribution
    floor = -(0.95 * np.log(0.95) + 0.05 * np.log(0.05))
    assert smoothed_cross_entropy_floor(ls, k) == pytest.approx(floor, abs=1e-15)

    # numeric oracle: minimize the 1-d margin loss by dense sweep
    margins = np.linspace(0.0, 12.0, 200_001)
    probs = 1.0 / (1.0 + np.exp(-margins))
    losses = -(0.95 * np.log(probs) + 0.05 * np.log(1.0 - probs))
    assert losses.min() == pytest.approx(floor, abs=1e-8)

    # saturated correct logits: loss grows ~ (ls/2) * margin, stays above floor
    obj = mlp_objective((2, 2), label_smoothing=ls)
    x = np.array([[1.0, 0.0]])
    y = np.array([1])
    big = 40.0
    theta = np.zeros(obj.p)
    w, b = obj.unpack(theta)
    b[0][:] = [-big / 2, big / 2]  # logit margin `big` for class 1
    theta = obj.pack(w, b)
    loss = obj.value(theta, (x, y))
    assert loss > floor
    assert loss == pytest.approx((ls / k) * big, rel=0.01)


def test_mlp_gradient_matches_finite_differences():
    # 2-16-2 network, 8 samples, max relative error < 1e-5
    obj = mlp_objective((2, 16, 2), label_smoothing=0.1)
    batch = make_small_batch(8)
    theta = obj.init_params(seed=3)
    grad = obj.gradient(theta, batch)
    oracle = central_diff_gradient(lambda t: obj.value(t, batch), theta)
    max_rel = np.max(np.abs(grad - oracle)) / max(1e-12, np.max(np.abs(oracle)))
    assert max_rel < 1e-5


def test_mlp_per_example_gradients_mean_equals_gradient():
    obj = mlp_objective((2, 8, 4, 3), label_smoothing=0.05)
    data = make_two_moons(12, noise=0.3, seed=9)
    y = data.targets.copy()
    y[:4] = 2  # exercise the third class
    batch = (data.inputs, y)
    theta = obj.init_params(seed=1)
    per = obj.per_example_gradients(theta, batch)
    assert per.shape == (12, obj.p)
    mean = per.mean(axis=0)
    grad = obj.gradient(theta, batch)
    assert np.allclose(mean, grad, rtol=1e-10, atol=1e-12)


def test_mlp_per_example_losses_average_to_value():
    obj = mlp_objective((2, 6, 2), label_smoothing=0.1)
    batch = make_small_batch(10)
    theta = obj.init_params(seed=4)
    assert obj.per_example_losses(theta, batch).mean() == pytest.approx(
        obj.value(theta, batch), rel=1e-14
    )


def test_mlp_shape_mismatches_raise():
    obj = mlp_objective((2, 4, 2))
    theta = obj.init_params(seed=0)
    with pytest.raises(ShapeMismatch):
        obj.value(theta, (np.zeros((3, 5)), np.zeros(3, dtype=int)))
    with pytest.raises(ShapeMismatch):
        obj.value(theta, (np.zeros((3, 2)), np.zeros(4, dtype=int)))
    with pytest.raises(ShapeMismatch):
        obj.value(theta, (np.zeros((3, 2)), np.array([0, 1, 2])))
    with pytest.raises(ShapeMismatch):
        obj.value(theta, None)
    with pytest.raises(ShapeMismatch):
        obj.value(np.zeros(obj.p + 1), (np.zeros((3, 2)), np.zeros(3, dtype=int)))


def test_mlp_init_is_deterministic():
    obj = mlp_objective((2, 16, 2))
    assert np.array_equal(obj.init_params(seed=7), obj.init_params(seed=7))
    assert not np.array_equal(obj.init_params(seed=7), obj.init_params(seed=8))


def test_mlp_hessian_respects_limit():
    big = mlp_objective((2, 32, 2))  # p = 162 > 64
    assert big.p > HESSIAN_LIMIT
    with pytest.raises(DimensionTooLarge):
        big.hessian(big.init_params(0), make_small_batch())


def test_mlp_fd_hessian_is_symmetric_and_matches_gradient_differences():
    obj = mlp_objective((2, 3, 2))  # p = 17 <= 64
    batch = make_small_batch(6)
    theta = obj.init_params(seed=2)
    H = obj.hessian(theta, batch)
    assert np.allclose(H, H.T, atol=1e-10)
    # independent oracle at a different step size
    h = 3e-5
    oracle = np.zeros_like(H)
    for j in range(obj.p):
        e = np.zeros(obj.p)
        e[j] = h
        oracle[:, j] = (obj.gradient(theta + e, batch) - obj.gradient(theta - e, batch)) / (2 * h)
    assert np.max(np.abs(H - 0.5 * (oracle + oracle.T))) < 1e-4


def test_hvp_matches_hessian_column():
    obj = quadratic_objective([1.0, 2.0, 3.0, 4.0])
    theta = np.array([0.3, -0.2, 0.7, 1.0])
    v = np.array([1.0, 0.0, -2.0, 0.5])
    assert np.allclose(obj.hvp(theta, v), obj.hessian(theta) @ v, rtol=1e-8)

    mlp = mlp_objective((2, 4, 2))
    batch = make_small_batch(6)
    t = mlp.init_params(seed=6)
    hv = mlp.hvp(t, np.ones(mlp.p), batch)
    assert np.allclose(hv, mlp.hessian(t, batch) @ np.ones(mlp.p), atol=1e-5)


def test_objective_gradient_fd_property_battery():
    """Every objective passes the gradient finite-difference check at random points."""
    gen = philox_generator(20)
    quad = quadratic_objective([0.5, 2.0, 7.0], b=[1.0, 0.0, -2.0])
    toy = toy_landscape()
    mlp = mlp_objective((2, 5, 2), label_smoothing=0.1)
    batch = make_small_batch(7)
    cases = [
        (quad, lambda: gen.uniform(-2, 2, 3), None),
        (toy, lambda: gen.uniform(-4, 4, 2), None),
        (mlp, lambda: 0.5 * gen.standard_normal(mlp.p), batch),
    ]
    for obj, draw, b in cases:
        for _ in range(20):
            theta = draw()
            grad = obj.gradient(theta, b)
            oracle = central_diff_gradient(lambda t: obj.value(t, b), theta)
            scale = max(1.0, np.max(np.abs(oracle)))
            assert np.max(np.abs(grad - oracle)) / scale < 1e-5
