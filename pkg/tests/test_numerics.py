import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infobottleneck.errors import InsufficientData, TrainingDiverged
from infobottleneck.numerics import TrainerConfig, fit_pca, ridge_solve, standardize, train_adamw


# ---------------------------------------------------------------- standardize

def test_standardize_two_row_column():
    s, z = standardize(np.array([[1.0], [3.0]]))
    assert s.mean[0] == 2.0
    assert s.scale[0] == 1.0
    np.testing.assert_array_equal(z[:, 0], [-1.0, 1.0])


def test_standardize_constant_column_flagged():
    s, z = standardize(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]]))
    np.testing.assert_array_equal(z[:, 0], [0.0, 0.0, 0.0])
    assert s.constant.tolist() == [True, False]


def test_standardize_standard_normal_is_near_identity():
    x = np.random.default_rng(0).standard_normal((20000, 1))
    _, z = standardize(x)
    np.testing.assert_allclose(z, x, atol=0.05)


def test_standardize_moments_and_train_only_fit():
    rng = np.random.default_rng(1)
    x = rng.normal(3.0, 7.0, size=(50, 4))
    s, z = standardize(x)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-5)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-4)
    other = rng.normal(size=(5, 4))
    np.testing.assert_allclose(s.transform(other), (other - x.mean(0)) / x.std(0))
    np.testing.assert_allclose(s.inverse(s.transform(other)), other)


def test_standardize_needs_two_rows():
    with pytest.raises(InsufficientData):
        standardize(np.ones((1, 3)))


# ---------------------------------------------------------------- pca

def test_pca_rank_one_line():
    t = np.linspace(-2, 3, 11)
    m = fit_pca(np.stack([t, t], axis=1))
    np.testing.assert_allclose(m.explained_variance_ratio, [1.0])
    np.testing.assert_allclose(m.components[0], [2**-0.5, 2**-0.5], atol=1e-12)


def test_pca_isotropic_gaussian_against_eigendecomposition():
    x = np.random.default_rng(2).standard_normal((10000, 3))
    m = fit_pca(x)
    np.testing.assert_allclose(m.explained_variance_ratio, 1 / 3, atol=0.02)
    ev = np.sort(np.linalg.eigvalsh(np.cov(x, rowvar=False)))[::-1]
    np.testing.assert_allclose(m.explained_variance_ratio, ev / ev.sum(), atol=1e-5)


def test_pca_constant_rows_keep_no_components():
    m = fit_pca(np.tile([1.0, -2.0, 0.5], (6, 1)))
    assert m.n_components == 0
    assert m.explained_variance_ratio.size == 0


def test_pca_needs_two_rows():
    with pytest.raises(InsufficientData):
        fit_pca(np.ones((1, 2)))


@settings(max_examples=40, deadline=None)
@given(rows=st.integers(2, 50), cols=st.integers(1, 50), seed=st.integers(0, 2**16))
def test_pca_matches_covariance_oracle(rows, cols, seed):
    x = np.random.default_rng(seed).standard_normal((rows, cols)) * np.linspace(1, 3, cols)
    m = fit_pca(x)
    ev = np.sort(np.clip(np.linalg.eigvalsh(np.cov(x, rowvar=False).reshape(cols, cols)), 0, None))[::-1]
    ratio = ev / ev.sum()
    k = m.n_components
    np.testing.assert_allclose(m.explained_variance_ratio, ratio[:k], atol=1e-5)
    assert abs(ratio[k:].sum()) < 1e-5
    assert abs(m.explained_variance_ratio.sum() - 1.0) < 1e-5
    assert np.all(np.diff(m.explained_variance_ratio) <= 1e-12)
    np.testing.assert_allclose(m.components @ m.components.T, np.eye(k), atol=1e-4)
    rec = m.inverse_transform(m.transform(x))
    xc = x - x.mean(0)
    assert np.linalg.norm(rec - x) <= 1e-4 * max(np.linalg.norm(xc), 1e-12)
    # sign convention: largest-magnitude entry of each component is non-negative
    piv = np.argmax(np.abs(m.components), axis=1)
    assert np.all(m.components[np.arange(k), piv] >= 0)


def test_pca_max_components():
    x = np.random.default_rng(3).standard_normal((30, 6))
    assert fit_pca(x, max_components=2).n_components == 2


# ---------------------------------------------------------------- ridge

def test_ridge_identity_lambda_zero():
    np.testing.assert_allclose(ridge_solve(np.eye(4), np.eye(4), 0.0).weights, np.eye(4), atol=1e-12)


def test_ridge_identity_lambda_one_halves():
    np.testing.assert_allclose(ridge_solve(np.eye(4), np.eye(4), 1.0).weights, 0.5 * np.eye(4), atol=1e-12)


def test_ridge_matches_normal_equations():
    rng = np.random.default_rng(4)
    X, Y = rng.standard_normal((20, 5)), rng.standard_normal((20, 3))
    W = np.linalg.solve(X.T @ X + 0.1 * np.eye(5), X.T @ Y)
    np.testing.assert_allclose(ridge_solve(X, Y, 0.1).weights, W, atol=1e-10)


def test_ridge_rank_deficient_returns_min_norm_flagged():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((10, 1))
    X = np.hstack([a, a])
    y = 3 * a[:, 0]
    lm = ridge_solve(X, y, 0.0)
    assert lm.min_norm
    np.testing.assert_allclose(lm.weights, [1.5, 1.5], atol=1e-10)
    assert not ridge_solve(X, y, 0.1).min_norm


def _lsq_problem(X, Y, lam=0.0):
    n = X.shape[0]

    def loss(p):
        r = X @ p["W"] - Y
        return float(np.sum(r * r) + lam * np.sum(p["W"] ** 2))

    def loss_and_grad(p, idx):
        # full objective regardless of batch: the batch size covers all rows
        r = X @ p["W"] - Y
        return loss(p), {"W": 2 * X.T @ r + 2 * lam * p["W"]}

    return loss, loss_and_grad, n


def test_gradient_trainer_reaches_ridge_solution():
    rng = np.random.default_rng(6)
    X, Y = rng.standard_normal((20, 5)), rng.standard_normal((20, 2))
    loss, lg, n = _lsq_problem(X, Y, lam=0.1)
    cfg = TrainerConfig(batch_size=n, learning_rate=0.01, weight_decay=0.0, epochs=4000)
    res = train_adamw({"W": np.zeros((5, 2))}, lg, n, cfg, validation_loss=loss)
    W = ridge_solve(X, Y, 0.1).weights
    assert np.sqrt(np.mean((res.params["W"] - W) ** 2)) < 1e-3


def test_minibatch_regression_matches_least_squares():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((200, 4))
    Y = X @ rng.standard_normal((4, 1)) + 0.01 * rng.standard_normal((200, 1))

    def lg(p, idx):
        r = X[idx] @ p["W"] - Y[idx]
        return float(np.mean(r * r)), {"W": 2 * X[idx].T @ r / len(idx)}

    val = lambda p: float(np.mean((X @ p["W"] - Y) ** 2))
    cfg = TrainerConfig(batch_size=200, learning_rate=0.01, weight_decay=0.0, epochs=3000)
    res = train_adamw({"W": np.zeros((4, 1))}, lg, 200, cfg, validation_loss=val)
    W = ridge_solve(X, Y, 0.0).weights
    assert np.sqrt(np.mean((X @ res.params["W"] - X @ W) ** 2)) < 1e-3


def test_scalar_quadratic_converges():
    lg = lambda p, idx: (float((p["w"][0] - 3) ** 2), {"w": 2 * (p["w"] - 3)})
    val = lambda p: float((p["w"][0] - 3) ** 2)
    res = train_adamw({"w": np.zeros(1)}, lg, 1, TrainerConfig(batch_size=1, learning_rate=0.05, weight_decay=0.0,
                                                                epochs=2000), validation_loss=val)
    assert abs(res.params["w"][0] - 3) < 1e-3


def test_first_step_matches_hand_computed_adamw():
    # one step from w=1 on loss w^2: decay w <- w (1 - lr wd), then Adam moves by lr * g / |g|
    lr, wd = 0.1, 0.5
    lg = lambda p, idx: (float(p["w"][0] ** 2), {"w": 2 * p["w"]})
    res = train_adamw({"w": np.ones(1)}, lg, 1, TrainerConfig(batch_size=1, learning_rate=lr, weight_decay=wd,
                                                              epochs=1), validation_loss=lambda p: 0.0)
    expected = 1.0 * (1 - lr * wd) - lr * 2.0 / (2.0 + 1e-8)
    assert res.params["w"][0] == pytest.approx(expected, abs=1e-12)


def test_trainer_is_bitwise_deterministic():
    rng = np.random.default_rng(8)
    X, Y = rng.standard_normal((64, 3)), rng.standard_normal((64, 2))

    def lg(p, idx):
        r = X[idx] @ p["W"] - Y[idx]
        return float(np.mean(r * r)), {"W": 2 * X[idx].T @ r / len(idx)}

    cfg = TrainerConfig(batch_size=8, epochs=10, seed=3)
    val = lambda p: float(np.mean((X @ p["W"] - Y) ** 2))
    a = train_adamw({"W": np.zeros((3, 2))}, lg, 64, cfg, validation_loss=val)
    b = train_adamw({"W": np.zeros((3, 2))}, lg, 64, cfg, validation_loss=val)
    assert a.params["W"].tobytes() == b.params["W"].tobytes()
    assert a.train_curve == b.train_curve and a.validation_curve == b.validation_curve


def test_equal_validation_keeps_earliest_epoch():
    lg = lambda p, idx: (float(p["w"][0] ** 2), {"w": 2 * p["w"]})
    res = train_adamw({"w": np.ones(1)}, lg, 1, TrainerConfig(batch_size=1, epochs=5),
                      validation_loss=lambda p: 1.0)
    assert res.best_epoch == 0
    assert len(res.validation_curve) == 5


def test_best_validation_snapshot_is_returned():
    vals = iter([3.0, 1.0, 2.0, 5.0])
    lg = lambda p, idx: (1.0, {"w": np.ones(1)})
    seen = []

    def val(p):
        seen.append(p["w"].copy())
        return next(vals)

    res = train_adamw({"w": np.zeros(1)}, lg, 1, TrainerConfig(batch_size=1, epochs=4, weight_decay=0.0),
                      validation_loss=val)
    assert res.best_epoch == 1
    np.testing.assert_array_equal(res.params["w"], seen[1])


def test_nan_loss_raises_with_epoch():
    calls = {"n": 0}

    def lg(p, idx):
        calls["n"] += 1
        return (float("nan") if calls["n"] > 3 else 1.0), {"w": np.ones(1)}

    with pytest.raises(TrainingDiverged) as ei:
        train_adamw({"w": np.zeros(1)}, lg, 2, TrainerConfig(batch_size=1, epochs=5), validation_loss=lambda p: 0.0)
    assert ei.value.epoch == 1


def test_trainer_config_validation():
    with pytest.raises(ValueError):
        TrainerConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainerConfig(epochs=0)
    assert TrainerConfig().replace(epochs=3).epochs == 3
