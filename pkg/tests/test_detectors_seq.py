import numpy as np
import pytest

from oracles import gaussian_pdf_closed_form
from pvanomaly.detectors.gaussian import GaussianResidualModel, gaussian_pdf, residual_classify, residual_fit
from pvanomaly.detectors.neural import (
    DaeModel,
    MlpEstimator,
    TrainConfig,
    dae_fit,
    dae_layers,
    dae_score,
    init_params,
    loss_and_grads,
    mlp_fit,
    train_network,
)
from pvanomaly.errors import DimensionMismatch, NonFiniteLoss, TooFewSamples
from pvanomaly.timeseries import WindowSpec, make_windows

# -- multivariate Gaussian residual model --------------------------------------


def _random_spd(rng, k):
    A = rng.normal(size=(k, k))
    return A @ A.T + 0.5 * np.eye(k)


def test_pdf_standard_normal_point():
    got = gaussian_pdf(np.array([3.0, 4.0]), np.zeros(2), np.eye(2))
    assert got == pytest.approx(np.exp(-12.5) / (2 * np.pi), rel=1e-14)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_pdf_matches_closed_form(k):
    rng = np.random.default_rng(k)
    for _ in range(100):
        mu = rng.normal(size=k)
        cov = _random_spd(rng, k)
        x = mu + rng.normal(size=k)
        assert gaussian_pdf(x, mu, cov) == pytest.approx(gaussian_pdf_closed_form(x, mu, cov), rel=1e-10)


def test_pdf_batch_matches_single(rng):
    mu, cov = np.zeros(3), _random_spd(rng, 3)
    X = rng.normal(size=(7, 3))
    np.testing.assert_allclose(gaussian_pdf(X, mu, cov), [gaussian_pdf(x, mu, cov) for x in X], rtol=1e-14)


def test_residual_fit_threshold_is_holdout_quantile(rng):
    E = rng.normal(size=(500, 2))
    H = rng.normal(size=(1000, 2))
    m = residual_fit(E, H, percentile=0.01)
    pdfs = m.pdf(H)
    assert m.threshold == np.quantile(pdfs, 0.01, method="lower")
    assert np.mean(residual_classify(m, H)) <= 0.01
    np.testing.assert_allclose(m.mean, E.mean(axis=0))


def test_residual_classify_center_and_tail(rng):
    m = residual_fit(rng.normal(size=(300, 3)))
    assert residual_classify(m, m.mean) is False
    sd = np.sqrt(np.diag(m.cov))
    for axis in range(3):
        x = m.mean.copy()
        x[axis] += 100 * sd[axis]
        assert residual_classify(m, x) is True


def test_residual_one_dimensional(rng):
    m = residual_fit(rng.normal(size=200))
    assert m.dimension == 1
    assert isinstance(m.pdf(0.0), float)
    assert m.pdf(np.zeros(5)).shape == (5,)


def test_residual_errors_and_round_trip(rng):
    with pytest.raises(TooFewSamples):
        residual_fit(rng.normal(size=(3, 3)))
    m = residual_fit(rng.normal(size=(50, 2)))
    with pytest.raises(DimensionMismatch):
        m.pdf(np.zeros(3))
    back = GaussianResidualModel.from_dict(m.to_dict())
    assert back.threshold == m.threshold
    np.testing.assert_array_equal(back.cov, m.cov)


# -- backprop ----------------------------------------------------------------------


def _numeric_grads(weights, biases, acts, X, Y, h=1e-6):
    out = []
    for group in (weights, biases):
        gs = []
        for p in group:
            g = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = loss_and_grads(weights, biases, acts, X, Y)[0]
                p[idx] = old - h
                down = loss_and_grads(weights, biases, acts, X, Y)[0]
                p[idx] = old
                g[idx] = (up - down) / (2 * h)
            gs.append(g)
        out.append(gs)
    return out


def _check_grads(sizes, acts, X, Y, seed):
    weights, biases = init_params(sizes, np.random.default_rng(seed))
    for b in biases:
        b += 0.1  # keep ReLU pre-activations away from the kink
    _, gW, gb = loss_and_grads(weights, biases, acts, X, Y)
    nW, nb = _numeric_grads(weights, biases, acts, X, Y)
    for a, n in zip(gW + gb, nW + nb):
        np.testing.assert_allclose(a, n, rtol=1e-5, atol=1e-9)


def test_mlp_gradients_3_3_2():
    rng = np.random.default_rng(0)
    X, Y = rng.normal(size=(6, 3)), rng.normal(size=(6, 2))
    _check_grads([3, 3, 2], ["relu", "linear"], X, Y, 1)


def test_deep_mlp_gradients():
    rng = np.random.default_rng(1)
    X, Y = rng.normal(size=(5, 4)), rng.normal(size=(5, 3))
    _check_grads([4, 5, 4, 3], ["relu", "relu", "linear"], X, Y, 2)


def test_dae_gradients():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(5, 4))
    sizes, acts = dae_layers(4, (3,), 2)
    assert sizes == [4, 3, 2, 3, 4]
    assert acts == ["relu", "linear", "relu", "linear"]
    _check_grads(sizes, acts, X + 0.1 * rng.normal(size=X.shape), X, 3)


# -- training -----------------------------------------------------------------------


def _windows(x, wl=5):
    w = make_windows(x, WindowSpec(wl))
    return w.windows, x[w.targets]


def test_mlp_learns_constant():
    W, Y = _windows(np.full((300, 2), 0.7))
    m = mlp_fit(W, Y, hidden=(8,), config=TrainConfig(epochs=50))
    assert m.train_mse < 1e-6
    np.testing.assert_allclose(m.predict(W[:3]), 0.7, atol=1e-3)


def test_mlp_deterministic(rng):
    W, Y = _windows(rng.normal(size=(120, 2)))
    cfg = TrainConfig(epochs=3, seed=9)
    a = mlp_fit(W, Y, hidden=(6, 4), config=cfg)
    b = mlp_fit(W, Y, hidden=(6, 4), config=cfg)
    for wa, wb in zip(a.net.weights, b.net.weights):
        np.testing.assert_array_equal(wa, wb)
    c = mlp_fit(W, Y, hidden=(6, 4), config=TrainConfig(epochs=3, seed=10))
    assert not np.array_equal(a.net.weights[0], c.net.weights[0])


def test_mlp_errors_and_round_trip(rng):
    W, Y = _windows(rng.normal(size=(60, 2)))
    m = mlp_fit(W, Y, hidden=(4,), config=TrainConfig(epochs=2))
    with pytest.raises(DimensionMismatch):
        m.predict(np.zeros((1, 4, 2)))
    with pytest.raises(DimensionMismatch):
        mlp_fit(W, Y[:-1])
    back = MlpEstimator.from_json(m.to_json())
    np.testing.assert_array_equal(back.predict(W), m.predict(W))
    assert back.config == m.config


def test_divergence_restarts_then_fails():
    X = np.full((10, 2), 1e200)
    with pytest.raises(NonFiniteLoss):
        train_network([2, 2], ["linear"], X, X, TrainConfig(epochs=1))


def test_dae_rank_one_reconstructs():
    rng = np.random.default_rng(0)
    t = rng.normal(size=(400, 1))
    X1 = t @ np.array([[1.0, -0.5, 0.25, 2.0]])
    cfg = TrainConfig(epochs=100, learning_rate=1e-2, batch_size=32)
    m1 = dae_fit(X1, noise_std=0.0, hidden=(), code_width=1, config=cfg)
    assert m1.train_mse < 1e-6
    full = dae_fit(rng.normal(size=(400, 4)), noise_std=0.0, hidden=(), code_width=1, config=cfg)
    holdout_rank1 = rng.normal(size=(100, 1)) @ np.array([[1.0, -0.5, 0.25, 2.0]])
    assert dae_score(full, rng.normal(size=(100, 4))).mean() > dae_score(m1, holdout_rank1).mean()


def test_dae_code_width_invariant():
    with pytest.raises(ValueError):
        dae_fit(np.zeros((10, 3)), code_width=3)
    with pytest.raises(ValueError):
        dae_fit(np.zeros((10, 3)), code_width=0)


def test_dae_round_trip(rng):
    X = rng.normal(size=(80, 6))
    m = dae_fit(X, config=TrainConfig(epochs=2))
    assert m.code_width == 3
    back = DaeModel.from_json(m.to_json())
    np.testing.assert_array_equal(dae_score(back, X), dae_score(m, X))
    assert isinstance(dae_score(m, X[0]), float)
    with pytest.raises(DimensionMismatch):
        m.reconstruct(np.zeros((1, 5)))
