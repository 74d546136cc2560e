import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm
from sklearn.base import clone
from sklearn.metrics import log_loss, mean_squared_error, roc_auc_score

from fundalloc import ConfigError, DivergedError
from fundalloc.predictor import (
    PredictionTriple,
    PredictorModel,
    RevenuePredictor,
    TrainConfig,
    auc_score,
    esj_gradient,
    esj_loss,
    evaluate,
    expected_revenue,
    forward,
    lognormal_logpdf,
    mse_loss,
    predict_matrix,
    train,
    ziln_loss,
)
from fundalloc.synth import GeneratorConfig, TrainingData, generate_training_data

seeds = st.integers(0, 2**32 - 1)
E = math.e


def batch(y, revenue, du=1, df=1):
    n = len(y)
    return TrainingData(np.zeros((n, du)), np.zeros((n, df)), np.asarray(y), np.asarray(revenue, float))


def random_batch(rng, n):
    y = (rng.random(n) < 0.4).astype(int)
    revenue = np.where(y == 1, np.expm1(np.abs(rng.normal(1.5, 1.0, n))) + 1e-3, 0.0)
    tri = PredictionTriple(rng.uniform(0.02, 0.98, n), rng.normal(1.0, 1.0, n), rng.uniform(0.2, 2.0, n))
    return batch(y, revenue), tri


def finite_difference(model, x, y, revenue, eps, step=1e-5):
    grads = []
    for p in model.params:
        g = np.empty_like(p)
        for j in range(p.size):
            orig = p.flat[j]
            p.flat[j] = orig + step
            up = model.compute_loss(x, y, revenue, "esj", eps)
            p.flat[j] = orig - step
            down = model.compute_loss(x, y, revenue, "esj", eps)
            p.flat[j] = orig
            g.flat[j] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def perturbed_model(rng, du=3, df=2, hidden=(5, 4)):
    model = PredictorModel.initialize(du, df, hidden=hidden, seed=int(rng.integers(2**31)))
    for p in model.params:
        p += rng.normal(0.0, 0.3, p.shape)
    return model


# densities and losses -----------------------------------------------------------

def test_logpdf_examples():
    assert lognormal_logpdf(0.0, 0.0, 1.0, 1.0) == pytest.approx(-0.918939, abs=1e-6)
    assert lognormal_logpdf(1.0, 1.0, 1.0, E) == pytest.approx(-1.918939, abs=1e-6)


@given(st.floats(0, 8), st.floats(-3, 6), st.floats(0.05, 4))
def test_logpdf_matches_normal_density(v, mu, sigma):
    y_v = math.exp(v)
    expected = norm.logpdf(v, loc=mu, scale=sigma) - math.log(y_v)
    assert lognormal_logpdf(v, mu, sigma, y_v) == pytest.approx(expected, abs=1e-10)


def test_logpdf_rejects_sigma():
    with pytest.raises(ConfigError) as err:
        lognormal_logpdf(0.0, 0.0, 0.0, 1.0)
    assert err.value.code == "NONPOSITIVE_SIGMA"


def test_loss_examples():
    pos = batch([1], [E - 1])
    tri = PredictionTriple([0.5], [1.0], [1.0])
    assert esj_loss(pos, tri) == pytest.approx(2.612086, abs=1e-6)
    assert ziln_loss(pos, tri) == pytest.approx(2.612086, abs=1e-6)
    neg = batch([0], [0.0])
    tri = PredictionTriple([0.25], [1.0], [1.0])
    assert esj_loss(neg, tri, counterfactual=False) == pytest.approx(0.287682, abs=1e-6)
    assert ziln_loss(neg, tri) == pytest.approx(0.287682, abs=1e-6)


def test_loss_errors():
    with pytest.raises(ConfigError) as err:
        esj_loss(batch([], []), PredictionTriple([], [], []))
    assert err.value.code == "EMPTY_BATCH"
    with pytest.raises(ConfigError) as err:
        esj_loss(batch([0, 1], [0, 1]), PredictionTriple([0.5], [0], [1]))
    assert err.value.code == "DIM_MISMATCH"


@given(seeds, st.integers(1, 64))
def test_esj_without_counterfactual_is_ziln(seed, n):
    b, tri = random_batch(np.random.default_rng(seed), n)
    assert abs(esj_loss(b, tri, counterfactual=False) - ziln_loss(b, tri)) < 1e-9


@given(seeds, st.integers(1, 64), st.sampled_from([0.0, 0.1, 1.0, 10.0]))
def test_counterfactual_never_raises_negative_loss(seed, n, eps):
    b, tri = random_batch(np.random.default_rng(seed), n)
    neg = np.flatnonzero(b.y == 0)
    for i in neg:
        one = b.subset([i])
        t = PredictionTriple(tri.p_c[[i]], tri.mu[[i]], tri.sigma[[i]])
        assert esj_loss(one, t, eps) <= esj_loss(one, t, eps, counterfactual=False) + 1e-15


@given(seeds, st.integers(1, 40))
def test_esj_reorder_and_duplicate_invariant(seed, n):
    rng = np.random.default_rng(seed)
    b, tri = random_batch(rng, n)
    base = esj_loss(b, tri)
    perm = rng.permutation(n)
    shuffled = PredictionTriple(tri.p_c[perm], tri.mu[perm], tri.sigma[perm])
    assert esj_loss(b.subset(perm), shuffled) == pytest.approx(base, rel=1e-12)
    twice = np.concatenate([np.arange(n), np.arange(n)])
    doubled = PredictionTriple(tri.p_c[twice], tri.mu[twice], tri.sigma[twice])
    assert esj_loss(b.subset(twice), doubled) == pytest.approx(base, rel=1e-12)


def test_negative_branch_stable_far_from_zero():
    b = batch([0], [0.0])
    tri = PredictionTriple([0.3], [200.0], [0.01])
    assert esj_loss(b, tri) == pytest.approx(-math.log(0.7), rel=1e-12)


def test_mse_examples():
    v = np.log1p(np.array([3.0, 0.0, 5.0]))
    b = batch([1, 0, 1], [3.0, 0.0, 5.0])
    tri = PredictionTriple([1 - 1e-12, 1e-12, 1 - 1e-12], v, [1, 1, 1])
    assert mse_loss(b, tri) == pytest.approx(0.0, abs=1e-9)
    tri = PredictionTriple([0.5], [math.log(4.0) + 1.0], [1.0])
    assert mse_loss(batch([1], [3.0]), tri) == pytest.approx(math.log(2) + 1.0)


@given(seeds, st.integers(2, 64))
def test_mse_matches_two_term_oracle(seed, n):
    b, tri = random_batch(np.random.default_rng(seed), n)
    pos = b.y == 1
    expected = log_loss(b.y, tri.p_c, labels=[0, 1])
    if pos.any():
        expected += mean_squared_error(np.log1p(b.revenue[pos]), tri.mu[pos])
    assert mse_loss(b, tri) == pytest.approx(expected, rel=1e-9)


# gradients -------------------------------------------------------------------------

@given(seeds, st.integers(1, 16), st.sampled_from([0.0, 0.05, 1.0, 3.0]))
def test_gradient_matches_finite_differences(seed, n, eps):
    rng = np.random.default_rng(seed)
    model = perturbed_model(rng)
    x = rng.normal(size=(n, 5))
    y = (rng.random(n) < 0.5).astype(int)
    revenue = np.where(y == 1, np.expm1(np.abs(rng.normal(1, 1, n))) + 1e-2, 0.0)
    data = TrainingData(x[:, :3], x[:, 3:], y, revenue)
    analytic = esj_gradient(data, model, eps)
    numeric = finite_difference(model, x, y, revenue, eps)
    for a, f in zip(analytic, numeric):
        diff = np.abs(a - f)
        scale = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-300)
        assert np.all((diff <= 1e-8) | (diff / scale < 1e-4))


@given(seeds, st.integers(1, 20))
def test_gradient_unchanged_by_duplicating_batch(seed, n):
    rng = np.random.default_rng(seed)
    model = perturbed_model(rng)
    b, _ = random_batch(rng, n)
    data = TrainingData(rng.normal(size=(n, 3)), rng.normal(size=(n, 2)), b.y, b.revenue)
    twice = data.subset(np.concatenate([np.arange(n), np.arange(n)]))
    for g1, g2 in zip(esj_gradient(data, model), esj_gradient(twice, model)):
        assert np.allclose(g1, g2, rtol=1e-10, atol=1e-14)


def test_gradient_zero_at_stationary_bias():
    # all positives, zero weights: the mu bias is stationary at the mean of v
    revenue = np.array([1.0, 4.0, 9.0])
    model = PredictorModel.zeros_like(PredictorModel.initialize(1, 1, hidden=(3,)))
    model.params[-1][1] = np.log1p(revenue).mean()
    data = batch([1, 1, 1], revenue)
    assert abs(esj_gradient(data, model)[-1][1]) < 1e-12


# forward pass and expected revenue ---------------------------------------------------

def test_zero_model_outputs():
    model = PredictorModel.zeros_like(PredictorModel.initialize(2, 3))
    tri = forward(model, np.ones(2), np.ones(3))
    assert tri.p_c[0] == 0.5 and tri.mu[0] == 0.0
    assert tri.sigma[0] == pytest.approx(math.log(2) + 1e-3, rel=1e-15)


@given(seeds)
def test_forward_ranges_and_determinism(seed):
    rng = np.random.default_rng(seed)
    model = perturbed_model(rng)
    for p in model.params:
        p *= 5
    xu, xf = rng.normal(size=(50, 3)) * 3, rng.normal(size=(50, 2)) * 3
    a, b = forward(model, xu, xf), forward(model, xu, xf)
    assert np.array_equal(a.p_c, b.p_c) and np.array_equal(a.sigma, b.sigma)
    assert np.all((a.p_c >= 0) & (a.p_c <= 1))
    assert np.all(a.sigma >= model.sigma_floor)
    assert np.all(np.isfinite(a.mu))


def test_forward_dim_mismatch():
    model = PredictorModel.initialize(2, 3)
    with pytest.raises(ConfigError) as err:
        forward(model, np.ones((1, 3)), np.ones((1, 3)))
    assert err.value.code == "DIM_MISMATCH"


def test_expected_revenue_examples():
    assert expected_revenue(PredictionTriple([0.0], [3.0], [1.0])) == 0.0
    assert expected_revenue(PredictionTriple([1.0], [0.0], [1e-3])) == pytest.approx(1.0, abs=1e-6)
    assert expected_revenue(PredictionTriple([0.2], [2.0], [1.0])) == pytest.approx(
        0.2 * math.exp(2.5), rel=1e-15)
    assert expected_revenue(PredictionTriple([1.0], [0.0], [1e-3]), shifted=False) == pytest.approx(0.0, abs=1e-6)


@given(st.floats(0.01, 0.98), st.floats(-3, 3), st.floats(0.01, 2.0), st.floats(0.001, 0.5))
def test_expected_revenue_monotone(p, mu, sigma, step):
    base = expected_revenue(PredictionTriple([p], [mu], [sigma]))
    assert expected_revenue(PredictionTriple([p + step / 100], [mu], [sigma])) > base
    assert expected_revenue(PredictionTriple([p], [mu + step], [sigma])) > base
    assert expected_revenue(PredictionTriple([p], [mu], [sigma + step])) > base


def test_predict_matrix():
    rng = np.random.default_rng(3)
    model = perturbed_model(rng)
    cu, fu = rng.normal(size=(3, 3)), rng.normal(size=(2, 2))
    mat = predict_matrix(model, cu, fu)
    assert mat.shape == (3, 2)
    for i in range(3):
        for j in range(2):
            assert mat.values[i, j] == expected_revenue(forward(model, cu[[i]], fu[[j]]))
    masked = predict_matrix(model, cu, fu, [1, 2, 3], [2, 3])
    assert np.array_equal(masked.eligible, [[False, False], [True, False], [True, True]])
    model.params[-1][0] = -1e4
    assert np.all(predict_matrix(model, cu, fu).values == 0.0)
    with pytest.raises(ConfigError) as err:
        predict_matrix(model, cu[:, :2], fu)
    assert err.value.code == "DIM_MISMATCH"


def test_model_json_round_trip(tmp_path):
    model = perturbed_model(np.random.default_rng(0))
    model.epsilon = 0.5
    path = tmp_path / "m.json"
    model.save(path)
    again = PredictorModel.load(path)
    assert again.to_dict() == model.to_dict()
    x = np.random.default_rng(1).normal(size=(4, 5))
    assert np.array_equal(forward(again, x).mu, forward(model, x).mu)


# metrics --------------------------------------------------------------------------

def test_auc_examples():
    assert auc_score([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0
    rng = np.random.default_rng(0)
    y = np.repeat([0, 1], 10_000)
    assert abs(auc_score(y, rng.random(20_000)) - 0.5) < 0.02
    with pytest.raises(ConfigError) as err:
        auc_score([1, 1], [0.2, 0.3])
    assert err.value.code == "SINGLE_CLASS"


@given(seeds, st.integers(4, 200))
def test_auc_matches_sklearn(seed, n):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    y[:2] = [0, 1]
    scores = rng.integers(0, 5, n).astype(float)  # many ties
    assert auc_score(y, scores) == pytest.approx(roc_auc_score(y, scores), abs=1e-12)


def test_constant_zero_mae_is_mean_v():
    data = generate_training_data(GeneratorConfig(n_samples=2000, seed=1))
    model = PredictorModel.zeros_like(PredictorModel.initialize(4, 3))
    _, _, mae = evaluate(model, data)
    assert mae == pytest.approx(np.log1p(data.revenue).mean(), rel=1e-12)


# training ----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_data():
    return generate_training_data(GeneratorConfig(n_samples=20_000, seed=5))


def test_validation_loss_falls_over_first_epochs(small_data):
    cfg = TrainConfig(epochs=4, seed=1, learning_rate=1e-3)
    _, hist = train(small_data, cfg, return_history=True)
    v = hist.val_loss
    assert v[0] > v[1] > v[2] > v[3] > v[4]


def test_zero_learning_rate_keeps_parameters(small_data):
    still = train(small_data, TrainConfig(epochs=2, learning_rate=0.0, seed=4))
    start = train(small_data, TrainConfig(epochs=0, seed=4))
    assert all(np.array_equal(a, b) for a, b in zip(still.params, start.params))


def test_training_is_deterministic(small_data):
    cfg = TrainConfig(epochs=2, seed=9)
    assert train(small_data, cfg).to_dict() == train(small_data, cfg).to_dict()


def test_divergence_detected():
    data = TrainingData(np.full((8, 1), 1e300), np.full((8, 1), 1e300),
                        np.array([0, 1] * 4), np.array([0.0, 2.0] * 4))
    with pytest.raises(DivergedError) as err:
        train(data, TrainConfig(epochs=1, batch_size=4, validation_fraction=0.0))
    assert err.value.code == "DIVERGED" and err.value.exit_code == 5


def test_train_config_validation():
    for bad in ({"epsilon": -1.0}, {"sigma_floor": 0.0}, {"loss": "l2"}, {"batch_size": 0}):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


@pytest.mark.parametrize("loss", ["esj", "ziln", "mse"])
def test_every_loss_trains(small_data, loss):
    model = train(small_data, TrainConfig(loss=loss, epochs=1))
    auc, mse, mae = evaluate(model, small_data)
    assert auc > 0.55 and np.isfinite(mse) and np.isfinite(mae)


def test_estimator_api(small_data):
    est = RevenuePredictor(customer_dim=4, epochs=3, hidden=(8,))
    params = est.get_params()
    assert params["loss"] == "esj" and params["hidden"] == (8,)
    assert clone(est).get_params() == params
    X = small_data.features
    est.fit(X, small_data.revenue)
    pred = est.predict(X[:5])
    assert pred.shape == (5,) and np.all(pred > 0)
    assert est.predict_proba(X[:3]).shape == (3, 2)
    assert 0.5 < est.score(X, small_data.revenue) <= 1.0
    with pytest.raises(ConfigError):
        est.predict(X[:, :3])
