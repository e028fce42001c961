import math
import time

import numpy as np
import pytest

from exprec import gp
from exprec.gp import Hyperparameters

HYPER = Hyperparameters([1.0, 0.5, 0.5], 0.3**2, 0.05**2)


def _dense_oracle(inputs, outputs, query, hyper):
    """Posterior by explicit inversion of K, independent of the Cholesky path.

    `outputs` is (m, n_dims); all dimensions share `hyper`, so the variance is common.
    """
    k = np.array([[gp.kernel(a, b, hyper) for b in inputs] for a in inputs]) + hyper.noise_variance * np.eye(len(inputs))
    k_inv = np.linalg.inv(k)
    means, variances = [], []
    for q in query:
        k_star = np.array([gp.kernel(q, a, hyper) for a in inputs])
        means.append(k_star @ k_inv @ outputs)
        variances.append(hyper.signal_variance - k_star @ k_inv @ k_star + hyper.noise_variance)
    return np.array(means), np.array(variances)


def _random_problem(rng, m, n_dims=3):
    inputs = rng.uniform(-1.5, 1.5, size=(m, 3))
    outputs = 0.2 * np.sin(2 * inputs[:, :1] + np.arange(n_dims)) + rng.normal(0, 0.05, size=(m, n_dims))
    return inputs, outputs


def test_kernel_zero_distance():
    a = np.array([0.3, -0.2, 0.1])
    assert gp.kernel(a, a, HYPER) == pytest.approx(HYPER.signal_variance)


def test_kernel_unit_distance():
    h = Hyperparameters([1.0, 1.0], 1.0, 0.01)
    assert gp.kernel(np.array([1.0, 0.0]), np.array([0.0, 0.0]), h) == pytest.approx(math.exp(-0.5), rel=1e-12)


def test_kernel_decays_far_away():
    h = Hyperparameters([1.0, 1.0], 1.0, 0.01)
    assert gp.kernel(np.array([100.0, 0.0]), np.zeros(2), h) < 1e-300


def test_kernel_symmetric():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = rng.normal(size=(2, 3))
        assert gp.kernel(a, b, HYPER) == gp.kernel(b, a, HYPER)


def test_kernel_dimension_mismatch():
    with pytest.raises(ValueError):
        gp.kernel(np.zeros(2), np.zeros(2), HYPER)
    with pytest.raises(ValueError):
        gp.kernel(np.zeros(3), np.zeros(2), HYPER)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(length_scales=[1.0, 0.0, 1.0], signal_variance=1.0, noise_variance=0.1),
        dict(length_scales=[1.0], signal_variance=0.0, noise_variance=0.1),
        dict(length_scales=[1.0], signal_variance=1.0, noise_variance=0.0),
        dict(length_scales=[], signal_variance=1.0, noise_variance=0.1),
    ],
)
def test_invalid_hyperparameters(kwargs):
    with pytest.raises(ValueError):
        Hyperparameters(**kwargs)


def test_prior_prediction():
    model = gp.prior([HYPER] * 3)
    assert model.size == 0
    for p in gp.predict(model, np.array([0.5, 0.1, -0.2])):
        assert p.mean == 0.0
        assert p.variance == pytest.approx(HYPER.signal_variance + HYPER.noise_variance)


def test_fit_with_no_points_is_the_prior():
    model = gp.fit(np.empty((0, 3)), np.empty((0, 3)), [HYPER] * 3)
    assert model.size == 0
    assert model.outputs.shape == (0, 3)
    assert model.weights.shape == (0, 3)
    batch = gp.predict(model, np.zeros((4, 3)))
    assert len(batch) == 3
    np.testing.assert_array_equal(batch[0].mean, np.zeros(4))


def test_fit_rejects_output_count_mismatch():
    with pytest.raises(ValueError):
        gp.fit(np.zeros((2, 3)), np.zeros((2, 2)), [HYPER] * 3)
    with pytest.raises(ValueError):
        gp.fit(np.empty((0, 3)), np.zeros((1, 3)), [HYPER] * 3)


def test_single_duplicated_input_fits():
    a = np.array([[0.2, 0.1, 0.0]] * 5)
    model = gp.fit(a, np.full((5, 1), 0.1), [HYPER])
    assert np.all(np.isfinite(model.weights))


def test_one_point_posterior():
    a = np.array([0.4, -0.3, 0.2])
    y = 0.25
    model = gp.fit(a[None, :], np.array([[y]]), [HYPER])
    (p,) = gp.predict(model, a)
    s2, n2 = HYPER.signal_variance, HYPER.noise_variance
    assert p.mean == pytest.approx(y * s2 / (s2 + n2), rel=1e-12)
    assert p.variance == pytest.approx(s2 - s2**2 / (s2 + n2) + n2, rel=1e-12)


def test_matches_dense_oracle():
    rng = np.random.default_rng(7)
    elapsed = 0.0
    for _ in range(100):
        m = int(rng.integers(1, 61))
        inputs, outputs = _random_problem(rng, m)
        query = rng.uniform(-2, 2, size=(5, 3))
        started = time.perf_counter()
        predictions = gp.predict(gp.fit(inputs, outputs, [HYPER] * 3), query)
        elapsed += time.perf_counter() - started
        means, variances = _dense_oracle(inputs, outputs, query, HYPER)
        for dim, p in enumerate(predictions):
            np.testing.assert_allclose(p.mean, means[:, dim], rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(p.variance, variances, rtol=1e-9)
    assert elapsed < 5.0


def test_single_query_matches_batch():
    rng = np.random.default_rng(1)
    inputs, outputs = _random_problem(rng, 25)
    model = gp.fit(inputs, outputs, [HYPER] * 3)
    query = rng.normal(size=(4, 3))
    batch = gp.predict(model, query)
    for i, q in enumerate(query):
        for dim, p in enumerate(gp.predict(model, q)):
            assert p.mean == pytest.approx(batch[dim].mean[i], rel=1e-12, abs=1e-15)
            assert p.variance == pytest.approx(batch[dim].variance[i], rel=1e-12)


def test_identical_hyperparameters_share_factor():
    rng = np.random.default_rng(2)
    inputs, outputs = _random_problem(rng, 10)
    model = gp.fit(inputs, outputs, [HYPER] * 3)
    assert model.factors[0] is model.factors[1] is model.factors[2]

    other = Hyperparameters([1.0, 0.5, 0.5], 0.3**2, 0.1**2)
    mixed = gp.fit(inputs, outputs, [HYPER, other, HYPER])
    assert mixed.factors[0] is mixed.factors[2]
    assert mixed.factors[0] is not mixed.factors[1]


def test_factor_reconstructs_covariance():
    rng = np.random.default_rng(3)
    inputs, outputs = _random_problem(rng, 40)
    model = gp.fit(inputs, outputs, [HYPER] * 3)
    chol = model.factors[0].cholesky
    np.testing.assert_allclose(chol @ chol.T, model.covariance(0) + model.factors[0].jitter * np.eye(40), atol=1e-12)


def test_adding_a_point_never_increases_variance():
    rng = np.random.default_rng(4)
    inputs, outputs = _random_problem(rng, 30)
    queries = rng.uniform(-1.5, 1.5, size=(10, 3))
    previous = gp.predict(gp.prior([HYPER]), queries)[0].variance
    for m in range(1, 31):
        current = gp.predict(gp.fit(inputs[:m], outputs[:m, :1], [HYPER]), queries)[0].variance
        assert np.all(current <= previous + 1e-9)
        previous = current


def test_prior_recovered_far_from_data():
    rng = np.random.default_rng(5)
    inputs, outputs = _random_problem(rng, 30)
    model = gp.fit(inputs, outputs, [HYPER] * 3)
    far = np.array([1.5, 1.5, 1.5]) + 10 * HYPER.length_scales + 1.0
    for p in gp.predict(model, far):
        assert abs(p.mean) < 1e-6
        assert p.variance == pytest.approx(HYPER.prior_variance, abs=1e-6)


def test_interpolates_training_outputs():
    rng = np.random.default_rng(6)
    inputs = rng.uniform(-1, 1, size=(20, 3))
    outputs = 0.2 * np.sin(inputs[:, :1]) + 0.1 * inputs[:, 1:2]
    model = gp.fit(inputs, outputs, [HYPER])
    (p,) = gp.predict(model, inputs)
    assert np.all(np.abs(p.mean - outputs[:, 0]) <= 3 * math.sqrt(HYPER.noise_variance))


def test_fit_rejects_bad_data():
    with pytest.raises(ValueError):
        gp.fit(np.zeros((3, 3)), np.zeros((3, 2)), [HYPER] * 3)
    with pytest.raises(ValueError):
        gp.fit(np.array([[0.0, np.nan, 0.0]]), np.zeros((1, 1)), [HYPER])


def test_log_likelihood_of_prior_at_mean():
    h = Hyperparameters([1.0], 0.5, 0.1)
    value = gp.log_likelihood(gp.prior([h]), np.array([[0.3]]), np.array([[0.0]]))
    assert value == pytest.approx(-0.5 * math.log(2 * math.pi * 0.6), rel=1e-12)


def test_log_likelihood_of_training_data_beats_prior():
    rng = np.random.default_rng(8)
    inputs, outputs = _random_problem(rng, 30)
    model = gp.fit(inputs, outputs, [HYPER] * 3)
    assert gp.log_likelihood(model, inputs, outputs) > gp.log_likelihood(gp.prior([HYPER] * 3), inputs, outputs)


def test_log_likelihood_matches_pointwise_sum():
    rng = np.random.default_rng(9)
    inputs, outputs = _random_problem(rng, 30)
    model = gp.fit(inputs, outputs, [HYPER] * 3)
    query, observed = _random_problem(rng, 20)
    means, variances = _dense_oracle(inputs, outputs, query, HYPER)
    expected = 0.0
    for dim in range(3):
        for mu, var, y in zip(means[:, dim], variances, observed[:, dim]):
            expected += -0.5 * math.log(2 * math.pi * var) - (y - mu) ** 2 / (2 * var)
    assert gp.log_likelihood(model, query, observed) == pytest.approx(expected, abs=1e-10)


def test_log_likelihood_needs_data():
    with pytest.raises(ValueError):
        gp.log_likelihood(gp.prior([HYPER]), np.empty((0, 3)), np.empty((0, 1)))
