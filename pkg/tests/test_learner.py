"""MLP field, objectives, training loop, loss profile, checkpoints."""

import json
import math

import numpy as np
import pytest

from driftlab import (
    AnalyticMixtureField,
    ConfigError,
    DomainError,
    GaussianMixture,
    LossProfile,
    MLPField,
    NonFiniteError,
    Prediction,
    ToyDataset,
    TrainConfig,
    TrainObjective,
    UnconditionalModelError,
    default_time_window,
    estimate_loss_profile,
    get_preset,
    interpolant_derivative,
    interpolate,
    load_checkpoint,
    loss_score,
    loss_score_weighted,
    loss_velocity,
    save_checkpoint,
    time_features,
    train,
    velocity_from_score,
)

from helpers import relative_error


# ---------------------------------------------------------------------------
# Time features and architecture plumbing
# ---------------------------------------------------------------------------


def test_time_features_values_and_shape():
    feats = time_features(np.array([0.0, 0.3]), count=4, freq_min=1.0,
                          freq_max=8.0)
    assert feats.shape == (2, 8)
    freqs = np.geomspace(1.0, 8.0, 4)
    assert np.array_equal(feats[0], np.concatenate([np.zeros(4), np.ones(4)]))
    assert np.allclose(feats[1, :4], np.sin(0.3 * freqs))
    assert np.allclose(feats[1, 4:], np.cos(0.3 * freqs))


def test_parameter_count_default_architecture(linear):
    model = MLPField(1, linear)
    # 33 inputs (x + 16 sin + 16 cos) -> 128 -> 128 -> 128 -> 1, biases included.
    assert model.n_parameters == 37505
    conditional = MLPField(2, linear, num_classes=9)
    # 42 inputs (embedding adds 8), plus a 10-row embedding table.
    assert conditional.n_parameters == (42 * 128 + 128) + 2 * (128 * 128 + 128) \
        + (128 * 2 + 2) + 10 * 8


def test_parameters_vector_is_live(linear, rng):
    model = MLPField(1, linear, widths=(8,), seed=3)
    x = rng.standard_normal((5, 1))
    before = model.evaluate(x, 0.4)
    assert not np.allclose(before, 0.0)
    model.parameters[:] = 0.0
    assert np.array_equal(model.evaluate(x, 0.4), np.zeros((5, 1)))


def test_evaluate_shape_and_label_validation(linear):
    model = MLPField(2, linear, widths=(4,), num_classes=3, seed=0)
    with pytest.raises(DomainError):
        model.evaluate(np.zeros((5, 3)), 0.5)
    with pytest.raises(DomainError):
        model.evaluate(np.zeros((5, 2)), np.zeros(4))
    with pytest.raises(DomainError):
        model.evaluate(np.zeros((5, 2)), 0.5, y=np.array([0, 1]))
    with pytest.raises(DomainError):
        model.evaluate(np.zeros((5, 2)), 0.5, y=7)
    out = model.evaluate(np.zeros((5, 2)), 0.5, y=3)  # null token is a valid id
    assert out.shape == (5, 2)
    plain = MLPField(2, linear, widths=(4,), seed=0)
    with pytest.raises(UnconditionalModelError):
        plain.evaluate(np.zeros((5, 2)), 0.5, y=1)


def test_vector_input_round_trip(linear):
    model = MLPField(2, linear, widths=(4,), seed=1)
    single = model.evaluate(np.array([0.3, -0.2]), 0.5)
    batched = model.evaluate(np.array([[0.3, -0.2]]), 0.5)
    assert single.shape == (2,)
    assert np.array_equal(single, batched[0])


# ---------------------------------------------------------------------------
# Objectives: finite-difference oracle and exact baselines
# ---------------------------------------------------------------------------


def _fd_batch(rng, n=5, d=2, null_id=3):
    x_star = rng.standard_normal((n, d))
    eps = rng.standard_normal((n, d))
    t = rng.uniform(0.1, 0.9, size=n)
    y = np.array([0, 1, 2, 0, null_id])
    return x_star, eps, t, y


@pytest.mark.parametrize("loss_fn,prediction", [
    (loss_velocity, Prediction.VELOCITY),
    (loss_score, Prediction.SCORE),
    (loss_score_weighted, Prediction.SCORE),
])
def test_gradient_matches_finite_differences(linear, rng, loss_fn, prediction):
    model = MLPField(2, linear, prediction=prediction, widths=(8, 8),
                     num_classes=3, seed=11)
    batch = _fd_batch(rng)
    _, grad = loss_fn(model, batch)
    assert grad.shape == model.parameters.shape

    def loss_at(params):
        clone = MLPField(2, linear, prediction=prediction, widths=(8, 8),
                         num_classes=3, parameters=params)
        return loss_fn(clone, batch)[0]

    coords = list(rng.choice(model.n_parameters, size=25, replace=False))
    coords += [model.n_parameters - 1, model.n_parameters - 10,
               model.n_parameters - 25]  # embedding-table entries
    h = 1e-4
    for k in coords:
        up = model.parameters.copy()
        up[k] += h
        down = model.parameters.copy()
        down[k] -= h
        fd = (loss_at(up) - loss_at(down)) / (2 * h)
        assert abs(fd - grad[k]) <= 1e-4 * max(abs(fd), abs(grad[k])) + 1e-7, \
            f"coordinate {k}: fd={fd!r} analytic={grad[k]!r}"


def test_weighted_score_objective_equals_velocity_of_converted_field(linear, rng):
    model = MLPField(1, linear, prediction=Prediction.SCORE, widths=(8, 8),
                     seed=2)
    n = 1000
    x_star = rng.standard_normal((n, 1)) * 2.0
    eps = rng.standard_normal((n, 1))
    t = rng.uniform(0.05, 0.9, size=n)
    weighted, _ = loss_score_weighted(model, (x_star, eps, t, None))

    x_t = interpolate(linear, x_star, eps, t)
    out = model.evaluate(x_t, t)
    v = velocity_from_score(linear, out, x_t, t)
    target = interpolant_derivative(linear, x_star, eps, t)
    per_sample_velocity_loss = np.sum((v - target) ** 2, axis=1)
    lam = linear.lambda_weight(t)[:, None]
    sig = linear.sigma(t)[:, None]
    per_sample_weighted = np.sum((lam * (sig * out + eps)) ** 2, axis=1)
    assert relative_error(per_sample_weighted,
                          per_sample_velocity_loss).max() < 1e-8
    assert relative_error(weighted, float(np.mean(per_sample_weighted))) < 1e-12


def test_zero_model_losses_reduce_to_target_norms(linear, rng):
    n = 400
    x_star = rng.standard_normal((n, 1)) * 1.5
    eps = rng.standard_normal((n, 1))
    t = rng.uniform(0.1, 0.9, size=n)

    def zero_model(prediction):
        probe = MLPField(1, linear, prediction=prediction, widths=(4,))
        return MLPField(1, linear, prediction=prediction, widths=(4,),
                        parameters=np.zeros(probe.n_parameters))

    target = interpolant_derivative(linear, x_star, eps, t)
    loss_v, grad = zero_model(Prediction.VELOCITY), None
    loss_v, grad = loss_velocity(loss_v, (x_star, eps, t, None))
    assert math.isclose(loss_v, float(np.mean(np.sum(target ** 2, axis=1))),
                        rel_tol=1e-12)
    loss_s, _ = loss_score(zero_model(Prediction.SCORE), (x_star, eps, t, None))
    assert math.isclose(loss_s, float(np.mean(np.sum(eps ** 2, axis=1))),
                        rel_tol=1e-12)
    loss_w, _ = loss_score_weighted(zero_model(Prediction.SCORE),
                                    (x_star, eps, t, None))
    lam = linear.lambda_weight(t)[:, None]
    assert math.isclose(loss_w, float(np.mean(np.sum((lam * eps) ** 2, axis=1))),
                        rel_tol=1e-12)


def test_exact_field_attains_the_conditional_variance_floor(linear, rng):
    # The exact marginal velocity is the conditional mean of the per-sample
    # target, so its expected loss equals E|target|^2 - E|field|^2; the
    # per-sample cross term has mean zero, which pins the identity within
    # Monte-Carlo error.
    gmm = get_preset("two-gauss-1d")
    model = AnalyticMixtureField(gmm, linear, prediction=Prediction.VELOCITY)
    dataset = ToyDataset(gmm=gmm)
    n = 200_000
    x_star, _ = dataset.resample(rng, n)
    eps = rng.standard_normal((n, 1))
    t = rng.uniform(0.02, 0.98, size=n)
    loss, grad = loss_velocity(model, (x_star, eps, t, None))
    assert grad is None
    x_t = interpolate(linear, x_star, eps, t)
    v = model.evaluate(x_t, t)
    target = interpolant_derivative(linear, x_star, eps, t)
    delta = (np.sum((target - v) ** 2, axis=1)
             - np.sum(target ** 2, axis=1) + np.sum(v ** 2, axis=1))
    se = float(np.std(delta, ddof=1) / math.sqrt(n))
    assert abs(float(np.mean(delta))) < 4 * se
    decomposed = float(np.mean(np.sum(target ** 2, axis=1))
                       - np.mean(np.sum(v ** 2, axis=1)))
    assert abs(loss - decomposed) < 4 * se


def test_losses_reject_mismatched_prediction_kind(linear, rng):
    velocity_model = MLPField(1, linear, widths=(4,))
    score_model = MLPField(1, linear, prediction=Prediction.SCORE, widths=(4,))
    batch = (rng.standard_normal((3, 1)), rng.standard_normal((3, 1)),
             rng.uniform(0.1, 0.9, 3), None)
    with pytest.raises(ConfigError):
        loss_velocity(score_model, batch)
    with pytest.raises(ConfigError):
        loss_score(velocity_model, batch)
    with pytest.raises(ConfigError):
        loss_score_weighted(velocity_model, batch)
    with pytest.raises(DomainError):
        loss_velocity(velocity_model, (np.zeros((3, 1)), np.zeros((2, 1)),
                                       np.zeros(3), None))


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def test_training_reduces_the_loss_and_is_deterministic(linear):
    config = TrainConfig(objective="velocity", schedule=linear, steps=80,
                         batch=64, seed=3, profile_bins=4, profile_draws=200)
    data = get_preset("two-gauss-1d")
    result = train(config, data)
    assert result.curve.shape == (80, 2)
    assert np.array_equal(result.curve[:, 0], np.arange(80))
    early = float(np.mean(result.curve[:10, 1]))
    late = float(np.mean(result.curve[-10:, 1]))
    assert late < early
    again = train(config, data)
    assert np.array_equal(result.model.parameters, again.model.parameters)
    assert np.array_equal(result.curve, again.curve)
    assert np.array_equal(result.profile.values, again.profile.values)
    assert result.profile.window == config.window()


def test_conditional_training_runs_and_embeds_classes(linear):
    config = TrainConfig(objective="velocity", schedule=linear, steps=40,
                         batch=64, seed=1, conditional=True,
                         profile_bins=3, profile_draws=100)
    result = train(config, get_preset("grid-9"))
    model = result.model
    assert model.conditioning is not None
    assert model.conditioning.num_classes == 9
    out_marginal = model.evaluate(np.zeros((2, 2)), 0.5)
    out_class = model.evaluate(np.zeros((2, 2)), 0.5, y=4)
    assert not np.allclose(out_marginal, out_class)


def test_conditional_training_requires_labels(linear, rng):
    unlabeled = ToyDataset(samples=rng.standard_normal((32, 1)))
    config = TrainConfig(objective="velocity", schedule=linear, steps=5,
                         conditional=True)
    with pytest.raises(ConfigError):
        train(config, unlabeled)


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_non_finite_training_loss_reports_the_step(linear):
    huge = ToyDataset(samples=np.full((16, 1), 1e200))
    config = TrainConfig(objective="velocity", schedule=linear, steps=5,
                         batch=8, seed=0, profile_bins=2, profile_draws=10)
    with pytest.raises(NonFiniteError) as excinfo:
        train(config, huge)
    assert excinfo.value.step == 0


def test_default_time_window_clips_only_singular_endpoints(all_schedules):
    by_name = {schedule.name: schedule for schedule in all_schedules}
    table = {
        ("velocity", "linear"): (0.0, 1.0),
        ("velocity", "gvp"): (0.0, 1.0),
        ("velocity", "sbdm-vp"): (1e-5, 1.0),
        ("score", "linear"): (0.0, 1.0),
        ("score", "gvp"): (0.0, 1.0),
        ("score", "sbdm-vp"): (0.0, 1.0),
        ("weighted-score", "linear"): (0.0, 1.0 - 1e-5),
        ("weighted-score", "gvp"): (0.0, 1.0 - 1e-5),
        ("weighted-score", "sbdm-vp"): (1e-5, 1.0),
    }
    for (objective, name), expected in table.items():
        assert default_time_window(TrainObjective(objective), by_name[name]) \
            == expected


def test_train_config_validation_and_window_override(linear):
    with pytest.raises(ConfigError):
        TrainConfig(objective="velocity", schedule=linear, steps=0)
    with pytest.raises(ConfigError):
        TrainConfig(objective="velocity", schedule=linear, steps=5,
                    learning_rate=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(objective="velocity", schedule=linear, steps=5,
                    label_dropout=1.5)
    with pytest.raises(ValueError):
        TrainConfig(objective="not-a-loss", schedule=linear, steps=5)
    config = TrainConfig(objective="velocity", schedule=linear, steps=5,
                         t_lo=0.2, t_hi=0.8)
    assert config.window() == (0.2, 0.8)
    bad = TrainConfig(objective="velocity", schedule=linear, steps=5,
                      t_lo=0.9, t_hi=0.1)
    with pytest.raises(ConfigError):
        bad.window()


# ---------------------------------------------------------------------------
# Loss profile
# ---------------------------------------------------------------------------


def test_loss_profile_lookup_is_piecewise_constant_and_clamped():
    profile = LossProfile(np.array([0.0, 0.5, 1.0]), np.array([2.0, 3.0]))
    assert profile(0.25) == 2.0
    assert profile(0.75) == 3.0
    assert profile(0.5) == 3.0  # right-continuous at interior edges
    assert profile(-1.0) == 2.0  # clamped below
    assert profile(2.0) == 3.0  # clamped above
    assert np.array_equal(profile(np.array([0.1, 0.9])), [2.0, 3.0])
    assert profile.window == (0.0, 1.0)


def test_loss_profile_validation():
    with pytest.raises(ConfigError):
        LossProfile(np.array([0.0, 1.0]), np.array([1.0, 2.0]))
    with pytest.raises(ConfigError):
        LossProfile(np.array([0.0, 0.5, 0.5]), np.array([1.0, 2.0]))
    with pytest.raises(ConfigError):
        LossProfile(np.array([0.0, 0.5, 1.0]), np.array([1.0, -2.0]))
    with pytest.raises(ConfigError):
        LossProfile(np.array([0.0, 0.5, 1.0]), np.array([1.0, np.inf]))


def test_loss_profile_file_round_trip_is_exact(tmp_path):
    edges = np.linspace(0.0, 1.0 - 1e-5, 8)
    values = np.abs(np.sin(np.arange(7) + 0.123)) * 1.7e-3
    profile = LossProfile(edges, values)
    path = str(tmp_path / "profile.txt")
    profile.save(path)
    loaded = LossProfile.load(path)
    assert np.array_equal(loaded.edges, profile.edges)
    assert np.array_equal(loaded.values, profile.values)
    profile.save(path)  # re-save is byte-identical
    first = open(path).read()
    profile.save(path)
    assert open(path).read() == first


def test_loss_profile_load_errors(tmp_path):
    missing = str(tmp_path / "nope.txt")
    with pytest.raises(ConfigError) as excinfo:
        LossProfile.load(missing)
    assert "nope.txt" in str(excinfo.value)
    bad_header = tmp_path / "bad.txt"
    bad_header.write_text("just some text\n0 1 2\n")
    with pytest.raises(ConfigError):
        LossProfile.load(str(bad_header))
    empty = tmp_path / "empty.txt"
    empty.write_text("# loss-profile bins=0 t_lo=0.0 t_hi=1.0\n")
    with pytest.raises(ConfigError):
        LossProfile.load(str(empty))


def test_profile_of_exact_field_matches_closed_form(linear):
    # For a single centered Gaussian with variance s2, the exact per-time
    # loss of the exact velocity field is the conditional variance
    #   L(t) = (ad^2 s2 + sd^2) - (a ad s2 + s sd)^2 / (a^2 s2 + s^2),
    # so the Monte-Carlo profile must land on its bin averages.
    s2 = 2.5
    gmm = GaussianMixture([1.0], [[0.0]], [[s2]])
    model = AnalyticMixtureField(gmm, linear, prediction=Prediction.VELOCITY)
    draws = 20_000
    profile = estimate_loss_profile(model, ToyDataset(gmm=gmm), bins=8,
                                    draws_per_bin=draws, window=(0.05, 0.95),
                                    seed=5)

    def exact(t):
        a, s = 1.0 - t, t
        ad, sd = -1.0, 1.0
        total = ad * ad * s2 + sd * sd
        cross = a * ad * s2 + s * sd
        return total - cross * cross / (a * a * s2 + s * s)

    for b in range(8):
        grid = np.linspace(profile.edges[b], profile.edges[b + 1], 4001)
        bin_mean = float(np.trapezoid(exact(grid), grid)
                         / (profile.edges[b + 1] - profile.edges[b]))
        # chi-square spread of squared residuals: SE ~= L * sqrt(2/draws)
        assert abs(profile.values[b] - bin_mean) \
            < 6.0 * bin_mean * math.sqrt(2.0 / draws)


def test_profile_window_is_clipped_for_score_models(linear, vp):
    score_linear = MLPField(1, linear, prediction=Prediction.SCORE, widths=(4,),
                            seed=0)
    profile = estimate_loss_profile(score_linear, get_preset("two-gauss-1d"),
                                    bins=3, draws_per_bin=50, window=(0.0, 1.0))
    assert profile.edges[0] == 0.0
    assert profile.edges[-1] == 1.0 - 1e-5
    score_vp = MLPField(1, vp, prediction=Prediction.SCORE, widths=(4,), seed=0)
    profile_vp = estimate_loss_profile(score_vp, get_preset("two-gauss-1d"),
                                       bins=3, draws_per_bin=50,
                                       window=(0.0, 1.0))
    assert profile_vp.edges[0] == 1e-5
    assert profile_vp.edges[-1] == 1.0 - 1e-5


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip_is_bit_exact(tmp_path, gvp):
    model = MLPField(2, gvp, prediction=Prediction.SCORE, widths=(8, 4),
                     num_classes=3, seed=9)
    model.parameters[:] += np.pi * 1e-3  # non-trivial, full-precision values
    path = str(tmp_path / "model.json")
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert np.array_equal(loaded.parameters, model.parameters)
    assert loaded.to_config() == model.to_config()
    assert loaded.schedule.name == "gvp"
    x = np.linspace(-1, 1, 10).reshape(5, 2)
    assert np.array_equal(loaded.evaluate(x, 0.37, y=2),
                          model.evaluate(x, 0.37, y=2))
    first = open(path, "rb").read()
    save_checkpoint(loaded, path)
    assert open(path, "rb").read() == first


def test_checkpoint_load_errors(tmp_path):
    missing = str(tmp_path / "missing.json")
    with pytest.raises(ConfigError) as excinfo:
        load_checkpoint(missing)
    assert "missing.json" in str(excinfo.value)
    garbled = tmp_path / "garbled.json"
    garbled.write_text("{not json")
    with pytest.raises(ConfigError):
        load_checkpoint(str(garbled))
    alien = tmp_path / "alien.json"
    alien.write_text(json.dumps({"format": "something-else", "version": 1}))
    with pytest.raises(ConfigError):
        load_checkpoint(str(alien))
