"""Policy heads: NLL math, normalization, ensemble training contracts."""

import math

import numpy as np
import pytest

from conftest import flatten_mlp
from uqnav import dataset, nn, perception, policy
from uqnav.policy import (CMD_SCALE, EnsembleParams, GaussianPrediction,
                          PolicyTrainConfig, VelocityCommand)
from uqnav.rng import stream


def test_command_scale_limits():
    assert np.array_equal(CMD_SCALE, [3.0, 3.0, 3.0, 1.5])
    cmd = VelocityCommand(5.0, -4.0, 1.0, 2.0).clamped()
    assert cmd.as_array().tolist() == [3.0, -3.0, 1.0, 1.5]
    with pytest.raises(ValueError):
        VelocityCommand(np.nan, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        VelocityCommand.from_array(np.zeros(3))


def test_nll_hand_values():
    zero = VelocityCommand(0.0, 0.0, 0.0, 0.0)
    unit = GaussianPrediction(np.zeros(4), np.ones(4))
    assert policy.heteroscedastic_nll(unit, zero) == 0.0
    # var = e^2 everywhere: mean 0.5*log(e^2) = 1.
    wide = GaussianPrediction(np.zeros(4), np.full(4, math.e ** 2))
    assert abs(policy.heteroscedastic_nll(wide, zero) - 1.0) < 1e-12
    # Unit residual at unit variance contributes 1/2 per dimension.
    off = GaussianPrediction(np.ones(4), np.ones(4))
    assert abs(policy.heteroscedastic_nll(off, zero) - 0.5) < 1e-12


def test_nll_minimized_when_variance_matches_residual():
    # For fixed residual e the per-dim NLL is minimized at var = e^2.
    target = VelocityCommand(0.0, 0.0, 0.0, 0.0)
    resid = math.e
    best = None
    for var in np.geomspace(0.1, 100.0, 401):
        pred = GaussianPrediction(np.full(4, resid), np.full(4, var))
        val = policy.heteroscedastic_nll(pred, target)
        if best is None or val < best[0]:
            best = (val, var)
    assert abs(best[1] - math.e ** 2) / math.e ** 2 < 0.02


def test_prediction_validation():
    with pytest.raises(ValueError):
        GaussianPrediction(np.zeros(4), np.zeros(4))  # zero variance
    with pytest.raises(ValueError):
        GaussianPrediction(np.zeros(4), np.array([1.0, 1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        GaussianPrediction(np.zeros(3), np.ones(4))
    p = GaussianPrediction(np.zeros(2), np.array([4.0, 9.0]))
    assert np.array_equal(p.std, [2.0, 3.0])


def test_zero_member_predicts_standard_normal():
    dims = policy.MEMBER_DIMS
    weights = tuple(np.zeros((dims[i + 1], dims[i])) for i in range(len(dims) - 1))
    biases = tuple(np.zeros(d) for d in dims[1:])
    member = nn.Mlp(weights, biases, ("relu", "relu", "identity"))
    pred = policy.policy_forward(member, np.ones(dims[0]))
    assert np.array_equal(pred.mean, np.zeros(4))
    assert np.array_equal(pred.variance, np.ones(4))
    phys = policy.denormalize(pred)
    assert np.array_equal(phys.variance, CMD_SCALE ** 2)


def test_variance_clamp_bounds():
    rng = stream(0, "policy", "clamp")
    member = policy.init_member(rng)
    bias = member.biases[-1].copy()
    bias[4:] = 1e9
    hot = nn.Mlp(member.weights, member.biases[:-1] + (bias,), member.activations)
    pred = policy.policy_forward(hot, rng.standard_normal(10))
    assert np.allclose(pred.variance, math.exp(nn.LOGVAR_MAX))
    bias[4:] = -1e9
    cold = nn.Mlp(member.weights, member.biases[:-1] + (bias,), member.activations)
    pred = policy.policy_forward(cold, rng.standard_normal(10))
    assert np.allclose(pred.variance, math.exp(nn.LOGVAR_MIN))


def test_normalization_round_trip():
    cmd = VelocityCommand(1.5, -3.0, 0.75, 1.5)
    unit = policy.normalize_command(cmd)
    assert np.array_equal(unit, [0.5, -1.0, 0.25, 1.0])
    pred = GaussianPrediction(unit, np.full(4, 0.25))
    phys = policy.denormalize(pred)
    assert np.allclose(phys.mean, cmd.as_array())
    assert np.allclose(phys.variance, 0.25 * CMD_SCALE ** 2)


def test_forward_shape_validation():
    rng = stream(1, "policy", "shapes")
    member = policy.init_member(rng)
    with pytest.raises(ValueError):
        policy.policy_forward(member, np.zeros(9))
    with pytest.raises(ValueError):
        policy.baseline_forward(member, np.zeros(10))  # 8-wide head, not a baseline
    base = policy.init_baseline(rng)
    with pytest.raises(ValueError):
        policy.baseline_forward(base, np.zeros(11))


def test_ensemble_params_validation():
    rng = stream(2, "policy", "params")
    with pytest.raises(ValueError):
        EnsembleParams(())
    a = policy.init_member(rng)
    b = nn.init_mlp((10, 32, 8), ("relu", "identity"), rng)
    with pytest.raises(ValueError):
        EnsembleParams((a, b))
    odd = nn.init_mlp((10, 32, 7), ("relu", "identity"), rng)
    with pytest.raises(ValueError):
        EnsembleParams((odd,))
    ens = EnsembleParams((a, a))
    assert ens.size == 2 and ens.cmd_dim == 4


def test_train_rejects_bad_datasets():
    enc = perception.init_cmvae(stream(3, "policy", "enc"))
    obs = np.zeros((999, 256))
    cmd = np.zeros((999, 4))
    with pytest.raises(ValueError):
        policy.train_ensemble(enc, (obs, cmd), 2, PolicyTrainConfig(), stream(0, "x"))
    with pytest.raises(ValueError):
        policy.train_baseline_bc(enc, (np.zeros((1200, 256)), np.zeros((1200, 3))),
                                 PolicyTrainConfig(), stream(0, "x"))
    with pytest.raises(ValueError):
        policy.train_ensemble(enc, (np.zeros((1200, 256)), np.zeros((1200, 4))), 0,
                              PolicyTrainConfig(), stream(0, "x"))


@pytest.fixture(scope="module")
def policy_fit():
    obs, _, cmd = dataset.generate_records(1400, stream(21, "policy", "fit-data"))
    encoder = perception.init_cmvae(stream(21, "policy", "fit-enc"))
    config = PolicyTrainConfig(epochs=6, batch_size=64, ensemble_size=2)
    ens, reports = policy.train_ensemble(encoder, (obs, cmd), 2, config,
                                         stream(21, "policy", "fit"))
    base, base_report = policy.train_baseline_bc(encoder, (obs, cmd), config,
                                                 stream(21, "policy", "fit-base"))
    return encoder, (obs, cmd), config, ens, reports, base, base_report


def test_training_is_deterministic_and_order_independent(policy_fit):
    encoder, data, config, ens, _, _, _ = policy_fit
    again, _ = policy.train_ensemble(encoder, data, 2, config, stream(21, "policy", "fit"))
    for m1, m2 in zip(ens.members, again.members):
        assert np.array_equal(flatten_mlp(m1), flatten_mlp(m2))
    # Member streams come from spawn(), so a 1-member run reproduces member 0.
    solo, _ = policy.train_ensemble(encoder, data, 1, config, stream(21, "policy", "fit"))
    assert np.array_equal(flatten_mlp(solo.members[0]), flatten_mlp(ens.members[0]))


def test_members_are_diverse(policy_fit):
    _, _, _, ens, _, _, _ = policy_fit
    a, b = (flatten_mlp(m) for m in ens.members)
    assert not np.array_equal(a, b)


def test_heldout_loss_improves(policy_fit):
    _, _, _, _, reports, _, base_report = policy_fit
    for report in reports:
        assert report.heldout_final < report.heldout_initial
        assert report.epoch_loss[-1][1] < report.epoch_loss[0][1]
    assert base_report.heldout_final < base_report.heldout_initial


def test_training_leaves_encoder_untouched(policy_fit):
    encoder, data, config, _, _, _, _ = policy_fit
    before = [flatten_mlp(m).copy() for m in
              (encoder.encoder, encoder.image_decoder, encoder.pose_head)]
    policy.train_baseline_bc(encoder, data, config, stream(21, "policy", "again"))
    after = [flatten_mlp(m) for m in
             (encoder.encoder, encoder.image_decoder, encoder.pose_head)]
    for b, a in zip(before, after):
        assert np.array_equal(b, a)


def test_trained_members_sit_on_f32_lattice(policy_fit):
    _, _, _, ens, _, base, _ = policy_fit
    for net in ens.members + (base,):
        v = flatten_mlp(net)
        assert np.array_equal(v, v.astype(np.float32).astype(np.float64))
