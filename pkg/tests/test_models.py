import numpy as np
import pytest

from autodiff import graph as G
from autodiff.params import ParamSet
from baselines.vanilla import variant_config, vanilla_pideeponet
from commands.common import model_config
from data.domain import Lattice
from data.normalization import compute_stats, normalize
from models.branch import cbn_forward
from models.configs import ModelConfig, TrunkConfig
from models.operator import (
    OperatorModel,
    UntrainedModelError,
    estimate_field,
    mimo_combine,
    mimo_estimate,
    param_net_forward,
)
from models.trunk import AttentionTrunk, nonlinear_expand


@pytest.fixture
def config(tiny_config, tiny_dataset):
    return model_config(tiny_config, tiny_dataset)


def _model(config, dataset, **kwargs):
    domain = dataset.truth.domain
    model = OperatorModel(config, domain.units, domain.length, dataset.span, **kwargs)
    model.stats = compute_stats(dataset.train)
    return model


def test_extended_model_shapes(config, tiny_dataset):
    model = _model(config, tiny_dataset)
    assert model.conv_count == 2
    assert model.learns_fd and model.segments == 2
    sample = tiny_dataset.train[0]
    bound = model.params.bind()
    context = model.encode(bound, sample.window, sample.span)
    assert context.features.shape == (1, 8)
    q_hat, v_hat = model.decode(bound, context, G.constant(sample.observed))
    assert q_hat.shape == v_hat.shape == (sample.observed.shape[0],)


def test_vanilla_has_no_conv_layers(config, tiny_dataset):
    domain = tiny_dataset.truth.domain
    model = vanilla_pideeponet(config, domain.units, domain.length, tiny_dataset.span)
    assert model.conv_count == 0
    assert not model.learns_fd
    assert model.config.variant == "vanilla"
    assert not any(name.startswith("param_net") for name in model.params)


def test_variant_flags(config):
    assert variant_config(config, ()) == config
    ablation = variant_config(config, ["no_attention"])
    assert ablation.cnn and not ablation.attention and ablation.variant == "ablation"
    with pytest.raises(ValueError):
        variant_config(config, ["no_trunk"])


def test_mimo_combination_is_linear_in_branch_features():
    rng = np.random.default_rng(0)
    trunk = G.constant(rng.normal(size=(5, 3)))
    first, second = rng.normal(size=(1, 6)), rng.normal(size=(1, 6))
    q_sum, v_sum = mimo_combine(G.constant(first + second), trunk)
    q_a, v_a = mimo_combine(G.constant(first), trunk)
    q_b, v_b = mimo_combine(G.constant(second), trunk)
    np.testing.assert_allclose(q_sum.value, q_a.value + q_b.value)
    np.testing.assert_allclose(v_sum.value, v_a.value + v_b.value)
    np.testing.assert_allclose(v_a.value, trunk.value @ first[0, :3])
    np.testing.assert_allclose(q_a.value, trunk.value @ first[0, 3:])
    with pytest.raises(G.ShapeError):
        mimo_combine(G.constant(first), G.constant(np.ones((5, 4))))


def test_mimo_estimate_sums_both_branches(config, tiny_dataset):
    model = _model(config, tiny_dataset)
    window = normalize(tiny_dataset.train[0].window, model.stats)
    coords = np.array([[0.1, 0.2], [0.9, 0.5]])
    v_hat, q_hat = mimo_estimate(model, window.speed, window.flow, coords)
    bound = model.params.bind()
    q_ref, v_ref = model.decode(bound, model.encode(bound, window), G.constant(coords))
    np.testing.assert_allclose(v_hat.value, v_ref.value)
    np.testing.assert_allclose(q_hat.value, q_ref.value)


def test_param_net_outputs_stay_in_range(config, tiny_dataset):
    model = _model(config, tiny_dataset)
    ranges = config.param_net.ranges
    for sample in tiny_dataset.train[:3]:
        window = normalize(sample.window, model.stats)
        fds = param_net_forward(model, window.speed, window.flow)
        assert len(fds) == 2
        for fd in fds:
            assert ranges["v_f"][0] < fd.v_f < ranges["v_f"][1]
            assert ranges["rho_c"][0] < fd.rho_c < ranges["rho_c"][1]
            assert ranges["a"][0] < fd.a < ranges["a"][1]


def test_nonlinear_expansion_columns():
    y = np.array([[0.5, 0.25]])
    expanded = nonlinear_expand(y).value[0]
    np.testing.assert_allclose(
        expanded, [np.cos(0.5), np.cos(0.25), np.sin(0.5), np.sin(0.25), np.exp(0.5), np.exp(0.25), 0.5, 0.25]
    )


def test_estimate_field_is_deterministic_and_non_negative(config, tiny_dataset):
    model = _model(config, tiny_dataset)
    sample = tiny_dataset.test[0]
    lattice = Lattice(positions=(25.0, 175.0, 375.0), times=(sample.t0, sample.t0 + 5.0, sample.t0 + sample.span))
    first = estimate_field(model, sample.window, lattice)
    second = estimate_field(model, sample.window, lattice)
    assert first.speed.shape == (3, 3)
    np.testing.assert_array_equal(first.speed, second.speed)
    assert np.all(first.flow >= 0) and np.all(first.speed >= 0)


def test_estimate_needs_statistics(config, tiny_dataset):
    domain = tiny_dataset.truth.domain
    model = OperatorModel(config, domain.units, domain.length, tiny_dataset.span)
    sample = tiny_dataset.test[0]
    with pytest.raises(UntrainedModelError):
        estimate_field(model, sample.window, Lattice(positions=(25.0,), times=(sample.t0,)))


def test_same_seed_same_weights(config, tiny_dataset):
    a, b = _model(config, tiny_dataset), _model(config, tiny_dataset)
    for name in a.params:
        np.testing.assert_array_equal(a.params[name], b.params[name])


def test_config_echo_round_trip(config):
    assert ModelConfig.from_echo(config.to_dict()) == config
    with pytest.raises(ValueError):
        ModelConfig.from_dict({"features": 4, "bogus": 1}, history=4, sensors=4, segments=2)


def test_cbn_forward_yields_one_feature_vector(config, tiny_dataset):
    model = _model(config, tiny_dataset)
    bound = model.params.bind()
    grid = normalize(tiny_dataset.train[0].window, model.stats).speed
    features = cbn_forward(model.speed_branch, bound, grid)
    assert features.shape == (8,)
    np.testing.assert_array_equal(features.value, model.speed_branch(bound, grid).value[0])
    with pytest.raises(G.ShapeError):
        cbn_forward(model.speed_branch, bound, grid[:, :3])


@pytest.mark.parametrize("bias, branch", [(0.0, "u"), (30.0, "v")])
def test_closed_and_open_gates_select_one_projection(bias, branch):
    params = ParamSet()
    trunk = AttentionTrunk(params, "trunk", TrunkConfig(features=4, width=5, layers=2), np.random.default_rng(0))
    values = params.snapshot()
    for name in values:
        if name.startswith("trunk.z"):
            values[name] = np.full_like(values[name], bias if name.endswith(".b") else 0.0)
    params.assign(values)
    bound = params.bind()
    y = np.array([[0.1, 0.4], [0.7, 0.9], [0.3, 0.0]])
    expected = G.tanh(getattr(trunk, branch)(bound, nonlinear_expand(y)))
    np.testing.assert_allclose(trunk.hidden(bound, y).value, expected.value, atol=1e-12)
