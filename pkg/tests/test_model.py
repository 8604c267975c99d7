import numpy as np
import pytest

from fingermotion import kinematics as kin
from fingermotion.data import MotionSequence, Samples, make_samples
from fingermotion.diagnostics import reduced_config, reduced_instance
from fingermotion.errors import ConfigError, ContractError, ShapeError
from fingermotion.model import (
    Model, ModelConfig, approximate_derivatives, decoder_forward, identity_buffers, init_params,
    parameter_count, total_loss,
)
from fingermotion.skeleton import normalized_adjacency


def small(**kw):
    return reduced_config(hidden=4, joints=2, **kw)


def zero_encoder_head(model):
    for k in model.params:
        if k.startswith("enc.fc3"):
            model.params[k][...] = 0.0


# -- parameter counts -------------------------------------------------------------

def test_default_parameter_counts():
    c = parameter_count(ModelConfig())
    assert c["kfe_per_channel"] == 8770
    assert c["encoder_per_channel"] == 25345
    assert c["decoder"] == 36992
    assert c["total"] == 1_469_822
    assert abs(c["total"] - 1.49e6) / 1.49e6 < 0.014


def test_parameter_count_matches_arrays():
    cfg = ModelConfig()
    assert sum(v.size for v in init_params(cfg).values()) == parameter_count(cfg)["total"]


def test_ablation_counts():
    assert parameter_count(ModelConfig(use_gcn=False))["total"] == 42 * (8770 + 25345)
    assert parameter_count(ModelConfig(use_kfe=False))["total"] == 42 * 25345 + 36992
    assert parameter_count(ModelConfig(layout="reinterhand21"))["channels"] == 63


def test_shared_parameters_initialise_identically():
    a = init_params(small(), seed=3)
    b = init_params(small(use_kfe=False), seed=3)
    for k in b:
        np.testing.assert_array_equal(a[k], b[k])


@pytest.mark.parametrize("kw", [
    dict(horizon_weights=(1.0,) * 3),
    dict(horizon_weights=(0.5,) * 9 + (1.5,)),
    dict(decoder_widths=(2, 32, 1)),
    dict(head_widths=(64, 2)),
    dict(taylor_order=3),
    dict(diagnostic=True),
])
def test_invalid_configs(kw):
    with pytest.raises(ConfigError):
        ModelConfig(**kw)


def test_config_dict_round_trip():
    cfg = small(use_gcn=False)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"colour": "blue"})


def test_wrong_parameter_shape_is_named():
    cfg = small()
    p = init_params(cfg)
    p["enc.fc0.w"] = np.zeros((1, 1))
    with pytest.raises(ShapeError, match="enc.fc0.w"):
        Model(cfg, params=p)


# -- feature extractor ------------------------------------------------------------

def test_constant_window_gives_zero_derivatives():
    cfg = small()
    m = Model(cfg, seed=1)
    for d in ("vel", "acc"):
        m.params[f"kfe.{d}.head_w"][...] = 0.0
    w = np.full((2, 16, 6), 4.0)
    _, w0, a0 = m.forward(w, [0.04])
    np.testing.assert_array_equal(w0.data, 0.0)
    np.testing.assert_array_equal(a0.data, 0.0)


def test_without_extractor_derivatives_are_raw_approximations(rng):
    cfg = small(use_kfe=False)
    w = rng.normal(size=(3, 16, 6))
    _, w0, a0 = Model(cfg).forward(w, [0.04])
    feats = kin.kinematic_features(w, cfg.t_s, cfg.ma_window, axis=1)
    np.testing.assert_array_equal(w0.data, feats.velocity[:, -1])
    np.testing.assert_array_equal(a0.data, feats.acceleration[:, -1])


def test_wrong_window_length():
    cfg = small()
    with pytest.raises(ContractError):
        approximate_derivatives(np.zeros((1, 12, 6)), cfg)
    with pytest.raises(ContractError):
        Model(cfg).forward(np.zeros((1, 12, 6)), [0.04])


def test_wrong_channel_count():
    with pytest.raises(ShapeError):
        Model(small()).forward(np.zeros((1, 16, 9)), [0.04])


# -- encoder ----------------------------------------------------------------------

def test_zero_time_gives_zero_displacement_at_init(rng):
    cfg = small(use_gcn=False)
    m = Model(cfg, seed=2)
    for k in m.params:
        if k.startswith("enc."):
            m.params[k][...] = 0.0
    w = rng.normal(size=(4, 16, 6))
    pred = m.predict(w, [0.0, 0.2])
    np.testing.assert_array_equal(pred[0], w[:, -1])
    np.testing.assert_array_equal(pred[1], w[:, -1])


def test_zero_time_with_random_weights_and_zero_head(rng):
    cfg = small(use_gcn=False)
    m = Model(cfg, seed=5)
    zero_encoder_head(m)
    w = rng.normal(size=(2, 16, 6))
    np.testing.assert_array_equal(m.predict(w, [0.0])[0], w[:, -1])


def test_negative_horizon():
    with pytest.raises(ContractError):
        Model(small()).forward(np.zeros((1, 16, 6)), [-0.01])


def test_time_conditioning_is_live(rng):
    m = Model(small(), seed=0)
    w = np.cumsum(rng.normal(size=(1, 16, 6)), axis=1)
    p = m.predict(w, [0.04, 0.4])
    assert not np.allclose(p[0], p[1])


def test_channels_are_independent_without_decoder(rng):
    m = Model(small(use_gcn=False), seed=4)
    w = rng.normal(size=(2, 16, 6))
    base = m.predict(w, [0.12])
    w2 = w.copy()
    w2[:, :, 3] += rng.normal(size=(2, 16))
    moved = m.predict(w2, [0.12])
    changed = np.any(moved != base, axis=(0, 1))
    assert changed[3] and changed.sum() == 1


def test_dropout_only_in_training(rng):
    m = Model(small(), seed=0)
    w = rng.normal(size=(2, 16, 6))
    a = m.forward(w, [0.2])[0].data
    b = m.forward(w, [0.2])[0].data
    np.testing.assert_array_equal(a, b)
    c = m.forward(w, [0.2], training=True, rng=np.random.default_rng(0))[0].data
    assert not np.array_equal(a, c)


# -- decoder ----------------------------------------------------------------------

def triple_loop_decoder(theta, adj, weights, mean, scale, residual):
    """Reference propagation written with explicit index loops."""
    N, J, _ = theta.shape
    out = np.zeros_like(theta)
    for n in range(N):
        for axis in range(3):
            h = [[(theta[n, j, (axis + r) % 3] - mean[j, (axis + r) % 3]) / scale[j, (axis + r) % 3]
                  for r in range(3)] for j in range(J)]
            for k, w in enumerate(weights):
                ah = [[sum(adj[i][m] * h[m][c] for m in range(J)) for c in range(len(h[0]))]
                      for i in range(J)]
                h = [[sum(ah[i][c] * w[c][o] for c in range(w.shape[0])) for o in range(w.shape[1])]
                     for i in range(J)]
                if k < len(weights) - 1:
                    h = [[np.tanh(v) for v in row] for row in h]
            for j in range(J):
                base = theta[n, j, axis] if residual else mean[j, axis]
                out[n, j, axis] = h[j][0] * scale[j, axis] + base
    return out


@pytest.mark.parametrize("seed", range(100))
def test_decoder_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    J = int(rng.integers(1, 4))
    names = [f"j{i}" for i in range(J)]
    residual = bool(seed % 2)
    cfg = ModelConfig(joints=names, edges=list(zip(names[:-1], names[1:])),
                      decoder_widths=(3, 4, 5, 1), decoder_residual=residual)
    p = {f"dec.w{k}": rng.normal(size=s) for k, s in enumerate([(3, 4), (4, 5), (5, 1)])}
    buffers = identity_buffers(3 * J)
    buffers["pose_mean"] = rng.normal(size=3 * J)
    buffers["pose_scale"] = rng.uniform(0.5, 2.0, size=3 * J)
    adj = normalized_adjacency(cfg.skeleton)
    theta = rng.normal(size=(2, J, 3))
    got = decoder_forward(theta, adj, p, cfg, buffers).data
    ref = triple_loop_decoder(theta, adj, [p[f"dec.w{k}"] for k in range(3)],
                              buffers["pose_mean"].reshape(J, 3), buffers["pose_scale"].reshape(J, 3),
                              residual)
    assert np.max(np.abs(got - ref)) < 1e-12


def test_decoder_linear_identity_on_single_joint():
    widths = (3, 32, 64, 128, 128, 64, 32, 1)
    cfg = ModelConfig(joints=["a"], decoder_residual=False)
    p = {}
    for k, (i, o) in enumerate(zip(widths[:-1], widths[1:])):
        w = np.zeros((i, o))
        w[:min(i, o, 3), :min(i, o, 3)] = np.eye(min(i, o, 3))
        p[f"dec.w{k}"] = w
    theta = np.array([[[1.5, -2.0, 0.25]]])
    out = decoder_forward(theta, normalized_adjacency(cfg.skeleton), p, cfg, identity_buffers(3),
                          linear=True).data
    np.testing.assert_array_equal(out, theta)


def test_decoder_shape_error():
    cfg = small()
    with pytest.raises(ShapeError):
        decoder_forward(np.zeros((1, 3, 3)), normalized_adjacency(cfg.skeleton),
                        init_params(cfg), cfg, identity_buffers(6))


def test_without_decoder_output_is_initial_pose(rng):
    cfg = small(use_gcn=False)
    full = Model(small(), seed=7)
    ablated = Model(cfg, params={k: v for k, v in full.params.items() if not k.startswith("dec.")})
    w = rng.normal(size=(2, 16, 6))
    t = np.array([0.04, 0.08])
    _, va, aa = approximate_derivatives(w, cfg)
    from fingermotion.model import encoder_forward, kfe_forward
    p = ablated.tensors()
    om, al, _, _ = kfe_forward(va, aa, p, cfg, ablated.buffers)
    delta = encoder_forward(om, al, t, p, cfg, ablated.buffers).data.T.reshape(2, 2, 6)
    np.testing.assert_array_equal(ablated.predict(w, t), delta + w[:, -1])


def test_zero_init_prediction_is_finite(rng):
    m = Model(ModelConfig(), seed=0)
    out = m.predict(rng.normal(size=(16, 42)), [0.2])
    assert out.shape == (1, 42) and np.all(np.isfinite(out))


# -- loss -------------------------------------------------------------------------

def quadratic_batch(cfg, n=60, seed=0, offset=0.0):
    rng = np.random.default_rng(seed)
    C = cfg.n_channels
    t = np.arange(n)[:, None] * cfg.t_s
    frames = rng.normal(size=C) + rng.normal(size=C) * t + rng.normal(size=C) * t ** 2
    seq = MotionSequence(frames, kin.SeriesMeta(cfg.t_s, "degrees", cfg.skeleton.channel_names()))
    s = make_samples(seq, cfg.horizons_ms, sigma=1.0)
    s.targets = {h: v + offset for h, v in s.targets.items()}
    return s


def diagnostic_cfg(**kw):
    return small(use_kfe=False, use_gcn=False, diagnostic=True,
                 horizons_ms=tuple(range(40, 401, 40)), **kw)


def test_diagnostic_mode_is_exact_on_quadratics():
    cfg = diagnostic_cfg()
    for seed in range(10):
        s = quadratic_batch(cfg, seed=seed)
        pred = Model(cfg).predict(s.windows, cfg.horizons_s)
        for k, h in enumerate(cfg.horizons_ms):
            assert np.max(np.abs(pred[k] - s.targets[h])) < 1e-6


def test_perfect_predictions_give_zero_loss():
    cfg = diagnostic_cfg()
    assert float(Model(cfg).loss(quadratic_batch(cfg)).data) < 1e-12


def test_constant_error_gives_ten_e_squared():
    cfg = diagnostic_cfg()
    e = 0.5
    loss = float(Model(cfg).loss(quadratic_batch(cfg, offset=e)).data)
    assert loss == pytest.approx(10 * e * e, rel=1e-8)


def test_missing_horizon_target():
    cfg = small()
    s = quadratic_batch(cfg)
    del s.targets[80.0]
    with pytest.raises(ContractError, match="80"):
        Model(cfg).loss(s)


def test_loss_decomposes_into_independent_terms():
    cfg = small(horizon_weights=(0.3, 0.9))
    m, batch = reduced_instance(cfg, batch=4, seed=1)
    total = float(m.loss(batch).data)
    pred, w0, a0 = m.forward(batch.windows, cfg.horizons_s)
    expect = 0.0
    for k, (h, wt) in enumerate(zip(cfg.horizons_ms, cfg.horizon_weights)):
        expect += wt * np.mean((pred.data[k] - batch.targets[h]) ** 2)
    B = len(batch)
    expect += np.sum(((w0.data - batch.oracle_vel) / m.buffers["vel_scale"]) ** 2) / B
    expect += np.sum(((a0.data - batch.oracle_acc) / m.buffers["acc_scale"]) ** 2) / B
    assert abs(total - expect) < 1e-10 * max(1.0, abs(expect))


def test_zero_weight_horizon_drops_out_of_loss():
    cfg = small(horizon_weights=(1.0, 0.0))
    m, batch = reduced_instance(cfg, batch=3)
    terms = m.loss_terms(batch)
    got = float(total_loss(terms, cfg).data)
    expect = float(terms["pose@40"].data + terms["velocity"].data + terms["acceleration"].data)
    assert got == pytest.approx(expect, rel=1e-14)


def test_batch_type_is_samples():
    cfg = small()
    _, batch = reduced_instance(cfg)
    assert isinstance(batch, Samples) and len(batch) == 3
