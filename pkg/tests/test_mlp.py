import math

import numpy as np
import pytest

from evos_inr.mlp import (Adam, MlpConfig, MlpModel, load_checkpoint, positional_encoding,
                          save_checkpoint)


def scalar_forward(model, x):
    """Elementwise re-computation of one coordinate's forward pass."""
    cfg = model.config
    h = [float(v) for v in x]
    if cfg.backbone == "pemlp":
        enc = list(h)
        for j in range(cfg.pe_frequencies):
            enc += [math.sin(2 ** j * math.pi * v) for v in h]
            enc += [math.cos(2 ** j * math.pi * v) for v in h]
        h = enc
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        out = []
        for o in range(w.shape[1]):
            u = float(b[o]) + sum(h[i] * float(w[i, o]) for i in range(w.shape[0]))
            if layer < model.num_layers - 1:
                if cfg.backbone == "siren":
                    omega = cfg.omega_first if layer == 0 else cfg.omega_hidden
                    u = math.sin(omega * u)
                else:
                    u = max(u, 0.0)
            out.append(u)
        h = out
    return np.array(h)


def finite_difference_check(model, coords, grad_out, h=1e-4):
    """Max relative error of backward vs central differences over all parameters."""
    _, trace = model.forward(coords, keep_trace=True)
    grads = model.backward(trace, grad_out)
    worst = 0.0
    for p, g in zip(model.parameters(), grads):
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = np.sum(model.forward(coords)[0] * grad_out)
            p[idx] = old - h
            down = np.sum(model.forward(coords)[0] * grad_out)
            p[idx] = old
            num[idx] = (up - down) / (2 * h)
        scale = max(np.max(np.abs(num)), 1e-8)
        worst = max(worst, np.max(np.abs(num - g)) / scale)
    return worst


def test_config_validation_and_shapes():
    cfg = MlpConfig(2, 3, hidden_layers=3, hidden_width=256)
    assert cfg.layer_shapes == [(2, 256), (256, 256), (256, 256), (256, 3)]
    assert MlpConfig(2, 1, backbone="pemlp", pe_frequencies=10).encoded_dim == 42
    for bad in [dict(hidden_layers=0), dict(hidden_width=0), dict(omega_first=0.0),
                dict(backbone="wire")]:
        with pytest.raises(ValueError):
            MlpConfig(2, 1, **bad)


def test_positional_encoding_layout():
    x = np.array([[0.25, -0.5]])
    enc = positional_encoding(x, 2)
    expected = [0.25, -0.5,
                math.sin(math.pi * 0.25), math.sin(-math.pi * 0.5),
                math.cos(math.pi * 0.25), math.cos(-math.pi * 0.5),
                math.sin(2 * math.pi * 0.25), math.sin(-2 * math.pi * 0.5),
                math.cos(2 * math.pi * 0.25), math.cos(-2 * math.pi * 0.5)]
    assert np.allclose(enc[0], expected)


def test_init_deterministic_and_bounded():
    cfg = MlpConfig(2, 1, hidden_layers=2, hidden_width=64)
    a, b = MlpModel.init(cfg, 3), MlpModel.init(cfg, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a.parameters(), b.parameters()))
    c = MlpModel.init(cfg, 4)
    assert not np.array_equal(a.weights[0], c.weights[0])
    assert np.abs(a.weights[0]).max() <= 1 / 2
    assert np.abs(a.weights[1]).max() <= math.sqrt(6 / 64) / 30


def test_zero_model_predicts_zero():
    cfg = MlpConfig(2, 2, hidden_layers=2, hidden_width=5)
    model = MlpModel(cfg, [np.zeros(s) for s in cfg.layer_shapes],
                     [np.zeros(s[1]) for s in cfg.layer_shapes])
    pred, trace = model.forward(np.random.default_rng(0).uniform(-1, 1, (9, 2)))
    assert trace is None and np.all(pred == 0.0)


@pytest.mark.parametrize("backbone", ["siren", "pemlp"])
def test_forward_matches_scalar_oracle(backbone):
    cfg = MlpConfig(2, 2, hidden_layers=2, hidden_width=6, backbone=backbone, pe_frequencies=3)
    model = MlpModel.init(cfg, 1, dtype=np.float64)
    coords = np.random.default_rng(2).uniform(-1, 1, (5, 2))
    pred = model.forward(coords)[0]
    for i in range(5):
        assert np.max(np.abs(pred[i] - scalar_forward(model, coords[i]))) <= 1e-12


def test_batch_independence_and_permutation():
    cfg = MlpConfig(2, 3, hidden_layers=2, hidden_width=16)
    model = MlpModel.init(cfg, 0, dtype=np.float64)
    coords = np.random.default_rng(3).uniform(-1, 1, (20, 2))
    full = model.forward(coords)[0]
    assert np.allclose(model.forward(coords[7:8])[0], full[7:8], atol=1e-13)
    perm = np.random.default_rng(4).permutation(20)
    assert np.allclose(model.forward(coords[perm])[0], full[perm], atol=1e-13)


def test_siren_hidden_outputs_bounded():
    cfg = MlpConfig(2, 1, hidden_layers=3, hidden_width=32)
    model = MlpModel.init(cfg, 0)
    _, trace = model.forward(np.random.default_rng(0).uniform(-1, 1, (50, 2)), keep_trace=True)
    for act in trace.inputs[1:]:
        assert np.all(np.abs(act) <= 1.0)


def test_forward_rejects_bad_input():
    model = MlpModel.init(MlpConfig(2, 1, hidden_width=4), 0)
    with pytest.raises(ValueError):
        model.forward(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        model.forward(np.array([[0.0, np.nan]]))


@pytest.mark.parametrize("backbone", ["siren", "pemlp"])
def test_gradient_2x8_seven_points(backbone):
    cfg = MlpConfig(2, 1, hidden_layers=2, hidden_width=8, backbone=backbone, pe_frequencies=2)
    model = MlpModel.init(cfg, 5, dtype=np.float64)
    rng = np.random.default_rng(6)
    coords = rng.uniform(-1, 1, (7, 2))
    assert finite_difference_check(model, coords, rng.standard_normal((7, 1))) < 1e-3


def test_backward_linearity_and_zero():
    cfg = MlpConfig(2, 2, hidden_layers=2, hidden_width=8)
    model = MlpModel.init(cfg, 0, dtype=np.float64)
    coords = np.random.default_rng(0).uniform(-1, 1, (6, 2))
    g = np.random.default_rng(1).standard_normal((6, 2))
    _, trace = model.forward(coords, keep_trace=True)
    zero = model.backward(trace, np.zeros_like(g))
    assert all(np.all(z == 0.0) for z in zero)
    one = [x.copy() for x in model.backward(trace, g)]
    two = model.backward(trace, 2 * g)
    assert all(np.allclose(2 * a, b, rtol=1e-12) for a, b in zip(one, two))


def test_backward_rejects_mismatch():
    model = MlpModel.init(MlpConfig(2, 1, hidden_width=4), 0)
    _, trace = model.forward(np.zeros((3, 2)), keep_trace=True)
    with pytest.raises(ValueError):
        model.backward(trace, np.zeros((4, 1)))
    with pytest.raises(ValueError):
        model.backward(None, np.zeros((3, 1)))


def test_adam_zero_gradient_leaves_params():
    model = MlpModel.init(MlpConfig(2, 1, hidden_width=4), 0)
    before = [p.copy() for p in model.parameters()]
    Adam(model).step(model, [np.zeros_like(p) for p in model.parameters()])
    assert all(np.array_equal(a, b) for a, b in zip(before, model.parameters()))


def test_adam_first_step_closed_form():
    cfg = MlpConfig(1, 1, hidden_layers=1, hidden_width=1)
    model = MlpModel.init(cfg, 0, dtype=np.float64)
    before = [p.copy() for p in model.parameters()]
    grads = [np.full_like(p, g) for p, g in zip(before, [0.3, -2.0, 5e-3, -7.0])]
    opt = Adam(model, lr=1e-2, eps=1e-8)
    opt.step(model, grads)
    for b, p, g in zip(before, model.parameters(), grads):
        # m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps)
        expected = b - 1e-2 * g / (np.abs(g) + 1e-8)
        assert np.allclose(p, expected, rtol=0, atol=1e-15)
        assert np.allclose(p - b, -1e-2 * np.sign(g), atol=1e-7)
    assert opt.step_count == 1


def test_adam_deterministic_and_rejects_nonfinite():
    model = MlpModel.init(MlpConfig(2, 1, hidden_width=4), 0)
    grads = [np.random.default_rng(i).standard_normal(p.shape).astype(np.float32)
             for i, p in enumerate(model.parameters())]
    m1, m2 = model.copy(), model.copy()
    o1, o2 = Adam(m1), Adam(m2)
    for _ in range(3):
        o1.step(m1, grads)
        o2.step(m2, grads)
    assert all(np.array_equal(a, b) for a, b in zip(m1.parameters(), m2.parameters()))
    bad = [g.copy() for g in grads]
    bad[0][0, 0] = np.inf
    with pytest.raises(FloatingPointError):
        o1.step(m1, bad)


@pytest.mark.parametrize("backbone", ["siren", "pemlp"])
def test_checkpoint_roundtrip(tmp_path, backbone):
    cfg = MlpConfig(2, 3, hidden_layers=2, hidden_width=7, backbone=backbone, omega_first=50)
    model = MlpModel.init(cfg, 9)
    path = save_checkpoint(tmp_path / "m.ckpt", model)
    raw = path.read_bytes()
    assert raw[:8] == b"EVOSMLP\x00"
    back = load_checkpoint(path)
    assert back.config == cfg and back.dtype == model.dtype
    assert all(np.array_equal(a, b) for a, b in zip(model.parameters(), back.parameters()))
    # the tail is the parameters as little-endian float32 in declaration order
    tail = np.concatenate([p.ravel() for p in model.parameters()]).astype("<f4").tobytes()
    assert raw.endswith(tail)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"nope" * 10)
    with pytest.raises(ValueError):
        load_checkpoint(path)
    model = MlpModel.init(MlpConfig(2, 1, hidden_width=3), 0)
    good = save_checkpoint(tmp_path / "ok.ckpt", model).read_bytes()
    path.write_bytes(good[:-4])
    with pytest.raises(ValueError):
        load_checkpoint(path)
