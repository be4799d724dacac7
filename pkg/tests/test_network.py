import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icepinn import network as N
from icepinn.network import ArchitectureSpec, NetworkParams, init_params


def _zero_params(spec):
    p = init_params(spec, 0)
    p.weights = [np.zeros_like(w) for w in p.weights]
    return p


def test_init_deterministic():
    spec = ArchitectureSpec(3, 3, 17, "relu2")
    a, b = init_params(spec, 42), init_params(spec, 42)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights + a.biases, b.weights + b.biases))
    c = init_params(spec, 43)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_init_width_one():
    p = init_params(ArchitectureSpec(2, 1, 1, "relu2"), 0)
    assert p.weights[0].shape == (1, 2)
    assert p.biases[0].tolist() == [0.0]


def test_init_scale_fan_in_100():
    p = init_params(ArchitectureSpec(2, 2, 100, "tanh"), 7)
    assert np.max(np.abs(p.weights[1])) <= 0.1
    assert np.max(np.abs(p.weights[2])) <= 0.1


def test_init_uniform_bias_scheme():
    p = init_params(ArchitectureSpec(2, 2, 16, "relu2"), 7, scheme="uniform-bias")
    assert np.any(p.biases[1] != 0) and np.max(np.abs(p.biases[1])) <= 0.25
    with pytest.raises(ValueError):
        init_params(ArchitectureSpec(), 0, scheme="xavier")


@pytest.mark.parametrize("kw", [dict(input_dim=4), dict(hidden_layers=0), dict(width=0),
                                dict(activation="relu"), dict(output_dim=2)])
def test_architecture_validation(kw):
    with pytest.raises(ValueError):
        ArchitectureSpec(**kw)


def test_zero_net_outputs_zero():
    p = _zero_params(ArchitectureSpec(2, 3, 8, "relu2"))
    assert np.all(N.forward_value(p, np.random.default_rng(0).random((5, 2))) == 0)
    jet = N.forward_jets(p, [[0.2, 0.7]])
    assert jet.value.item() == 0 and np.all(jet.grad == 0) and np.all(jet.hess == 0)


def test_single_linear_layer_value():
    # W = [1, 1], b = 0 at (0.3, 0.7) gives 1; relu2 and a unit output layer keep it at 1
    spec = ArchitectureSpec(2, 1, 1, "relu2")
    p = init_params(spec, 0)
    x = np.array([[0.3, 0.7]])
    p.weights = [np.array([[1.0, 1.0]]), np.array([[1.0]])]
    p.biases = [np.array([0.0]), np.array([0.0])]
    assert N.forward_value(p, x)[0] == 1.0


def test_linear_jet_through_relu2():
    # u = (z)^2 with z = t + 2x > 0 gives grad 2z (1, 2) and hess 2 [[1,2],[2,4]]
    spec = ArchitectureSpec(2, 1, 1, "relu2")
    p = NetworkParams(spec, [np.array([[1.0, 2.0]]), np.array([[1.0]])],
                      [np.array([0.0]), np.array([0.0])])
    jet = N.forward_jets(p, [[0.5, 0.25]])
    assert jet.value.item() == 1.0
    assert jet.grad[0, 0].tolist() == [2.0, 4.0]
    assert jet.hess[0, 0].tolist() == [[2.0, 4.0], [4.0, 8.0]]


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), act=st.sampled_from(["relu2", "tanh"]),
       d=st.sampled_from([2, 3]))
def test_value_equals_jet_value_exactly(seed, act, d):
    rng = np.random.default_rng(seed)
    spec = ArchitectureSpec(d, int(rng.integers(1, 4)), int(rng.integers(1, 20)), act)
    p = init_params(spec, seed, scheme="uniform-bias")
    pts = rng.normal(size=(9, d))
    assert np.array_equal(N.forward_value(p, pts), N.forward_jets(p, pts).value[:, 0])
    assert np.array_equal(N.forward_value(p, pts), N.forward_value(p, pts))


def test_predict_matches_forward_value():
    rng = np.random.default_rng(2)
    p = init_params(ArchitectureSpec(3, 3, 32, "relu2"), 2, scheme="uniform-bias")
    pts = rng.random((1000, 3))
    assert np.allclose(N.predict(p, pts, chunk=77), N.forward_value(p, pts), rtol=1e-13, atol=1e-15)


def test_rejects_bad_points():
    p = init_params(ArchitectureSpec(2, 1, 3), 0)
    with pytest.raises(ValueError):
        N.forward_value(p, [[0.1, 0.2, 0.3]])
    with pytest.raises(ValueError):
        N.forward_value(p, [[np.nan, 0.2]])


def test_flat_roundtrip():
    p = init_params(ArchitectureSpec(3, 2, 5), 3, scheme="uniform-bias")
    q = p.with_flat(p.flat())
    assert np.array_equal(q.flat(), p.flat())
    assert len(p.flat()) == p.n_params()


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    p = init_params(ArchitectureSpec(3, 4, 9, "tanh"), 5, scheme="uniform-bias")
    p.weights[0][0, 0] = 1 / 3
    path = tmp_path / "x.ckpt"
    N.save_params(p, path)
    q = N.load_params(path)
    assert q.spec == p.spec and q.seed == 5
    assert all(np.array_equal(a, b) for a, b in zip(p.weights + p.biases, q.weights + q.biases))


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_text("hello\n")
    with pytest.raises(ValueError):
        N.load_params(path)
