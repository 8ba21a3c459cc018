"""Classifier init/forward, logit decomposition, scaling propositions,
and checkpoint round trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logitbench.errors import ConfigError, ShapeError
from logitbench.model import (MlpModel, decompose, forward, forward_traced,
                              init_model, load_checkpoint, predict,
                              save_checkpoint)
from logitbench.tensor import Matrix2D, rowwise_softmax


def test_init_is_deterministic():
    a = init_model((2, 10, 3), seed=7)
    b = init_model((2, 10, 3), seed=7)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa.data, wb.data)
    for ba, bb in zip(a.biases, b.biases):
        assert np.array_equal(ba.data, bb.data)


def test_init_rejects_single_dim():
    with pytest.raises(ConfigError):
        init_model((4,), seed=0)
    with pytest.raises(ConfigError):
        init_model((4, 0, 3), seed=0)


def test_init_weight_shapes_chain():
    m = init_model((2, 8, 8, 5), seed=1)
    assert [w.shape for w in m.weights] == [(2, 8), (8, 8), (8, 5)]
    assert [b.shape for b in m.biases] == [(1, 8), (1, 8), (1, 5)]
    assert all(np.all(b.data == 0.0) for b in m.biases)


def test_forward_zero_model_gives_zero_logits():
    dims = (3, 4, 2)
    m = MlpModel(dims,
                 tuple(Matrix2D.zeros(a, b) for a, b in zip(dims, dims[1:])),
                 tuple(Matrix2D.zeros(1, b) for b in dims[1:]))
    out = forward(m, Matrix2D.from_rows([[1.0, -2.0, 3.0]]))
    assert np.array_equal(out.data, np.zeros((1, 2)))


def test_forward_single_identity_layer():
    m = MlpModel((2, 2), (Matrix2D(np.eye(2)),), (Matrix2D.zeros(1, 2),))
    out = forward(m, Matrix2D.from_rows([[1.0, 2.0]]))
    assert np.array_equal(out.data, [[1.0, 2.0]])


def test_forward_output_shape():
    m = init_model((2, 4, 3), seed=3)
    out = forward(m, Matrix2D(np.random.default_rng(0).standard_normal((5, 2))))
    assert out.shape == (5, 3)


def test_forward_rejects_wrong_width():
    m = init_model((2, 4, 3), seed=3)
    with pytest.raises(ShapeError):
        forward(m, Matrix2D.zeros(5, 3))


def test_traced_forward_matches_plain():
    m = init_model((4, 8, 3), seed=11)
    x = Matrix2D(np.random.default_rng(1).standard_normal((6, 4)))
    trace = forward_traced(m, x)
    assert np.allclose(trace.logits.value, forward(m, x).data, atol=1e-15)


def test_traced_input_grad_flag():
    m = init_model((3, 5, 2), seed=2)
    x = Matrix2D(np.random.default_rng(2).standard_normal((1, 3)))
    off = forward_traced(m, x)
    off.tape.backward(off.tape.mean_all(off.logits))
    assert np.array_equal(off.tape.grad(off.input), np.zeros((1, 3)))
    on = forward_traced(m, x, input_grad=True)
    on.tape.backward(on.tape.mean_all(on.logits))
    assert np.any(on.tape.grad(on.input) != 0.0)


# --------------------------------------------------------------------------
# Decomposition
# --------------------------------------------------------------------------

def test_decompose_pythagorean():
    d = decompose(np.array([3.0, 4.0]))
    assert d.magnitude == 5.0
    assert np.allclose(d.direction, [0.6, 0.8], atol=1e-15)
    assert not d.degenerate


def test_decompose_zero_vector_degenerate():
    d = decompose(np.zeros(4))
    assert d.magnitude == 0.0
    assert d.degenerate
    assert np.array_equal(d.direction, np.zeros(4))


def test_decompose_negative_diagonal():
    d = decompose(np.array([-1.0, -1.0]))
    assert abs(d.magnitude - np.sqrt(2)) < 1e-12
    assert np.allclose(d.direction, [-1 / np.sqrt(2), -1 / np.sqrt(2)], atol=1e-12)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=10))
def test_decompose_reconstructs(row):
    v = np.array(row)
    d = decompose(v)
    assert np.max(np.abs(v - d.magnitude * d.direction)) <= 1e-10
    if d.magnitude > 0:
        assert abs(np.linalg.norm(d.direction) - 1.0) <= 1e-10


# --------------------------------------------------------------------------
# Scaling propositions (argmax invariance, confidence monotonicity)
# --------------------------------------------------------------------------

@given(st.lists(st.floats(-10, 10), min_size=2, max_size=12),
       st.sampled_from([1.5, 2.0, 10.0, 1000.0]))
def test_argmax_invariant_under_positive_scaling(row, s):
    f = np.array([row])
    assert np.argmax(s * f) == np.argmax(f)


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=12),
       st.floats(1.0, 100.0))
def test_max_softmax_monotone_in_scale(row, s):
    f = np.array([row])
    c = int(np.argmax(f))
    before = rowwise_softmax(f)[0, c]
    after = rowwise_softmax(s * f)[0, c]
    assert after >= before - 1e-12


def test_predict_breaks_ties_to_lowest_index():
    m = MlpModel((2, 2), (Matrix2D.zeros(2, 2),), (Matrix2D.zeros(1, 2),))
    assert predict(m, Matrix2D.from_rows([[1.0, 1.0]]))[0] == 0


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

def test_checkpoint_round_trip_bit_exact(tmp_path):
    m = init_model((3, 6, 4), seed=42)
    path = tmp_path / "ckpt.txt"
    save_checkpoint(m, path, config_hash="abc123")
    loaded, h = load_checkpoint(path)
    assert h == "abc123"
    assert loaded.layer_dims == m.layer_dims
    for wa, wb in zip(m.weights, loaded.weights):
        assert np.array_equal(wa.data, wb.data)
    for ba, bb in zip(m.biases, loaded.biases):
        assert np.array_equal(ba.data, bb.data)
    # Save-of-load reproduces the exact bytes.
    path2 = tmp_path / "ckpt2.txt"
    save_checkpoint(loaded, path2, config_hash="abc123")
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.txt"
    path.write_text("not a checkpoint\n")
    from logitbench.errors import DataError
    with pytest.raises(DataError):
        load_checkpoint(path)
