import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avse import autodiff as ad
from avse.autodiff import AdamState, MlpParams, Tape, adam_update, init_mlp, mlp_forward
from avse.errors import ValidationError

from conftest import central_difference, relative_error


def test_zero_network_outputs_zero():
    p = init_mlp([5, 7, 3], ["tanh", "tanh"], np.random.default_rng(0), zero=True)
    x = np.random.default_rng(1).standard_normal(5)
    assert np.all(mlp_forward(p, x) == 0)


def test_identity_layer_passes_input_through():
    p = MlpParams([np.eye(4)], [np.zeros(4)], ["identity"])
    x = np.array([0.5, -2.0, 3.0, 1e-3])
    np.testing.assert_array_equal(mlp_forward(p, x), x)


def test_two_layer_hand_value():
    p = MlpParams(
        [np.array([[1.0, 2.0], [0.0, -1.0]]), np.array([[1.0, -1.0]])],
        [np.array([0.0, 0.5]), np.array([0.25])],
        ["tanh", "identity"],
    )
    # hidden = tanh([-1, 1.5]); out = tanh(-1) - tanh(1.5) + 0.25
    out = mlp_forward(p, np.array([1.0, -1.0]))
    assert out.shape == (1,)
    assert out[0] == pytest.approx(-1.4167424096006314, abs=1e-14)


def test_dimension_mismatch():
    p = init_mlp([3, 2], ["tanh"], np.random.default_rng(0))
    with pytest.raises(ValidationError):
        mlp_forward(p, np.zeros(4))
    with pytest.raises(ValidationError):
        mlp_forward(p, np.zeros((1, 4)), tape=Tape())


def test_taped_forward_matches_numpy():
    p = init_mlp([6, 5, 4], ["tanh", "identity"], np.random.default_rng(3))
    x = np.random.default_rng(4).standard_normal((3, 6))
    np.testing.assert_array_equal(mlp_forward(p, x, tape=Tape()).value, mlp_forward(p, x))


def test_gradient_of_sum_is_ones():
    tape = Tape()
    w = np.random.default_rng(0).standard_normal((3, 4))
    grads = ad.backward(tape, ad.total(tape.leaf(w)))
    np.testing.assert_array_equal(grads[id(w)], np.ones_like(w))


def test_tanh_gradient_at_zero_is_input():
    tape = Tape()
    w = np.zeros((1, 3))
    x = np.array([[0.3, -1.2, 2.0]])
    loss = ad.total(ad.tanh(ad.mul(tape.leaf(w), x)))
    grads = ad.backward(tape, loss)
    np.testing.assert_allclose(grads[id(w)], x)


def test_backward_without_forward_fails():
    with pytest.raises(ValidationError):
        Tape().backward(ad.Tensor(np.array(1.0)))


def test_backward_twice_fails():
    tape = Tape()
    loss = ad.total(tape.leaf(np.ones(3)))
    tape.backward(loss)
    with pytest.raises(ValidationError):
        tape.backward(loss)


def test_no_broadcasting():
    with pytest.raises(ValidationError):
        ad.add(np.ones((2, 3)), np.ones(3))


def _two_layer_loss(params, x, target):
    tape = Tape()
    out = mlp_forward(params, x, tape)
    var = ad.exp(out)
    # negative Itakura-Saito reconstruction term
    ratio = target / var
    loss = ad.total(-(ratio - ad.log(ratio) - 1.0))
    return tape, loss


def test_two_layer_objective_matches_finite_differences():
    rng = np.random.default_rng(7)
    params = init_mlp([5, 6, 4], ["tanh", "identity"], rng)
    x = rng.standard_normal((8, 5))
    target = rng.uniform(0.1, 2.0, size=(8, 4))
    tape, loss = _two_layer_loss(params, x, target)
    grads = tape.backward(loss)

    def value():
        return float(_two_layer_loss(params, x, target)[1].value)

    for array in params.weights + params.biases:
        g = grads[id(array)]
        for index in np.ndindex(array.shape):
            fd = central_difference(value, array, index)
            assert relative_error(g[index], fd) < 1e-4


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.lists(st.floats(0.5, 3), min_size=3, max_size=3))
def test_elementwise_ops_match_finite_differences(a, b):
    a = np.array(a)
    b = np.array(b)

    def f(tape=None):
        ta = tape.leaf(a) if tape else a
        tb = tape.leaf(b) if tape else b
        expr = ad.sqrt(ad.mul(ad.square(ta), tb) + 1.0) / tb - ad.log(tb) * ad.exp(ta * 0.1)
        return ad.total(expr)

    tape = Tape()
    grads = tape.backward(f(tape))
    for arr in (a, b):
        for i in range(3):
            fd = central_difference(lambda: float(ad._val(f())), arr, (i,))
            assert relative_error(grads[id(arr)][i], fd) < 1e-6


def test_concat_split_round_trip_gradients():
    tape = Tape()
    a, b = np.ones((2, 3)), np.full((2, 2), 2.0)
    left, right = ad.split(ad.concat([tape.leaf(a), tape.leaf(b)]), [3, 2])
    loss = ad.total(ad.mul(left, left)) + ad.total(right * 3.0)
    grads = tape.backward(loss)
    np.testing.assert_allclose(grads[id(a)], 2 * a)
    np.testing.assert_allclose(grads[id(b)], 3.0)


def test_floor_blocks_gradient_below_minimum():
    tape = Tape()
    x = np.array([1e-12, 0.5])
    grads = tape.backward(ad.total(ad.floor(tape.leaf(x), 1e-10)))
    np.testing.assert_array_equal(grads[id(x)], [0.0, 1.0])


def test_adam_zero_gradient_keeps_params():
    params = {"w": np.array([1.0, -2.0])}
    new, state = adam_update(params, {"w": np.zeros(2)}, AdamState())
    np.testing.assert_array_equal(new["w"], params["w"])
    assert state.step == 1


def test_adam_first_step_is_step_size_times_sign():
    params = {"w": np.zeros(4)}
    g = np.array([3.0, -0.5, 1e-3, -200.0])
    new, _ = adam_update(params, {"w": g}, AdamState(step_size=1e-3))
    np.testing.assert_allclose(new["w"], 1e-3 * np.sign(g), rtol=1e-4)
    descended, _ = adam_update(params, {"w": g}, AdamState(step_size=1e-3), ascent=False)
    np.testing.assert_allclose(descended["w"], -1e-3 * np.sign(g), rtol=1e-4)


def test_adam_quadratic():
    # minimizing (theta - 3)^2 from 0 with step 0.1 for 100 steps
    params = {"t": np.array([0.0])}
    state = AdamState(step_size=0.1)
    for _ in range(100):
        params, state = adam_update(params, {"t": 2 * (params["t"] - 3)}, state, ascent=False)
    assert abs(params["t"][0] - 3) < 0.05

    # the same recursion written out with scalars
    th, m, v = 0.0, 0.0, 0.0
    for t in range(1, 101):
        g = 2 * (th - 3)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        th -= 0.1 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert params["t"][0] == pytest.approx(th, abs=1e-12)


def test_adam_shape_mismatch():
    with pytest.raises(ValidationError):
        adam_update({"w": np.zeros(3)}, {"w": np.zeros(2)}, AdamState())


def test_adam_is_deterministic():
    rng = np.random.default_rng(0)
    params = {"w": rng.standard_normal(5)}
    grads = {"w": rng.standard_normal(5)}
    a, sa = adam_update(params, grads, AdamState())
    b, sb = adam_update(params, grads, AdamState())
    assert a["w"].tobytes() == b["w"].tobytes()
    assert sa.v["w"].tobytes() == sb.v["w"].tobytes()
