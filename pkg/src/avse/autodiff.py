"""A small tape-based reverse-mode gradient engine and the Adam optimizer.

Only the operations needed by fully-connected VAEs are provided: affine
maps, ``tanh``, ``exp``, ``log``, ``sqrt``, squaring, elementwise
arithmetic between same-shaped arrays (or a tensor and a python scalar),
column concatenation, a lower floor, and full reduction to a scalar.
There is no general broadcasting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ValidationError

ACTIVATIONS = ("tanh", "identity")


class Tensor:
    __slots__ = ("value", "grad", "tape", "_parents", "_backward")
    # Make numpy defer to our reflected operators (ndarray / Tensor etc.).
    __array_ufunc__ = None

    def __init__(self, value, tape=None, parents=(), backward=None):
        self.value = value
        self.grad = None
        self.tape = tape
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return np.shape(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


class Tape:
    """Records one forward evaluation so that it can be differentiated once."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._leaves: dict[int, tuple[np.ndarray, Tensor]] = {}
        self._consumed = False

    def leaf(self, array: np.ndarray) -> Tensor:
        """Trainable input.  The same array always maps to the same leaf."""
        key = id(array)
        if key not in self._leaves:
            t = Tensor(array, self)
            self._leaves[key] = (array, t)
            self.nodes.append(t)
        return self._leaves[key][1]

    def constant(self, array) -> Tensor:
        return Tensor(np.asarray(array, dtype=np.float64), None)

    def _record(self, value, parents, backward) -> Tensor:
        t = Tensor(value, self, parents, backward)
        self.nodes.append(t)
        return t

    def backward(self, loss: Tensor, loss_adjoint: float = 1.0) -> dict[int, np.ndarray]:
        """Propagate adjoints from ``loss``; returns ``{id(leaf array): grad}``."""
        if self._consumed:
            raise ValidationError("tape already differentiated")
        if loss.tape is not self or not self.nodes:
            raise ValidationError("backward without forward: loss was not recorded on this tape")
        if np.ndim(loss.value) != 0:
            raise ValidationError("loss must be a scalar")
        self._consumed = True
        loss.grad = np.asarray(loss_adjoint, dtype=np.float64)
        for node in reversed(self.nodes):
            if node.grad is None or node._backward is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if parent.tape is not self or g is None:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g
        return {
            key: (t.grad if t.grad is not None else np.zeros_like(arr))
            for key, (arr, t) in self._leaves.items()
        }

    def grad_of(self, arrays: Mapping[str, np.ndarray], grads: Mapping[int, np.ndarray]):
        """Map leaf gradients back onto named parameter arrays (zeros if unused)."""
        return {name: grads.get(id(a), np.zeros_like(a)) for name, a in arrays.items()}


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Tensor) and x.tape is not None:
            return x.tape
    return None


def _val(x):
    return x.value if isinstance(x, Tensor) else x


def _op(value, parents, backward) -> Tensor:
    tape = _tape_of(*parents)
    if tape is None:
        return Tensor(value)
    ps = tuple(p if isinstance(p, Tensor) else Tensor(p) for p in parents)
    return tape._record(value, ps, backward)


def _check_same(a, b):
    sa, sb = np.shape(a), np.shape(b)
    if sa != sb and sa != () and sb != ():
        raise ValidationError(f"shape mismatch {sa} vs {sb} (no broadcasting)")


def add(a, b):
    av, bv = _val(a), _val(b)
    _check_same(av, bv)
    return _op(av + bv, (a, b), lambda g: (_unbroadcast(g, av), _unbroadcast(g, bv)))


def sub(a, b):
    av, bv = _val(a), _val(b)
    _check_same(av, bv)
    return _op(av - bv, (a, b), lambda g: (_unbroadcast(g, av), _unbroadcast(-g, bv)))


def mul(a, b):
    av, bv = _val(a), _val(b)
    _check_same(av, bv)
    return _op(av * bv, (a, b), lambda g: (_unbroadcast(g * bv, av), _unbroadcast(g * av, bv)))


def div(a, b):
    av, bv = _val(a), _val(b)
    _check_same(av, bv)
    out = av / bv
    return _op(out, (a, b), lambda g: (_unbroadcast(g / bv, av), _unbroadcast(-g * out / bv, bv)))


def _unbroadcast(g, like):
    # Only scalar <-> array pairing is allowed, so reduce to a scalar if needed.
    if np.shape(like) == ():
        return np.sum(g)
    return g


def affine(x, weight, bias):
    """``x @ weight.T + bias`` for a batch ``x`` of shape (B, in)."""
    xv, wv, bv = _val(x), _val(weight), _val(bias)
    if xv.ndim != 2 or xv.shape[1] != wv.shape[1]:
        raise ValidationError(f"affine input of shape {xv.shape} does not match weight {wv.shape}")
    out = xv @ wv.T + bv
    return _op(out, (x, weight, bias), lambda g: (g @ wv, g.T @ xv, g.sum(axis=0)))


def tanh(x):
    out = np.tanh(_val(x))
    return _op(out, (x,), lambda g: (g * (1.0 - out * out),))


def exp(x):
    out = np.exp(_val(x))
    return _op(out, (x,), lambda g: (g * out,))


def log(x):
    xv = _val(x)
    return _op(np.log(xv), (x,), lambda g: (g / xv,))


def sqrt(x):
    out = np.sqrt(_val(x))
    return _op(out, (x,), lambda g: (0.5 * g / out,))


def square(x):
    xv = _val(x)
    return _op(xv * xv, (x,), lambda g: (2.0 * g * xv,))


def floor(x, minimum: float):
    """``max(x, minimum)``; the gradient is blocked where the floor is active."""
    xv = _val(x)
    active = xv > minimum
    return _op(np.where(active, xv, minimum), (x,), lambda g: (g * active,))


def total(x):
    xv = _val(x)
    return _op(np.sum(xv), (x,), lambda g: (np.full_like(xv, g),))


def concat(parts):
    """Concatenate 2-D tensors along columns."""
    vals = [_val(p) for p in parts]
    out = np.concatenate(vals, axis=1)
    edges = np.cumsum([0] + [v.shape[1] for v in vals])

    def backward(g):
        return tuple(g[:, edges[i] : edges[i + 1]] for i in range(len(vals)))

    return _op(out, tuple(parts), backward)


def split(x, sizes):
    """Inverse of :func:`concat` for a 2-D tensor."""
    xv = _val(x)
    edges = np.cumsum([0] + list(sizes))
    if edges[-1] != xv.shape[1]:
        raise ValidationError("split sizes do not add up")
    outs = []
    for i in range(len(sizes)):
        lo, hi = edges[i], edges[i + 1]

        def backward(g, lo=lo, hi=hi):
            full = np.zeros_like(xv)
            full[:, lo:hi] = g
            return (full,)

        outs.append(_op(xv[:, lo:hi], (x,), backward))
    return outs


# --------------------------------------------------------------------------
# Fully-connected networks


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValidationError("layer lists differ in length")
        for i, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if act not in ACTIVATIONS:
                raise ValidationError(f"unknown activation {act!r}")
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValidationError(f"layer {i}: bias shape {b.shape} vs weight {w.shape}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValidationError(f"layer {i} input {w.shape[1]} != previous output")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def named_arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}W{i}"] = w
            out[f"{prefix}b{i}"] = b
        return out

    def replace_arrays(self, arrays: Mapping[str, np.ndarray], prefix: str = "") -> MlpParams:
        n = len(self.weights)
        return MlpParams(
            [arrays[f"{prefix}W{i}"] for i in range(n)],
            [arrays[f"{prefix}b{i}"] for i in range(n)],
            list(self.activations),
        )


def init_mlp(sizes, activations, rng: np.random.Generator, zero: bool = False) -> MlpParams:
    """Glorot-uniform weights and zero biases for layer widths ``sizes``."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if zero:
            w = np.zeros((fan_out, fan_in))
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, list(activations))


def mlp_forward(p: MlpParams, x, tape: Tape | None = None):
    """Evaluate the network on a vector or a (batch, in) matrix.

    Without a tape this is plain numpy; with a tape the parameters become
    leaves and the result is a :class:`Tensor`.
    """
    if tape is None:
        h = np.asarray(_val(x), dtype=np.float64)
        vector = h.ndim == 1
        h = np.atleast_2d(h)
        if h.shape[1] != p.in_dim:
            raise ValidationError(f"input length {h.shape[1]} != network input {p.in_dim}")
        for w, b, act in zip(p.weights, p.biases, p.activations):
            h = h @ w.T + b
            if act == "tanh":
                h = np.tanh(h)
        return h[0] if vector else h
    if not isinstance(x, Tensor):
        x = tape.constant(np.atleast_2d(x))
    if x.value.shape[1] != p.in_dim:
        raise ValidationError(f"input length {x.value.shape[1]} != network input {p.in_dim}")
    h = x
    for w, b, act in zip(p.weights, p.biases, p.activations):
        h = affine(h, tape.leaf(w), tape.leaf(b))
        if act == "tanh":
            h = tanh(h)
    return h


def backward(tape: Tape, loss: Tensor, loss_adjoint: float = 1.0):
    return tape.backward(loss, loss_adjoint)


# --------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    step_size: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValidationError("Adam betas must lie in (0, 1)")


def adam_update(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
                state: AdamState, ascent: bool = True):
    """One bias-corrected Adam step; returns fresh ``(params, state)`` objects."""
    if set(params) != set(grads):
        raise ValidationError("parameter and gradient names differ")
    t = state.step + 1
    sign = 1.0 if ascent else -1.0
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValidationError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        m = state.beta1 * state.m.get(name, 0.0) + (1 - state.beta1) * g
        v = state.beta2 * state.v.get(name, 0.0) + (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        new_params[name] = p + sign * state.step_size * m_hat / (np.sqrt(v_hat) + state.epsilon)
        new_m[name], new_v[name] = m, v
    new_state = AdamState(state.step_size, state.beta1, state.beta2, state.epsilon, new_m, new_v, t)
    return new_params, new_state
