"""Dense float64 tensors with reverse-mode automatic differentiation.

Values live in numpy arrays. Differentiable operations append a record to
the active :class:`GradientTape`; records are already in topological order
because execution is eager. A tape is opened as a context manager around a
single loss computation, ``backward`` replays the records in reverse, and
the tape is dropped afterwards (one graph per loss). Tensors that are not
watched by the active tape behave as constants.

Only float64 is supported; the gradient-check tolerances used by the test
suite assume double precision. Constants (labels, masks, token ids) are
passed around as plain numpy arrays, Tensors are reserved for values that
may need gradients.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "GradientTape",
    "set_debug_checks",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "reshape",
    "transpose",
    "reduce_sum",
    "reduce_mean",
    "embedding",
    "sigmoid",
    "gelu",
    "layer_norm",
    "masked_softmax",
    "dropout",
    "bce_with_logits",
    "stable_sigmoid",
    "grad_check",
]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_active_tape: "GradientTape | None" = None
_debug_checks = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf detection on every created tensor (off by default)."""
    global _debug_checks
    _debug_checks = bool(enabled)


class Tensor:
    """A dense row-major float64 array, optionally tracked on a tape."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data) -> None:
        data = np.asarray(data, dtype=np.float64)
        if not data.flags.c_contiguous:
            # ascontiguousarray would promote 0-d to 1-d; 0-d is already
            # contiguous so this branch only sees ndim >= 1.
            data = np.ascontiguousarray(data)
        self.data = data
        self.tape: GradientTape | None = None
        self.node_id: int | None = None
        if _debug_checks and not np.all(np.isfinite(self.data)):
            raise FloatingPointError("tensor contains NaN or Inf")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __float__(self) -> float:
        return self.item()

    def __repr__(self) -> str:
        tracked = "" if self.node_id is None else f", node={self.node_id}"
        return f"Tensor(shape={self.data.shape}{tracked})"

    # Arithmetic sugar; scalars and arrays are wrapped as constants.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class GradientTape:
    """Ordered record of primitive operations for one reverse pass.

    Usage::

        with GradientTape() as tape:
            for p in params:
                tape.watch(p)
            loss = f(params)
        grads = tape.backward(loss)   # {node_id: ndarray}

    ``backward`` is a pure read of the record: calling it twice on the same
    tape yields bit-identical gradients. Tapes do not nest.
    """

    def __init__(self) -> None:
        self._records: list[tuple[int, tuple[int | None, ...], Callable]] = []
        self._n_nodes = 0

    def __enter__(self) -> "GradientTape":
        global _active_tape
        if _active_tape is not None:
            raise RuntimeError("a gradient tape is already active")
        _active_tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        global _active_tape
        _active_tape = None

    def _new_node(self) -> int:
        node = self._n_nodes
        self._n_nodes += 1
        return node

    def watch(self, tensor: Tensor) -> None:
        """Mark a leaf tensor (parameter) as differentiable on this tape."""
        if tensor.tape is not self:
            tensor.tape = self
            tensor.node_id = self._new_node()

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Reverse sweep from a scalar loss; returns {node_id: gradient}.

        Visits every record exactly once, in reverse topological order.
        Nodes that do not influence the loss are absent from the result.
        """
        if loss.tape is not self or loss.node_id is None:
            raise ValueError("loss was not recorded on this tape")
        if loss.data.shape != ():
            raise ValueError(f"loss must be a scalar, got shape {loss.data.shape}")
        grads: dict[int, np.ndarray] = {loss.node_id: np.ones(())}
        for out_id, input_ids, backward_fn in reversed(self._records):
            grad_out = grads.get(out_id)
            if grad_out is None:
                continue
            for input_id, grad_in in zip(input_ids, backward_fn(grad_out)):
                if input_id is None or grad_in is None:
                    continue
                seen = grads.get(input_id)
                grads[input_id] = grad_in if seen is None else seen + grad_in
        return grads

    def gradient(
        self, loss: Tensor, params: Mapping[str, Tensor]
    ) -> dict[str, np.ndarray]:
        """Gradients for named parameters; zeros for params the loss ignores."""
        raw = self.backward(loss)
        out = {}
        for name, p in params.items():
            g = raw.get(p.node_id) if p.tape is self else None
            out[name] = np.zeros_like(p.data) if g is None else np.broadcast_to(
                g, p.data.shape
            ).astype(np.float64, copy=False)
        return out


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    tape = _active_tape
    if tape is None:
        return out
    input_ids = tuple(
        t.node_id if (t.tape is tape and t.node_id is not None) else None
        for t in inputs
    )
    if any(i is not None for i in input_ids):
        out.tape = tape
        out.node_id = tape._new_node()
        tape._records.append((out.node_id, input_ids, backward_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape of a broadcast input."""
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _record(out, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data / b.data)

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return _record(out, (a, b), backward)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(-a.data)
    return _record(out, (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# shape and contraction


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batching semantics; both operands >= 2-D."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands must have at least 2 dimensions")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(
            f"matmul inner dimensions differ: {a.data.shape} @ {b.data.shape}"
        )
    out = Tensor(a.data @ b.data)

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _record(out, (a, b), backward)


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    return _record(out, (a,), lambda g: (np.asarray(g).reshape(a.data.shape),))


def transpose(a, axes: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.transpose(axes))
    inverse = np.argsort(axes)
    return _record(out, (a,), lambda g: (np.asarray(g).transpose(inverse),))


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _record(out, (a,), backward)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))
    scale = a.data.size / out.data.size

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / scale, a.data.shape).copy(),)

    return _record(out, (a,), backward)


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather ``weight[ids]``; backward scatter-adds into the table."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ValueError("embedding ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= weight.data.shape[0]):
        raise ValueError("embedding id out of range")
    out = Tensor(weight.data[ids])

    def backward(g):
        gw = np.zeros_like(weight.data)
        np.add.at(gw, ids, g)
        return (gw,)

    return _record(out, (weight,), backward)


# ---------------------------------------------------------------------------
# nonlinearities


def _sigmoid_raw(x: np.ndarray) -> np.ndarray:
    # Branch on sign so exp never sees a large positive argument.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def stable_sigmoid(x) -> np.ndarray:
    """Overflow-free logistic function on a plain array."""
    return _sigmoid_raw(np.asarray(x, dtype=np.float64))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    s = _sigmoid_raw(a.data)
    out = Tensor(s)
    return _record(out, (a,), lambda g: (g * s * (1.0 - s),))


def gelu(a) -> Tensor:
    """Exact Gaussian error linear unit: x * Phi(x) with the true erf."""
    a = _as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = Tensor(x * cdf)

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        return (g * (cdf + x * pdf),)

    return _record(out, (a,), backward)


def layer_norm(a, gain: Tensor | None = None, bias: Tensor | None = None,
               eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis; optional affine gain/bias of shape [D]."""
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    a = _as_tensor(a)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std
    if gain is None and bias is None:
        out = Tensor(x_hat)
    else:
        g_data = gain.data if gain is not None else 1.0
        b_data = bias.data if bias is not None else 0.0
        out = Tensor(x_hat * g_data + b_data)

    def backward(g):
        g = np.asarray(g)
        g_data = gain.data if gain is not None else 1.0
        d_xhat = g * g_data
        dx = inv_std * (
            d_xhat
            - d_xhat.mean(axis=-1, keepdims=True)
            - x_hat * (d_xhat * x_hat).mean(axis=-1, keepdims=True)
        )
        d_gain = None
        d_bias = None
        if gain is not None:
            d_gain = _unbroadcast(g * x_hat, gain.data.shape)
        if bias is not None:
            d_bias = _unbroadcast(g, bias.data.shape)
        return dx, d_gain, d_bias

    # Absent affine params occupy None slots and never receive gradients.
    tape = _active_tape
    if tape is None:
        return out
    ids = [
        a.node_id if a.tape is tape else None,
        gain.node_id if (gain is not None and gain.tape is tape) else None,
        bias.node_id if (bias is not None and bias.tape is tape) else None,
    ]
    if any(i is not None for i in ids):
        out.tape = tape
        out.node_id = tape._new_node()
        tape._records.append((out.node_id, tuple(ids), backward))
    return out


def masked_softmax(a, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` restricted to positions where ``mask`` is true.

    Masked positions get probability exactly 0. A fully masked row yields
    all zeros rather than NaN.
    """
    a = _as_tensor(a)
    m = np.broadcast_to(np.asarray(mask, dtype=bool), a.data.shape)
    neg_inf = np.where(m, a.data, -np.inf)
    with np.errstate(invalid="ignore"):
        row_max = neg_inf.max(axis=axis, keepdims=True)
        shifted = np.where(m, neg_inf - row_max, -np.inf)
    exp = np.where(m, np.exp(shifted, where=m, out=np.zeros_like(a.data)), 0.0)
    total = exp.sum(axis=axis, keepdims=True)
    probs = np.divide(exp, total, out=np.zeros_like(exp), where=total > 0)
    out = Tensor(probs)

    def backward(g):
        inner = (g * probs).sum(axis=axis, keepdims=True)
        return (probs * (g - inner),)

    return _record(out, (a,), backward)


def dropout(a, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    a = _as_tensor(a)
    if rate == 0.0:
        return a
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    out = Tensor(a.data * keep)
    return _record(out, (a,), lambda g: (g * keep,))


def bce_with_logits(logits, targets: np.ndarray) -> Tensor:
    """Elementwise binary cross-entropy on logits, stable for any magnitude.

    Uses max(x,0) - x*y + log1p(exp(-|x|)); the gradient sigmoid(x) - y is
    smooth, so finite-difference checks stay clean.
    """
    logits = _as_tensor(logits)
    x = logits.data
    y = np.asarray(targets, dtype=np.float64)
    loss = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    out = Tensor(loss)
    return _record(out, (logits,), lambda g: (g * (_sigmoid_raw(x) - y),))


# ---------------------------------------------------------------------------
# verification


def grad_check(
    f: Callable[[], Tensor],
    params: Iterable[Tensor] | Mapping[str, Tensor],
    h: float = 1e-5,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` must rebuild the scalar loss from the current contents of
    ``params`` on every call; it is evaluated twice per parameter
    coordinate with the coordinate nudged by ±h.
    """
    if isinstance(params, Mapping):
        tensors = list(params.values())
    else:
        tensors = list(params)
    with GradientTape() as tape:
        for p in tensors:
            tape.watch(p)
        loss = f()
    analytic = tape.backward(loss)

    worst = 0.0
    for p in tensors:
        grad = analytic.get(p.node_id)
        grad = np.zeros_like(p.data) if grad is None else np.broadcast_to(
            grad, p.data.shape
        )
        flat = p.data.reshape(-1)
        grad_flat = np.asarray(grad).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f().data)
            flat[i] = orig - h
            f_minus = float(f().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(grad_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(grad_flat[i] - numeric) / denom)
    return worst
