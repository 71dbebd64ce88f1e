"""
actiongraphpy.tensor
--------------------

Minimal dense-tensor algebra with reverse-mode automatic differentiation and an
Adam optimizer, sized for two-layer MLPs, multi-head attention, masked
softmax / mean and scalar losses.

Model
-----
- `Tensor` wraps a float64 numpy array (`values`) plus an optional `grad` slot.
  Parameters (`Tensor.parameter`) always carry a grad slot; recorded intermediates
  receive one when backward reaches them.
- Operations record onto the `Tape` that is active on the current thread
  (`with Tape() as tape:`), and only when one of their inputs requires grad.
  Outside a tape every op is a plain forward computation.
- A tape is single-use: `backward()` consumes it, a second call raises TapeError.
- Every op accepts leading batch axes; `add`/`sub`/`mul` broadcast like numpy and
  gradients are summed back onto the operand shape.

Usage
-----
>>> W = Tensor.parameter(np.ones((3, 2)), name="W")
>>> x = Tensor(np.arange(3.0).reshape(1, 3))
>>> with Tape() as tape:
...     loss = tsum(relu(matmul(x, W)))
...     backward(loss)
>>> W.grad
"""

from __future__ import annotations

import math
import threading
import logging
from dataclasses import dataclass, field
from typing import *

import numpy as np

from .exceptions import (
    ShapeMismatchError,
    NonFiniteError,
    AllMaskedError,
    TapeError,
    MissingGradError,
)

logger = logging.getLogger(__name__)

__all__ = [
    "Tensor", "Tape", "OptimizerState", "Adam", "MLP",
    "forward_op", "matmul", "add", "sub", "mul", "relu", "concat", "scale",
    "tsum", "mean", "exp", "minimum", "clip", "transpose", "reshape", "gather",
    "masked_softmax", "masked_log_softmax", "masked_mean",
    "backward", "optimizer_step", "init_uniform", "no_grad_values",
]

_local = threading.local()


class Tensor:
    """
    Dense n-dimensional float64 array with an optional gradient slot.

    Parameters
    ----------
    values : array-like
        Copied into a C-contiguous float64 array.
    requires_grad : bool
        True for learnable parameters; the grad slot is allocated (zeros).
    name : Optional[str]
        Label used in checkpoints and error messages.
    """

    __slots__ = ("values", "grad", "requires_grad", "name", "_tape")

    def __init__(self, values: Any, *, requires_grad: bool = False, name: Optional[str] = None):
        self.values = np.array(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = np.zeros_like(self.values) if requires_grad else None
        self.name = name
        self._tape: Optional[Tape] = None

    @classmethod
    def parameter(cls, values: Any, name: Optional[str] = None) -> "Tensor":
        return cls(values, requires_grad=True, name=name)

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool = False) -> "Tensor":
        t = cls.__new__(cls)
        t.values = arr
        t.requires_grad = requires_grad
        t.grad = None
        t.name = None
        t._tape = None
        return t

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return int(self.values.size)

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeMismatchError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    # operator sugar; every path goes through the recorded ops below
    def __add__(self, other: Any) -> "Tensor":
        return add(self, _as_tensor(other))

    def __radd__(self, other: Any) -> "Tensor":
        return add(_as_tensor(other), self)

    def __sub__(self, other: Any) -> "Tensor":
        return sub(self, _as_tensor(other))

    def __rsub__(self, other: Any) -> "Tensor":
        return sub(_as_tensor(other), self)

    def __mul__(self, other: Any) -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    def __rmul__(self, other: Any) -> "Tensor":
        return self.__mul__(other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"<Tensor shape={self.shape}{label} requires_grad={self.requires_grad}>"


def _as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class _Record:
    out: Tensor
    inputs: Tuple[Tensor, ...]
    backward: BackwardFn
    op: str


class Tape:
    """
    Ordered record of operations with their local backward rules.

    A tape becomes the thread's active tape inside `with Tape():`. Tapes nest; the
    innermost one records. Never share a tape between concurrent runs.
    """

    def __init__(self):
        self._records: List[_Record] = []
        self._consumed = False

    # context management
    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        stack = getattr(_local, "stack", [])
        if stack and stack[-1] is self:
            stack.pop()

    @staticmethod
    def current() -> Optional["Tape"]:
        stack = getattr(_local, "stack", None)
        return stack[-1] if stack else None

    @property
    def consumed(self) -> bool:
        return self._consumed

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, inputs: Tuple[Tensor, ...], backward_fn: BackwardFn, op: str) -> None:
        if self._consumed:
            raise TapeError(f"cannot record {op!r} on a consumed tape; open a new Tape()")
        out._tape = self
        self._records.append(_Record(out, inputs, backward_fn, op))

    def clear(self) -> None:
        """Drop every recorded intermediate; parameters are untouched."""
        self._records.clear()
        self._consumed = False

    def backward(self, loss: Tensor) -> None:
        """
        Replay recorded ops in reverse order and accumulate d(loss)/d(param) into
        every parameter's grad slot.

        Raises
        ------
        TapeError
            Empty tape, non-scalar loss, or tape already consumed.
        """
        if self._consumed:
            raise TapeError("backward already ran on this tape; re-record the forward pass first")
        if not self._records:
            raise TapeError("backward called on an empty tape")
        if loss.values.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._consumed = True
        if loss._tape is not self:
            # constant loss: nothing on the path, grads stay as they are
            logger.debug("loss not recorded on this tape; all gradients are zero")
            return

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
        leaves: Dict[int, Tensor] = {}
        for rec in reversed(self._records):
            g = grads.pop(id(rec.out), None)
            if g is None:
                continue
            rec.out.grad = g
            input_grads = rec.backward(g)
            for inp, ig in zip(rec.inputs, input_grads):
                if ig is None or not inp.requires_grad:
                    continue
                ig = _unbroadcast(ig, inp.shape)
                key = id(inp)
                if inp._tape is not self:
                    leaves[key] = inp
                prev = grads.get(key)
                grads[key] = ig if prev is None else prev + ig
        for key, leaf in leaves.items():
            g = grads.get(key)
            if g is None:
                continue
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.values)
            leaf.grad += g


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _check_finite(op: str, *tensors: Tensor) -> None:
    for t in tensors:
        if not np.isfinite(t.values).all():
            raise NonFiniteError(f"{op}: non-finite input (shape {t.shape})", detail={"op": op})


def _emit(values: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn: BackwardFn, op: str) -> Tensor:
    tape = Tape.current()
    if tape is not None and any(t.requires_grad for t in inputs):
        out = Tensor._wrap(values, requires_grad=True)
        tape.record(out, inputs, backward_fn, op)
        return out
    return Tensor._wrap(values)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(f"{op}: incompatible shapes {a.shape} and {b.shape}",
                                 detail={"left": a.shape, "right": b.shape}) from None


# Elementary ops
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes; both operands need ndim >= 2."""
    _check_finite("matmul", a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(f"matmul: shapes {a.shape} and {b.shape} do not conform",
                                 detail={"left": a.shape, "right": b.shape})
    av, bv = a.values, b.values

    def _back(g: np.ndarray):
        return (np.matmul(g, np.swapaxes(bv, -1, -2)), np.matmul(np.swapaxes(av, -1, -2), g))

    return _emit(np.matmul(av, bv), (a, b), _back, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_finite("add", a, b)
    _broadcast_shape("add", a, b)
    return _emit(a.values + b.values, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_finite("sub", a, b)
    _broadcast_shape("sub", a, b)
    return _emit(a.values - b.values, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_finite("mul", a, b)
    _broadcast_shape("mul", a, b)
    av, bv = a.values, b.values
    return _emit(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def relu(a: Tensor) -> Tensor:
    _check_finite("relu", a)
    active = a.values > 0
    return _emit(np.where(active, a.values, 0.0), (a,), lambda g: (g * active,), "relu")


def scale(a: Tensor, factor: float) -> Tensor:
    _check_finite("scale", a)
    factor = float(factor)
    if not math.isfinite(factor):
        raise NonFiniteError(f"scale: non-finite factor {factor}")
    return _emit(a.values * factor, (a,), lambda g: (g * factor,), "scale")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along `axis`; all other dimensions must match."""
    if not tensors:
        raise ShapeMismatchError("concat: no inputs")
    _check_finite("concat", *tensors)
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != ax):
            raise ShapeMismatchError(f"concat: shapes {tensors[0].shape} and {t.shape} differ off axis {axis}",
                                     detail={"left": tensors[0].shape, "right": t.shape})
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def _back(g: np.ndarray):
        return tuple(np.split(g, splits, axis=ax))

    return _emit(np.concatenate([t.values for t in tensors], axis=ax), tuple(tensors), _back, "concat")


def tsum(a: Tensor, axis: Optional[int] = None) -> Tensor:
    """Sum over one axis, or over everything when axis is None (scalar result)."""
    shape = a.shape

    def _back(g: np.ndarray):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _emit(np.asarray(a.values.sum(axis=axis)), (a,), _back, "sum")


def mean(a: Tensor) -> Tensor:
    return scale(tsum(a), 1.0 / max(a.size, 1))


def exp(a: Tensor) -> Tensor:
    _check_finite("exp", a)
    out = np.exp(a.values)
    return _emit(out, (a,), lambda g: (g * out,), "exp")


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; ties send the gradient to `a`."""
    _check_finite("minimum", a, b)
    _broadcast_shape("minimum", a, b)
    pick_a = a.values <= b.values
    return _emit(np.where(pick_a, a.values, b.values), (a, b),
                 lambda g: (g * pick_a, g * ~pick_a), "minimum")


def clip(a: Tensor, low: float, high: float) -> Tensor:
    """Clamp to [low, high]; zero gradient wherever the clamp is active."""
    _check_finite("clip", a)
    inside = (a.values > low) & (a.values < high)
    return _emit(np.clip(a.values, low, high), (a,), lambda g: (g * inside,), "clip")


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _emit(np.transpose(a.values, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    try:
        out = a.values.reshape(tuple(shape))
    except ValueError:
        raise ShapeMismatchError(f"reshape: cannot view {src} as {tuple(shape)}") from None
    return _emit(out, (a,), lambda g: (g.reshape(src),), "reshape")


def gather(a: Tensor, index: np.ndarray) -> Tensor:
    """Pick a[..., index[...]] along the last axis; `index` has shape a.shape[:-1]."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.shape != a.shape[:-1]:
        raise ShapeMismatchError(f"gather: index shape {idx.shape} does not match {a.shape[:-1]}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[-1]):
        raise ShapeMismatchError(f"gather: index out of range for last axis of size {a.shape[-1]}")
    shape = a.shape

    def _back(g: np.ndarray):
        out = np.zeros(shape)
        np.put_along_axis(out, idx[..., None], g[..., None], axis=-1)
        return (out,)

    return _emit(np.take_along_axis(a.values, idx[..., None], axis=-1)[..., 0], (a,), _back, "gather")


# Masked reductions
def _mask_array(mask: Any, scores: Tensor, op: str) -> np.ndarray:
    m = np.asarray(mask.values if isinstance(mask, Tensor) else mask) != 0
    try:
        np.broadcast_shapes(m.shape, scores.shape)
    except ValueError:
        raise ShapeMismatchError(f"{op}: mask shape {m.shape} does not fit scores {scores.shape}") from None
    return np.broadcast_to(m, scores.shape)


def masked_softmax(scores: Tensor, mask: Any, axis: int = -1) -> Tensor:
    """
    Softmax along `axis` restricted to entries where `mask` is nonzero.

    Masked entries are exactly 0; unmasked entries are positive and sum to 1. Uses
    max-subtraction over the unmasked entries for stability.

    Raises
    ------
    AllMaskedError
        Some slice along `axis` has no unmasked entry.
    """
    _check_finite("masked_softmax", scores)
    m = _mask_array(mask, scores, "masked_softmax")
    if not m.any(axis=axis).all():
        raise AllMaskedError("masked_softmax: every entry of a row is masked")
    shifted = np.where(m, scores.values, -np.inf)
    shifted = shifted - shifted.max(axis=axis, keepdims=True)
    e = np.where(m, np.exp(shifted), 0.0)
    y = e / e.sum(axis=axis, keepdims=True)

    def _back(g: np.ndarray):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _emit(y, (scores,), _back, "masked_softmax")


def masked_log_softmax(scores: Tensor, mask: Any, axis: int = -1) -> Tensor:
    """log of masked_softmax on unmasked entries; masked entries hold 0 and get no gradient."""
    _check_finite("masked_log_softmax", scores)
    m = _mask_array(mask, scores, "masked_log_softmax")
    if not m.any(axis=axis).all():
        raise AllMaskedError("masked_log_softmax: every entry of a row is masked")
    shifted = np.where(m, scores.values, -np.inf)
    shifted = shifted - shifted.max(axis=axis, keepdims=True)
    e = np.where(m, np.exp(shifted), 0.0)
    total = e.sum(axis=axis, keepdims=True)
    y = e / total
    out = np.where(m, shifted - np.log(total), 0.0)

    def _back(g: np.ndarray):
        gm = np.where(m, g, 0.0)
        return (gm - y * gm.sum(axis=axis, keepdims=True),)

    return _emit(out, (scores,), _back, "masked_log_softmax")


def masked_mean(rows: Tensor, mask: Any) -> Tensor:
    """
    Mean of the rows (axis -2) where `mask` (shape rows.shape[:-1]) is nonzero.

    The denominator is max(count, 1), so an all-masked input yields the zero vector.
    """
    _check_finite("masked_mean", rows)
    if rows.ndim < 2:
        raise ShapeMismatchError(f"masked_mean: rows need ndim >= 2, got shape {rows.shape}")
    m = np.asarray(mask.values if isinstance(mask, Tensor) else mask, dtype=np.float64)
    m = (m != 0).astype(np.float64)
    if m.shape != rows.shape[:-1]:
        raise ShapeMismatchError(f"masked_mean: mask shape {m.shape} does not match rows {rows.shape}")
    denom = np.maximum(m.sum(axis=-1, keepdims=True), 1.0)
    weights = (m / denom)[..., None]
    out = (rows.values * weights).sum(axis=-2)

    def _back(g: np.ndarray):
        return (np.expand_dims(g, -2) * weights,)

    return _emit(out, (rows,), _back, "masked_mean")


_FORWARD_OPS: Dict[str, Callable[..., Tensor]] = {
    "matmul": lambda inputs, **kw: matmul(*inputs),
    "add": lambda inputs, **kw: add(*inputs),
    "relu": lambda inputs, **kw: relu(*inputs),
    "concat": lambda inputs, **kw: concat(inputs, axis=kw.get("axis", -1)),
    "scale": lambda inputs, **kw: scale(inputs[0], kw["factor"]),
}


def forward_op(kind: str, inputs: Sequence[Tensor], **kwargs: Any) -> Tensor:
    """
    Dispatch one of the elementary ops by name: matmul, add, relu, concat, scale.

    `scale` takes `factor=`; `concat` takes an optional `axis=`.
    """
    try:
        fn = _FORWARD_OPS[kind]
    except KeyError:
        raise ValueError(f"Unknown op {kind!r}; expected one of {sorted(_FORWARD_OPS)}") from None
    expected = {"matmul": 2, "add": 2, "relu": 1, "scale": 1}.get(kind)
    if expected is not None and len(inputs) != expected:
        raise ShapeMismatchError(f"{kind} takes {expected} input(s), got {len(inputs)}")
    return fn(list(inputs), **kwargs)


def backward(loss: Tensor, tape: Optional[Tape] = None) -> None:
    """
    Populate grads of every parameter on the path to `loss`.

    Uses the tape that recorded `loss`, else the active tape.
    """
    tape = tape or loss._tape or Tape.current()
    if tape is None:
        raise TapeError("backward called with no tape: record the forward pass inside `with Tape():`")
    tape.backward(loss)


def no_grad_values(t: Tensor) -> np.ndarray:
    return t.values


# Initialization and optimization
def init_uniform(rng: np.random.Generator, fan_in: int, shape: Sequence[int], name: Optional[str] = None) -> Tensor:
    """Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] parameter."""
    bound = 1.0 / math.sqrt(max(int(fan_in), 1))
    return Tensor.parameter(rng.uniform(-bound, bound, size=tuple(shape)), name=name)


@dataclass
class OptimizerState:
    """
    Adam state.

    Attributes
    ----------
    lr, beta1, beta2, eps : float
        Learning rate (5e-4), moment decays (0.9, 0.999), stability epsilon (1e-8).
    step : int
        Number of updates applied so far.
    m, v : List[np.ndarray]
        First / second moment accumulators, one per parameter (same shapes).
    """
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def optimizer_step(params: Sequence[Tensor], state: OptimizerState) -> None:
    """
    Bias-corrected Adam update of every parameter, then zero its grad.

    Raises
    ------
    MissingGradError
        A parameter has no grad slot.
    """
    for p in params:
        if p.grad is None:
            raise MissingGradError(f"parameter {p.name or '<unnamed>'} has no gradient", detail={"shape": p.shape})
    if not state.m:
        state.m = [np.zeros_like(p.values) for p in params]
        state.v = [np.zeros_like(p.values) for p in params]
    if len(state.m) != len(params):
        raise ShapeMismatchError(f"optimizer tracks {len(state.m)} parameters, got {len(params)}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, m, v in zip(params, state.m, state.v):
        if m.shape != p.values.shape:
            raise ShapeMismatchError(f"moment shape {m.shape} does not match parameter {p.shape}")
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.values -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.grad[...] = 0.0


class Adam:
    """Thin holder pairing a parameter list with its OptimizerState."""

    def __init__(self, params: Sequence[Tensor], lr: float = 5e-4, *,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = OptimizerState(lr=float(lr), beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self) -> None:
        optimizer_step(self.params, self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


class MLP:
    """
    Two-or-more layer perceptron with ReLU between layers.

    Parameters
    ----------
    sizes : Sequence[int]
        Layer widths including input, e.g. (in, 64, out).
    rng : np.random.Generator
        Initialization stream.
    name : str
        Prefix for parameter names (`<name>.W0`, `<name>.b0`, ...).
    final_relu : bool
        Apply ReLU to the output layer too.
    """

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, *, name: str = "mlp", final_relu: bool = False):
        if len(sizes) < 2:
            raise ValueError("MLP needs at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.name = name
        self.final_relu = bool(final_relu)
        self.weights: List[Tensor] = []
        self.biases: List[Tensor] = []
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            self.weights.append(init_uniform(rng, fan_in, (fan_in, fan_out), name=f"{name}.W{i}"))
            self.biases.append(init_uniform(rng, fan_in, (fan_out,), name=f"{name}.b{i}"))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.sizes[0]:
            raise ShapeMismatchError(f"{self.name}: input width {x.shape[-1]} != expected {self.sizes[0]}",
                                     detail={"left": x.shape, "right": (self.sizes[0],)})
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = add(matmul(h, W), b)
            if i < last or self.final_relu:
                h = relu(h)
        return h

    def parameters(self) -> List[Tensor]:
        out: List[Tensor] = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def __repr__(self) -> str:
        return f"<MLP {self.name} sizes={self.sizes}>"
