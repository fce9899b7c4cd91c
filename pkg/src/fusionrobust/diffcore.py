"""Minimal dense-tensor reverse-mode differentiation core.

Just enough machinery for desk-scale fusion experiments: dense layers,
1x1 convolution over channel-last feature maps, ReLU, spatial mean
pooling, mean-squared-error / logistic / softmax cross-entropy losses, an
l1 penalty with the sgn(0) = 0 subgradient convention, and Adam / SGD
optimizers with tag-filtered updates.  Everything runs on 64-bit numpy
arrays; a graph instance is single-threaded during forward/backward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, ShapeError, StateError

PARAMETER_TAGS = ("extractor", "fusion", "head")


class Tensor:
    """Dense float64 array with optional gradient accumulation."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def backward(self):
        if self.data.size != 1:
            raise StateError("backward requires a scalar loss node")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                order.append(node)
            else:
                stack.append((node, True))
                for p in node._parents:
                    if id(p) not in seen:
                        stack.append((p, False))
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def scale(a: Tensor, s: float) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.accumulate(g * s)

    return Tensor(a.data * s, parents=(a,), backward=backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Dense product; a is (..., n, k) or (k,), b is (k, m)."""
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul inner dims differ: {a.data.shape} vs {b.data.shape}"
        )
    out_data = a.data @ b.data

    def backward(g):
        if b.data.ndim == 1:
            # (..., k) @ (k,) -> (...,): vector right operand
            if a.requires_grad:
                a.accumulate(
                    _unbroadcast(np.asarray(g)[..., None] * b.data, a.data.shape)
                )
            if b.requires_grad:
                lhs = a.data.reshape(-1, a.data.shape[-1])
                b.accumulate(lhs.T @ np.ravel(g))
            return
        if a.requires_grad:
            a.accumulate(_unbroadcast(g @ b.data.T, a.data.shape))
        if b.requires_grad:
            if a.data.ndim == 1:
                b.accumulate(np.outer(a.data, g))
            else:
                lhs = a.data.reshape(-1, a.data.shape[-1])
                rhs = g.reshape(-1, g.shape[-1])
                b.accumulate(lhs.T @ rhs)

    return Tensor(out_data, parents=(a, b), backward=backward)


def conv1x1(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """1x1 convolution over channel-last maps: (n, a, b, cin) x (cin, cout)."""
    if x.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(
            f"conv1x1 channel mismatch: input {x.data.shape} vs weight {w.data.shape}"
        )
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out_data = x.data * mask

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * mask)

    return Tensor(out_data, parents=(x,), backward=backward)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError("transpose supports 2-D tensors only")
    out_data = x.data.T

    def backward(g):
        if x.requires_grad:
            x.accumulate(g.T)

    return Tensor(out_data, parents=(x,), backward=backward)


def concat_channels(xs: list[Tensor]) -> Tensor:
    """Concatenate along the last (channel) axis."""
    lead = xs[0].data.shape[:-1]
    for x in xs:
        if x.data.shape[:-1] != lead:
            raise ShapeError("concat inputs must share all non-channel dims")
    out_data = np.concatenate([x.data for x in xs], axis=-1)
    splits = np.cumsum([x.data.shape[-1] for x in xs])[:-1]

    def backward(g):
        for x, piece in zip(xs, np.split(g, splits, axis=-1)):
            if x.requires_grad:
                x.accumulate(piece)

    return Tensor(out_data, parents=tuple(xs), backward=backward)


def mean_pool_spatial(x: Tensor) -> Tensor:
    """Mean over the two spatial axes of an (n, a, b, c) map."""
    if x.data.ndim != 4:
        raise ShapeError("mean_pool_spatial expects an (n, a, b, c) tensor")
    n, a, b, c = x.data.shape
    out_data = x.data.mean(axis=(1, 2))

    def backward(g):
        if x.requires_grad:
            x.accumulate(np.broadcast_to(g[:, None, None, :], (n, a, b, c)) / (a * b))

    return Tensor(out_data, parents=(x,), backward=backward)


def mean_all(x: Tensor) -> Tensor:
    out_data = np.array(x.data.mean())

    def backward(g):
        if x.requires_grad:
            x.accumulate(np.full_like(x.data, float(g) / x.data.size))

    return Tensor(out_data, parents=(x,), backward=backward)


def sum_all(x: Tensor) -> Tensor:
    out_data = np.array(x.data.sum())

    def backward(g):
        if x.requires_grad:
            x.accumulate(np.full_like(x.data, float(g)))

    return Tensor(out_data, parents=(x,), backward=backward)


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    t = np.asarray(target, dtype=np.float64)
    if pred.data.shape != t.shape:
        raise ShapeError(f"mse target shape {t.shape} != pred shape {pred.data.shape}")
    diff = pred.data - t
    out_data = np.array((diff**2).mean())

    def backward(g):
        if pred.requires_grad:
            pred.accumulate(float(g) * 2.0 * diff / diff.size)

    return Tensor(out_data, parents=(pred,), backward=backward)


def logistic_loss(pred: Tensor, labels: np.ndarray) -> Tensor:
    """Mean log(1 + exp(-y * f)) with labels in {-1, +1}."""
    y = np.asarray(labels, dtype=np.float64)
    if pred.data.shape != y.shape:
        raise ShapeError("logistic labels must match prediction shape")
    m = y * pred.data
    out_data = np.array(np.logaddexp(0.0, -m).mean())
    # d/df mean softplus(-y f) = -y * sigmoid(-y f) / n
    sig = 1.0 / (1.0 + np.exp(np.clip(m, -500, 500)))

    def backward(g):
        if pred.requires_grad:
            pred.accumulate(float(g) * (-y * sig) / y.size)

    return Tensor(out_data, parents=(pred,), backward=backward)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of (n, k) logits against integer labels."""
    y = np.asarray(labels)
    if logits.data.ndim != 2 or y.shape != (logits.data.shape[0],):
        raise ShapeError("softmax_cross_entropy expects (n, k) logits, (n,) labels")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    n = y.size
    out_data = np.array((logsumexp - z[np.arange(n), y]).mean())
    probs = np.exp(z)
    probs /= probs.sum(axis=1, keepdims=True)

    def backward(g):
        if logits.requires_grad:
            grad = probs.copy()
            grad[np.arange(n), y] -= 1.0
            logits.accumulate(float(g) * grad / n)

    return Tensor(out_data, parents=(logits,), backward=backward)


def l1_penalty(w: Tensor, coeff: float) -> Tensor:
    """coeff * sum |w| with the sgn(0) = 0 subgradient."""
    out_data = np.array(coeff * np.abs(w.data).sum())

    def backward(g):
        if w.requires_grad:
            w.accumulate(float(g) * coeff * np.sign(w.data))

    return Tensor(out_data, parents=(w,), backward=backward)


def softmax_predictions(logits: np.ndarray) -> np.ndarray:
    return logits.argmax(axis=1)


# ---------------------------------------------------------------------------
# Computation graphs with tagged parameter registries
# ---------------------------------------------------------------------------


@dataclass
class ComputationGraph:
    """A model: tagged parameter registry plus a forward builder.

    ``forward_fn(params, inputs)`` maps named parameter and input Tensors
    to named output Tensors; the define-by-run tape provides the
    topological node order.  Every parameter belongs to exactly one tag in
    ``PARAMETER_TAGS`` (extractor / fusion / head).
    """

    params: dict[str, Tensor]
    tags: dict[str, str]
    forward_fn: Callable[[dict[str, Tensor], dict[str, Tensor]], dict[str, Tensor]]
    meta: dict = field(default_factory=dict)
    outputs: dict[str, Tensor] | None = None

    def __post_init__(self):
        if set(self.params) != set(self.tags):
            raise ConfigurationError("tag partition must cover every parameter")
        for name, tag in self.tags.items():
            if tag not in PARAMETER_TAGS:
                raise ConfigurationError(f"unknown tag {tag!r} for parameter {name!r}")

    def param_names(self, tag_filter=None):
        if tag_filter is None:
            return list(self.params)
        return [n for n, t in self.tags.items() if t in tag_filter]

    def state_dict(self):
        return {n: p.data.copy() for n, p in self.params.items()}

    def load_state_dict(self, state):
        for n, arr in state.items():
            self.params[n].data = np.array(arr, dtype=np.float64)


def forward(graph: ComputationGraph, inputs: dict[str, np.ndarray | Tensor]):
    """Run the graph on named inputs; retains activations for backward."""
    wrapped = {
        k: v if isinstance(v, Tensor) else constant(v) for k, v in inputs.items()
    }
    graph.outputs = graph.forward_fn(graph.params, wrapped)
    return graph.outputs


def backward(graph: ComputationGraph, loss_node: str = "loss"):
    """Backpropagate from a named scalar output; returns {name: grad}."""
    if graph.outputs is None or loss_node not in graph.outputs:
        raise StateError(f"forward must produce output {loss_node!r} before backward")
    for p in graph.params.values():
        p.grad = None  # parameters unreachable from the loss get zero, not stale, grads
    graph.outputs[loss_node].backward()
    return {
        n: (p.grad if p.grad is not None else np.zeros_like(p.data))
        for n, p in graph.params.items()
    }


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def init_adam(params: dict[str, Tensor]) -> AdamState:
    return AdamState(
        m={n: np.zeros_like(p.data) for n, p in params.items()},
        v={n: np.zeros_like(p.data) for n, p in params.items()},
    )


def step_adam(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 1e-4,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    tags: set[str] | None = None,
    tag_of: dict[str, str] | None = None,
):
    """One Adam step, applied only to tag-selected parameters.

    Moment estimates advance only for the selected parameters, so a
    fine-tuning phase leaves the frozen partition bit-identical.
    """
    if lr <= 0:
        raise ConfigurationError("learning rate must be positive")
    b1, b2 = betas
    state.t += 1
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.items():
        if tags is not None:
            if tag_of is None:
                raise ConfigurationError("tag filter requires the tag mapping")
            if tag_of[name] not in tags:
                continue
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1 - b1) * g
        state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def step_sgd(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    lr: float,
    tags: set[str] | None = None,
    tag_of: dict[str, str] | None = None,
):
    if lr <= 0:
        raise ConfigurationError("learning rate must be positive")
    for name, p in params.items():
        if tags is not None and tag_of is not None and tag_of[name] not in tags:
            continue
        p.data = p.data - lr * grads[name]


# ---------------------------------------------------------------------------
# Initialization, checkpoints, gradient checking
# ---------------------------------------------------------------------------


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


CHECKPOINT_HEADER = "# fusionrobust checkpoint v1"


def save_checkpoint(graph: ComputationGraph, path):
    """Text checkpoint: one line per parameter, hex floats for exactness."""
    lines = [CHECKPOINT_HEADER]
    for name in sorted(graph.params):
        p = graph.params[name]
        shape = "x".join(str(d) for d in p.data.shape)
        values = " ".join(float(x).hex() for x in p.data.ravel())
        lines.append(f"{name}|{graph.tags[name]}|{shape}|{values}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(graph: ComputationGraph, path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise ConfigurationError(f"not a recognized checkpoint file: {path}")
    for line in lines[1:]:
        if not line.strip():
            continue
        name, tag, shape_s, values = line.split("|")
        if name not in graph.params:
            raise ConfigurationError(f"checkpoint parameter {name!r} not in graph")
        shape = tuple(int(s) for s in shape_s.split("x")) if shape_s else ()
        data = np.array([float.fromhex(v) for v in values.split()]).reshape(shape)
        if graph.params[name].data.shape != data.shape:
            raise ShapeError(f"checkpoint shape mismatch for {name!r}")
        graph.params[name].data = data
        if graph.tags[name] != tag:
            raise ConfigurationError(f"checkpoint tag mismatch for {name!r}")


def finite_difference_check(
    build_loss: Callable[[], Tensor],
    params: dict[str, Tensor],
    h: float = 1e-5,
    rtol: float = 1e-4,
):
    """Compare analytic gradients with central finite differences.

    ``build_loss`` must recompute the scalar loss from current parameter
    values.  Returns the maximum relative deviation over all coordinates.
    """
    loss = build_loss()
    loss.backward()
    analytic = {n: p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for n, p in params.items()}
    worst = 0.0
    for name, p in params.items():
        flat = p.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(build_loss().data)
            flat[i] = orig - h
            f_minus = float(build_loss().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2 * h)
            a = analytic[name].ravel()[i]
            dev = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, dev)
    if worst > rtol:
        raise AssertionError(f"gradient check failed: max relative dev {worst:.3e}")
    return worst
