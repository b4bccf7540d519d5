"""Model construction, forward pass and exact backpropagation."""

from __future__ import annotations

import hashlib

import numpy as np

from robusttc.errors import ShapeMismatch
from robusttc.tensornn import layers as F
from robusttc.tensornn.spec import ArchSpec

STATE_SUFFIXES = (".moving_mean", ".moving_var")


class Model:
    """Weights of an :class:`ArchSpec` network.

    ``params`` maps dotted names (``block0.conv.kernel``, ``dense.bias``, ...)
    to arrays. BN moving statistics live there too but are not trainable.
    """

    def __init__(self, spec: ArchSpec, params: dict[str, np.ndarray], dtype=np.float32):
        self.spec = spec
        self.params = params
        self.dtype = np.dtype(dtype)
        self.mode = "eval"

    @property
    def trainable_names(self) -> list[str]:
        return [n for n in self.params if not n.endswith(STATE_SUFFIXES)]

    def n_scalars(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "Model":
        m = Model(self.spec, {k: v.copy() for k, v in self.params.items()}, self.dtype)
        m.mode = self.mode
        return m

    def astype(self, dtype) -> "Model":
        return Model(self.spec, {k: v.astype(dtype) for k, v in self.params.items()}, dtype)

    def digest(self) -> str:
        h = hashlib.sha256(self.spec.to_json().encode())
        for name, p in self.params.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()

    def __repr__(self):
        return f"Model({len(self.spec.blocks)} blocks, {self.n_scalars()} scalars, {self.dtype})"


def build(spec: ArchSpec, seed: int = 0, dtype=np.float32) -> Model:
    from robusttc.hwcost import shape_plan

    shape_plan(spec)  # raises InvalidSpec
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    cin = spec.input_shape[1]
    for i, b in enumerate(spec.blocks):
        fan_in = b.kernel * cin
        lim = np.sqrt(6.0 / fan_in)
        params[f"block{i}.conv.kernel"] = rng.uniform(-lim, lim, (b.kernel, cin, b.filters))
        params[f"block{i}.conv.bias"] = np.zeros(b.filters)
        params[f"block{i}.bn.gamma"] = np.ones(b.filters)
        params[f"block{i}.bn.beta"] = np.zeros(b.filters)
        params[f"block{i}.bn.moving_mean"] = np.zeros(b.filters)
        params[f"block{i}.bn.moving_var"] = np.ones(b.filters)
        cin = b.filters
    lim = np.sqrt(3.0 / cin)
    params["dense.kernel"] = rng.uniform(-lim, lim, (cin, spec.num_classes))
    params["dense.bias"] = np.zeros(spec.num_classes)
    return Model(spec, {k: v.astype(dtype) for k, v in params.items()}, dtype)


def _check_input(model: Model, x: np.ndarray) -> np.ndarray:
    if x.ndim != 3 or tuple(x.shape[1:]) != model.spec.input_shape:
        raise ShapeMismatch(f"expected batch x {model.spec.input_shape}, got {x.shape}")
    return np.asarray(x, dtype=model.dtype)


def forward(model: Model, x: np.ndarray, mode: str | None = None, rng=None,
            return_cache: bool = False):
    """Logits for a batch. ``mode`` defaults to ``model.mode``.

    Train mode normalizes with batch statistics and samples inverted dropout
    from ``rng``; the moving statistics are left untouched (see
    :func:`update_bn_stats`).
    """
    mode = mode or model.mode
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    training = mode == "train"
    if training and rng is None:
        rng = np.random.default_rng(0)
    p = model.params
    h = _check_input(model, x)
    tape = []
    for i, b in enumerate(model.spec.blocks):
        pre = f"block{i}"
        h, c = F.conv1d_forward(h, p[f"{pre}.conv.kernel"], p[f"{pre}.conv.bias"], b.stride, b.padding)
        tape.append(("conv", pre, c, h.shape[1:]))
        h, c = F.batchnorm_forward(h, p[f"{pre}.bn.gamma"], p[f"{pre}.bn.beta"],
                                   p[f"{pre}.bn.moving_mean"], p[f"{pre}.bn.moving_var"], training)
        tape.append(("bn", pre, c, h.shape[1:]))
        h, c = F.relu_forward(h)
        tape.append(("relu", pre, c, h.shape[1:]))
        if b.pool is not None:
            h, c = F.pool_forward(h, b.pool.kind, b.pool.size)
            tape.append(("pool", pre, c, h.shape[1:]))
        if training and b.dropout > 0:
            h, c = F.dropout_forward(h, b.dropout, rng)
            tape.append(("dropout", pre, c, h.shape[1:]))
    h, c = F.gap_forward(h)
    tape.append(("gap", "gap", c, h.shape[1:]))
    logits, c = F.dense_forward(h, p["dense.kernel"], p["dense.bias"])
    tape.append(("dense", "dense", c, logits.shape[1:]))
    return (logits, tape) if return_cache else logits


def backward(model: Model, tape, dlogits, param_grads: bool = True):
    """Propagate ``dlogits`` back through ``tape``; returns ``(dx, grads)``."""
    p = model.params
    grads: dict[str, np.ndarray] = {}
    d = dlogits
    for kind, pre, c, _ in reversed(tape):
        if kind == "dense":
            d, g = F.dense_backward(d, c, p["dense.kernel"], param_grads)
            grads.update({f"dense.{k}": v for k, v in g.items()})
        elif kind == "gap":
            d = F.gap_backward(d, c)
        elif kind == "dropout":
            d = d * c
        elif kind == "pool":
            d = F.pool_backward(d, c)
        elif kind == "relu":
            d = F.relu_backward(d, c)
        elif kind == "bn":
            d, g = F.batchnorm_backward(d, c, param_grads)
            grads.update({f"{pre}.bn.{k}": v for k, v in g.items()})
        elif kind == "conv":
            d, g = F.conv1d_backward(d, c, param_grads)
            grads.update({f"{pre}.conv.{k}": v for k, v in g.items()})
    return d, grads


def predict_proba(model: Model, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    out = [F.softmax(forward(model, x[i:i + batch_size], "eval")) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, model.spec.num_classes), model.dtype)


def predict(model: Model, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    out = [forward(model, x[i:i + batch_size], "eval").argmax(axis=1) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, np.int64)


def _check_labels(model: Model, x, labels):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (x.shape[0],):
        raise ShapeMismatch(f"labels shape {labels.shape} does not match batch {x.shape[0]}")
    if labels.size and (labels.min() < 0 or labels.max() >= model.spec.num_classes):
        raise ValueError("label out of range")
    return labels


def loss_and_grads(model: Model, x, labels, rng=None, return_cache: bool = False):
    """Mean softmax cross-entropy in train mode and its exact weight gradients."""
    labels = _check_labels(model, x, labels)
    logits, tape = forward(model, x, "train", rng, return_cache=True)
    loss, dlogits = F.softmax_cross_entropy(logits, labels)
    _, grads = backward(model, tape, dlogits)
    grads = {n: grads[n] for n in model.trainable_names}
    return (loss, grads, tape) if return_cache else (loss, grads)


def loss(model: Model, x, labels, mode: str = "eval", rng=None) -> float:
    labels = _check_labels(model, x, labels)
    return float(F.softmax_cross_entropy(forward(model, x, mode, rng), labels)[0])


def input_gradient(model: Model, x, labels) -> np.ndarray:
    """Gradient of the eval-mode mean cross-entropy with respect to ``x``."""
    labels = _check_labels(model, x, labels)
    logits, tape = forward(model, x, "eval", return_cache=True)
    _, dlogits = F.softmax_cross_entropy(logits, labels)
    dx, _ = backward(model, tape, dlogits, param_grads=False)
    return dx


def update_bn_stats(model: Model, tape, momentum: float = F.BN_MOMENTUM) -> None:
    """Fold the batch statistics recorded in a train-mode tape into the moving averages."""
    for kind, pre, c, _ in tape:
        if kind != "bn":
            continue
        mean, var = c[4], c[5]
        mm, mv = model.params[f"{pre}.bn.moving_mean"], model.params[f"{pre}.bn.moving_var"]
        mm *= momentum
        mm += (1 - momentum) * mean
        mv *= momentum
        mv += (1 - momentum) * var


def shapes_observed(model: Model) -> list[tuple[str, tuple[int, ...]]]:
    """Per-layer output shapes recorded from a real batch-of-one forward pass."""
    x = np.zeros((1, *model.spec.input_shape), model.dtype)
    _, tape = forward(model, x, "train", rng=np.random.default_rng(0), return_cache=True)
    return [(name if kind in ("gap", "dense") else f"{name}.{kind}", shape) for kind, name, _, shape in tape]
