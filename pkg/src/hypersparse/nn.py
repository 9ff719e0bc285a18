"""Minimal fully connected classifier engine in numpy.

Parameters live in a :class:`ParamStore`, an ordered list of named layers.
Weight matrices are prunable, biases are not. All prunable scalars have a
canonical flat ordering (layer order, then C-order within a layer) which the
pruning and regularization modules index into.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, ShapeError


@dataclass
class Layer:
    name: str
    values: np.ndarray
    prunable: bool

    @property
    def shape(self):
        return self.values.shape


class ParamStore:
    """Named, shaped parameter arrays with a flat view over prunable weights."""

    def __init__(self, layers: Sequence[Layer]):
        self.layers = list(layers)
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ContractError(f"duplicate layer names in {names}")
        self._shapes = [l.values.shape for l in self.layers]
        offsets = [0]
        for layer in self.layers:
            if layer.prunable:
                offsets.append(offsets[-1] + layer.values.size)
        self._offsets = offsets

    @property
    def num_prunable(self) -> int:
        """D, the number of prunable scalar weights."""
        return self._offsets[-1]

    @property
    def dtype(self):
        return self.layers[0].values.dtype

    def prunable_layers(self):
        return [l for l in self.layers if l.prunable]

    def layer_slices(self):
        """(layer, slice into the flat vector) for every prunable layer."""
        out = []
        for i, layer in enumerate(self.prunable_layers()):
            out.append((layer, slice(self._offsets[i], self._offsets[i + 1])))
        return out

    def flat_weights(self, dtype=None) -> np.ndarray:
        parts = [l.values.ravel() for l in self.prunable_layers()]
        flat = np.concatenate(parts) if parts else np.zeros(0, self.dtype)
        return flat.astype(dtype) if dtype is not None else flat

    def set_flat_weights(self, flat: np.ndarray) -> None:
        if flat.shape != (self.num_prunable,):
            raise ContractError(
                f"flat vector has shape {flat.shape}, expected ({self.num_prunable},)"
            )
        for layer, sl in self.layer_slices():
            layer.values[...] = flat[sl].reshape(layer.values.shape)

    def copy(self) -> "ParamStore":
        return ParamStore([Layer(l.name, l.values.copy(), l.prunable) for l in self.layers])

    def astype(self, dtype) -> "ParamStore":
        return ParamStore(
            [Layer(l.name, l.values.astype(dtype), l.prunable) for l in self.layers]
        )

    def check_shapes(self):
        for layer, shape in zip(self.layers, self._shapes):
            if layer.values.shape != shape:
                raise ShapeError(f"layer {layer.name} changed shape to {layer.values.shape}")

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    def __getitem__(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def equals(self, other: "ParamStore") -> bool:
        """Bitwise equality of names, flags, shapes and values."""
        if len(self) != len(other):
            return False
        for a, b in zip(self.layers, other.layers):
            if a.name != b.name or a.prunable != b.prunable:
                return False
            if a.values.dtype != b.values.dtype or a.values.shape != b.values.shape:
                return False
            if a.values.tobytes() != b.values.tobytes():
                return False
        return True


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    hidden_dims: tuple = (64, 64)
    num_classes: int = 10

    def __post_init__(self):
        if self.input_dim < 1:
            raise ContractError("input_dim must be positive")
        if any(h < 1 for h in self.hidden_dims):
            raise ContractError("hidden_dims must be positive")
        if self.num_classes < 2:
            raise ContractError("num_classes must be >= 2")

    @property
    def layer_dims(self):
        return [self.input_dim, *self.hidden_dims, self.num_classes]


@dataclass
class SgdConfig:
    learning_rate: float = 0.1
    weight_decay: float = 0.0
    batch_size: int = 64
    lr_decay_factor: float = 1.0
    lr_decay_epochs: tuple = ()

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ContractError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ContractError("weight_decay must be nonnegative")
        if self.batch_size < 1:
            raise ContractError("batch_size must be positive")
        if not 0 < self.lr_decay_factor <= 1:
            raise ContractError("lr_decay_factor must lie in (0, 1]")
        epochs = list(self.lr_decay_epochs)
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ContractError("lr_decay_epochs must be strictly increasing")


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray
    ids: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.labels.ndim != 1:
            raise ShapeError("inputs must be 2-D and labels 1-D")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels"
            )

    def __len__(self):
        return self.labels.shape[0]


def init_params(spec: ModelSpec, seed: int, dtype=np.float32) -> ParamStore:
    """Glorot-uniform weights, zero biases, drawn from PCG64 seeded with ``seed``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    layers = []
    dims = spec.layer_dims
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:]), start=1):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
        layers.append(Layer(f"fc{i}.weight", w, prunable=True))
        layers.append(Layer(f"fc{i}.bias", np.zeros(fan_out, dtype=dtype), prunable=False))
    return ParamStore(layers)


def _weight_bias_pairs(params: ParamStore):
    layers = params.layers
    if len(layers) % 2:
        raise ShapeError("expected alternating weight/bias layers")
    return [(layers[i], layers[i + 1]) for i in range(0, len(layers), 2)]


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _run(params: ParamStore, inputs: np.ndarray, masked_weights=None):
    pairs = _weight_bias_pairs(params)
    if inputs.shape[1] != pairs[0][0].values.shape[0]:
        raise ShapeError(
            f"input dim {inputs.shape[1]} != model input dim {pairs[0][0].values.shape[0]}"
        )
    h = inputs.astype(params.dtype, copy=False)
    acts = [h]
    for k, (w, b) in enumerate(pairs):
        wv = w.values if masked_weights is None else masked_weights[k]
        z = h @ wv + b.values
        if k < len(pairs) - 1:
            h = np.maximum(z, 0)
            acts.append(h)
        else:
            h = z
    return h, acts


def forward(params: ParamStore, batch: Batch):
    """Return ``(logits, mean softmax cross-entropy)``."""
    logits, _ = _run(params, batch.inputs)
    num_classes = logits.shape[1]
    if batch.labels.size and (batch.labels.min() < 0 or batch.labels.max() >= num_classes):
        raise ShapeError("label outside [0, num_classes)")
    logp = _log_softmax(logits)
    loss = -logp[np.arange(len(batch)), batch.labels].mean()
    return logits, float(loss)


def forward_backward(params: ParamStore, batch: Batch):
    """Loss and gradients for every layer (same order and shapes as ``params``)."""
    logits, acts = _run(params, batch.inputs)
    n = len(batch)
    logp = _log_softmax(logits)
    loss = -logp[np.arange(n), batch.labels].mean()
    delta = np.exp(logp)
    delta[np.arange(n), batch.labels] -= 1
    delta /= n
    pairs = _weight_bias_pairs(params)
    grads = [None] * len(params.layers)
    for k in range(len(pairs) - 1, -1, -1):
        w = pairs[k][0].values
        grads[2 * k] = acts[k].T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k:
            delta = (delta @ w.T) * (acts[k] > 0)
    return float(loss), grads


def backward(params: ParamStore, batch: Batch):
    return forward_backward(params, batch)[1]


def lr_at(cfg: SgdConfig, epoch: int) -> float:
    """Step schedule: the base rate times ``lr_decay_factor`` per decay epoch reached."""
    steps = sum(1 for e in cfg.lr_decay_epochs if epoch >= e)
    return cfg.learning_rate * cfg.lr_decay_factor ** steps


def sgd_step(params, grads, cfg: SgdConfig, epoch: int, extra_grads=None, mask=None):
    """One plain SGD update, in place. Returns ``params``.

    ``extra_grads`` is a flat vector over prunable weights (already scaled by the
    caller). With a ``mask``, pruned weights are held at exactly zero.
    """
    D = params.num_prunable
    if extra_grads is not None and np.shape(extra_grads) != (D,):
        raise ContractError(f"extra_grads has shape {np.shape(extra_grads)}, expected ({D},)")
    bits = None
    if mask is not None:
        bits = mask.bits if hasattr(mask, "bits") else np.asarray(mask, dtype=bool)
        if bits.shape != (D,):
            raise ContractError(f"mask has length {bits.shape[0]}, expected {D}")
    lr = params.dtype.type(lr_at(cfg, epoch))
    wd = params.dtype.type(cfg.weight_decay)
    offset = 0
    for layer, grad in zip(params.layers, grads):
        v = layer.values
        step = grad.astype(v.dtype, copy=False)
        if wd:
            step = step + wd * v
        if layer.prunable:
            sl = slice(offset, offset + v.size)
            offset += v.size
            if extra_grads is not None:
                step = step + extra_grads[sl].reshape(v.shape).astype(v.dtype, copy=False)
            v -= lr * step
            if bits is not None:
                v[~bits[sl].reshape(v.shape)] = 0
        else:
            v -= lr * step
    return params


def predict(params: ParamStore, inputs: np.ndarray, mask=None) -> np.ndarray:
    masked = None
    if mask is not None:
        bits = mask.bits if hasattr(mask, "bits") else np.asarray(mask, dtype=bool)
        masked = [
            np.where(bits[sl].reshape(layer.values.shape), layer.values, 0)
            for layer, sl in params.layer_slices()
        ]
    logits, _ = _run(params, inputs, masked)
    return logits.argmax(axis=1)


def evaluate(params: ParamStore, inputs: np.ndarray, labels: np.ndarray, mask=None) -> float:
    """Accuracy of argmax predictions; with a mask, evaluates ``mask * W`` without mutation."""
    if len(labels) == 0:
        raise ContractError("cannot evaluate on an empty dataset")
    return float(np.mean(predict(params, inputs, mask) == labels))
