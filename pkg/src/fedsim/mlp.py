"""Dense feed-forward classifier operating on a flat float64 parameter vector.

Forward pass, softmax cross-entropy with analytic gradients (optionally with a
proximal penalty toward an anchor vector), and plain SGD steps. Every function
is pure over immutable inputs, so clients may train in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Applied before any explicit log of a probability.
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    """Layer widths from input to output; hidden layers are ReLU, output is softmax."""

    layer_sizes: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("model needs at least an input and an output layer")
        if any(s <= 0 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if sizes[-1] < 2:
            raise ValueError("output layer needs at least 2 classes")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation: {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        return list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    @property
    def num_params(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_shapes)


@dataclass
class ModelParams:
    """Flat weight+bias vector (per layer: row-major W then b), always finite."""

    values: np.ndarray
    spec: ModelSpec

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.spec.num_params,):
            raise ValueError(
                f"parameter vector has length {v.shape}, spec needs {self.spec.num_params}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("parameters must be finite")
        self.values = v

    def copy(self) -> "ModelParams":
        return ModelParams(self.values.copy(), self.spec)


def init_params(spec: ModelSpec, seed) -> ModelParams:
    """Seeded scaled-uniform weights (±sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    chunks = []
    for fan_in, fan_out in spec.layer_shapes:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return ModelParams(np.concatenate(chunks), spec)


def unpack_params(params: ModelParams) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views of the flat vector as per-layer (W, b) pairs."""
    layers = []
    offset = 0
    for fan_in, fan_out in params.spec.layer_shapes:
        w = params.values[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = params.values[offset : offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def _check_batch(params: ModelParams, batch) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"batch must be 2-d, got shape {x.shape}")
    if x.shape[1] != params.spec.input_dim:
        raise ValueError(
            f"batch has {x.shape[1]} features, model expects {params.spec.input_dim}"
        )
    return x


def _activations(params: ModelParams, x: np.ndarray):
    """All post-activation layer inputs plus the output logits."""
    layers = unpack_params(params)
    acts = [x]
    h = x
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    w, b = layers[-1]
    return acts, h @ w + b


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def forward(params: ModelParams, batch) -> tuple[np.ndarray, np.ndarray]:
    """Softmax probabilities and the latent (post-activation penultimate) layer.

    For a model without hidden layers the latent is the input itself.
    """
    x = _check_batch(params, batch)
    acts, logits = _activations(params, x)
    return softmax(logits), acts[-1]


def layer_activations(params: ModelParams, batch) -> list[np.ndarray]:
    """Post-activation matrix per layer: hidden ReLU outputs, then softmax output."""
    x = _check_batch(params, batch)
    acts, logits = _activations(params, x)
    return acts[1:] + [softmax(logits)]


def loss_and_grad(
    params: ModelParams,
    batch,
    labels,
    prox_mu: float = 0.0,
    anchor: ModelParams | None = None,
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy (plus prox_mu/2·‖params−anchor‖²) and its gradient."""
    x = _check_batch(params, batch)
    if not np.all(np.isfinite(x)):
        raise ValueError("batch contains non-finite values")
    y = np.asarray(labels)
    if y.shape != (x.shape[0],):
        raise ValueError("labels must match the batch row count")
    if y.min() < 0 or y.max() >= params.spec.num_classes:
        raise ValueError("labels out of range")
    if prox_mu < 0:
        raise ValueError("prox_mu must be >= 0")
    if prox_mu > 0 and anchor is None:
        raise ValueError("prox_mu > 0 requires an anchor")

    layers = unpack_params(params)
    acts, logits = _activations(params, x)
    m = x.shape[0]
    logp = log_softmax(logits)
    loss = -float(logp[np.arange(m), y].mean())

    delta = np.exp(logp)
    delta[np.arange(m), y] -= 1.0
    delta /= m

    grads = [None] * len(layers)
    d = delta
    for li in range(len(layers) - 1, -1, -1):
        a_prev = acts[li]
        grads[li] = (a_prev.T @ d, d.sum(axis=0))
        if li > 0:
            d = (d @ layers[li][0].T) * (acts[li] > 0)

    grad = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])

    if prox_mu > 0:
        if anchor.values.shape != params.values.shape:
            raise ValueError("anchor length must match params")
        diff = params.values - anchor.values
        loss += 0.5 * prox_mu * float(diff @ diff)
        grad += prox_mu * diff
    return loss, grad


def sgd_step(params: ModelParams, grad: np.ndarray, lr: float) -> ModelParams:
    """One gradient step; any learning-rate decay schedule is owned by the caller."""
    g = np.asarray(grad, dtype=np.float64)
    if g.shape != params.values.shape:
        raise ValueError("gradient length must match params")
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient contains non-finite values")
    if not lr > 0:
        raise ValueError("learning rate must be > 0")
    return ModelParams(params.values - lr * g, params.spec)
