"""Dense feed-forward classifiers with exact backpropagation.

Everything is float64 numpy. Models are stacks of dense layers with ReLU or
identity activations; the final layer always emits raw logits. Gradients with
respect to parameters and to the input are analytic, so finite-difference
checks and sign-based attacks are exact up to float rounding.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .rng import make_rng

ACTIVATIONS = ("relu", "identity")


def numeric_array(values, shape=None) -> np.ndarray:
    """Build a validated float64 row-major array.

    Rejects NaN/Inf values and, when ``shape`` is given, any size mismatch.
    The returned array owns its data (no aliasing of the input).
    """
    arr = np.array(values, dtype=np.float64, order="C", copy=True)
    if shape is not None:
        expected = int(np.prod(shape))
        if expected != arr.size:
            raise ValueError(
                f"shape {tuple(shape)} requires {expected} values, got {arr.size}"
            )
        arr = arr.reshape(tuple(shape))
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite values are not allowed")
    return arr


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


def cross_entropy(logits: np.ndarray, label: int) -> float:
    """Softmax cross-entropy, computed stably from raw logits."""
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"class index {label} out of range [0, {logits.shape[0]})")
    z = logits - np.max(logits)
    return float(np.log(np.exp(z).sum()) - z[label])


@dataclass
class DenseLayer:
    """One affine map plus activation; weights are (out, in), bias is (out,)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.weights = numeric_array(self.weights)
        self.bias = numeric_array(self.bias)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match weights "
                f"{self.weights.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class LayerGradients:
    weights: np.ndarray
    bias: np.ndarray


@dataclass(frozen=True)
class BackpropResult:
    loss: float
    input_gradient: np.ndarray
    parameter_gradients: list[LayerGradients]


class Classifier:
    """Stack of dense layers whose last layer is identity (raw logits).

    Instances are immutable during forward/loss calls; parameter mutation
    (``sgd_step``) requires exclusive access. Use :meth:`clone` to train a
    copy without touching the original.
    """

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise ValueError("a classifier needs at least one layer")
        for i, (prev, nxt) in enumerate(zip(layers, layers[1:])):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(
                    f"layer {i} output ({prev.out_dim}) does not chain into "
                    f"layer {i + 1} input ({nxt.in_dim})"
                )
        if layers[-1].activation != "identity":
            raise ValueError("final layer must have identity activation (logits)")
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def n_classes(self) -> int:
        return self.layers[-1].out_dim

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise ValueError(
                f"input shape {x.shape} does not match model input "
                f"({self.input_dim},)"
            )
        return x

    def forward(self, x) -> np.ndarray:
        """Raw logits for one input vector."""
        a = self._check_input(x)
        for layer in self.layers:
            z = layer.weights @ a + layer.bias
            a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        return a

    def predict(self, x) -> int:
        """Argmax class; ties break toward the lowest index."""
        return int(np.argmax(self.forward(x)))

    def loss_and_gradients(self, x, label: int) -> BackpropResult:
        """Cross-entropy loss plus exact gradients w.r.t. input and parameters.

        ReLU derivative at exactly zero is taken as zero.
        """
        x = self._check_input(x)
        label = int(label)
        if not 0 <= label < self.n_classes:
            raise ValueError(
                f"class index {label} out of range [0, {self.n_classes})"
            )

        pre = []
        acts = [x]
        a = x
        for layer in self.layers:
            z = layer.weights @ a + layer.bias
            pre.append(z)
            a = np.maximum(z, 0.0) if layer.activation == "relu" else z
            acts.append(a)

        logits = acts[-1]
        zmax = np.max(logits)
        shifted = logits - zmax
        logsumexp = float(np.log(np.exp(shifted).sum()))
        loss = logsumexp - float(shifted[label])
        probs = np.exp(shifted - logsumexp)

        dz = probs.copy()
        dz[label] -= 1.0
        grads: list = [None] * len(self.layers)
        da = dz
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            grads[idx] = LayerGradients(np.outer(dz, acts[idx]), dz)
            da = layer.weights.T @ dz
            if idx > 0 and self.layers[idx - 1].activation == "relu":
                dz = da * (pre[idx - 1] > 0.0)
            else:
                dz = da
        return BackpropResult(loss, da, grads)

    def clone(self) -> "Classifier":
        """Deep copy; training the clone never aliases the original."""
        return Classifier(
            DenseLayer(layer.weights, layer.bias, layer.activation)
            for layer in self.layers
        )

    def parameter_digest(self) -> str:
        """SHA-256 over all parameters; equal digests mean bit-identical models."""
        h = hashlib.sha256()
        for layer in self.layers:
            h.update(np.ascontiguousarray(layer.weights).tobytes())
            h.update(np.ascontiguousarray(layer.bias).tobytes())
        return h.hexdigest()


class SgdState:
    """Momentum buffers for SGD: v <- momentum*v + g, p <- p - lr*v."""

    def __init__(self, model: Classifier, learning_rate: float, momentum: float = 0.0):
        if learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.learning_rate = float(learning_rate)
        self.momentum = float(momentum)
        self.velocity = [
            LayerGradients(np.zeros_like(l.weights), np.zeros_like(l.bias))
            for l in model.layers
        ]


def sgd_step(model: Classifier, grads, state: SgdState) -> Classifier:
    """One momentum-SGD update, in place on the given model."""
    if len(grads) != len(model.layers):
        raise ValueError(
            f"got gradients for {len(grads)} layers, model has {len(model.layers)}"
        )
    for layer, g, v in zip(model.layers, grads, state.velocity):
        if g.weights.shape != layer.weights.shape or g.bias.shape != layer.bias.shape:
            raise ValueError(
                f"gradient shapes {g.weights.shape}/{g.bias.shape} do not match "
                f"layer shapes {layer.weights.shape}/{layer.bias.shape}"
            )
        v.weights *= state.momentum
        v.weights += g.weights
        v.bias *= state.momentum
        v.bias += g.bias
        layer.weights -= state.learning_rate * v.weights
        layer.bias -= state.learning_rate * v.bias
    return model


def init_classifier(layer_sizes, seed: int) -> Classifier:
    """He-initialised MLP: ReLU hidden layers, identity logits layer."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    rng = make_rng(seed)
    layers = []
    last = len(sizes) - 2
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        w = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        layers.append(
            DenseLayer(w, np.zeros(fan_out), "identity" if i == last else "relu")
        )
    return Classifier(layers)
