"""Multilayer perceptron feature map with an L2-normalized output head.

Forward and backward passes are hand-derived (ReLU hidden layers, identity
then row normalization on the output) and verified against the central
finite-difference checker in the test suite. Parameters update with plain
SGD; weight decay applies to weights only, never biases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .numkit import Rng, as_matrix, l2_normalize_rows, require_finite


@dataclass
class GradBuffer:
    """Per-parameter gradients, shapes mirroring the encoder."""

    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]

    def require_finite(self) -> None:
        for g in self.d_weights + self.d_biases:
            require_finite(g, "gradient")


class MlpEncoder:
    """MLP encoder mapping inputs to unit-norm embeddings.

    ``layer_dims`` is (input_dim, hidden..., embed_dim). Weights are stored
    (fan_in, fan_out); a forward pass is x @ W + b per layer.
    """

    def __init__(self, layer_dims):
        dims = [int(d) for d in layer_dims]
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"bad layer dims {dims}")
        self.layer_dims = dims
        self.weights = [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])]
        self.biases = [np.zeros(b) for b in dims[1:]]

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def embed_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def param_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def init_params(self, rng: Rng, scheme: str = "kaiming") -> None:
        """Kaiming-style fan-in Gaussian init, one sub-stream per layer."""
        if scheme != "kaiming":
            raise ValueError(f"unknown init scheme {scheme!r}")
        for k, w in enumerate(self.weights):
            fan_in = w.shape[0]
            std = np.sqrt(2.0 / fan_in)
            g = rng.stream("init", k)
            self.weights[k] = std * g.standard_normal(w.shape)
            self.biases[k] = np.zeros(w.shape[1])

    def forward(self, x_batch: np.ndarray):
        """Map a batch to unit-norm embeddings.

        Returns ``(z, cache)``; the cache carries layer inputs,
        pre-activations, and the normalization backward closure.
        """
        x = as_matrix(x_batch, "encoder input")
        if x.shape[1] != self.input_dim:
            raise ValueError(
                f"input has {x.shape[1]} features, encoder expects {self.input_dim}"
            )
        inputs = []
        pre = []
        a = x
        for k in range(self.n_layers):
            inputs.append(a)
            h = a @ self.weights[k] + self.biases[k]
            pre.append(h)
            a = np.maximum(h, 0.0) if k < self.n_layers - 1 else h
        z, norm_back = l2_normalize_rows(a)
        cache = {"inputs": inputs, "pre": pre, "norm_back": norm_back,
                 "batch": x.shape[0]}
        return z, cache

    def backward(self, cache, dl_dz: np.ndarray) -> GradBuffer:
        """Chain-rule gradients through normalization, linear, ReLU layers."""
        dl_dz = as_matrix(dl_dz, "dL/dz")
        if dl_dz.shape != (cache["batch"], self.embed_dim):
            raise ValueError(
                f"dL/dz shape {dl_dz.shape} does not match cached forward "
                f"({cache['batch']}, {self.embed_dim})"
            )
        g = cache["norm_back"](dl_dz)
        d_w = [None] * self.n_layers
        d_b = [None] * self.n_layers
        for k in range(self.n_layers - 1, -1, -1):
            if k < self.n_layers - 1:
                g = g * (cache["pre"][k] > 0)
            d_w[k] = cache["inputs"][k].T @ g
            d_b[k] = g.sum(axis=0)
            if k > 0:
                g = g @ self.weights[k].T
        return GradBuffer(d_weights=d_w, d_biases=d_b)

    def sgd_step(self, grads: GradBuffer, lr: float, weight_decay: float = 0.0) -> None:
        """theta <- theta - lr * (g + weight_decay * theta); biases skip decay.

        Aborts on non-finite gradients rather than letting a run diverge
        silently.
        """
        if lr <= 0:
            raise ValueError("learning rate must be > 0")
        grads.require_finite()
        for k in range(self.n_layers):
            self.weights[k] -= lr * (grads.d_weights[k] + weight_decay * self.weights[k])
            self.biases[k] -= lr * grads.d_biases[k]
            require_finite(self.weights[k], f"layer {k} weights")

    def state(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_state(cls, state: dict) -> "MlpEncoder":
        enc = cls(state["layer_dims"])
        ws = [np.asarray(w, dtype=np.float64) for w in state["weights"]]
        bs = [np.asarray(b, dtype=np.float64) for b in state["biases"]]
        if [w.shape for w in ws] != [w.shape for w in enc.weights]:
            raise ValueError("weight shapes do not match layer dims")
        enc.weights = ws
        enc.biases = bs
        return enc

    def copy(self) -> "MlpEncoder":
        return MlpEncoder.from_state(self.state())


def save_checkpoint(path, enc: MlpEncoder, hyperplanes=None, meta: dict | None = None):
    """Write encoder (and optionally per-domain hyperplanes) as JSON.

    Floats serialize through repr, so a load reproduces every parameter
    bit-exactly.
    """
    doc = {
        "format": "invalign-checkpoint-v1",
        "meta": dict(meta or {}),
        "encoder": enc.state(),
        "hyperplanes": None if hyperplanes is None else hyperplanes.state(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    """Read a checkpoint; returns (encoder, hyperplanes | None, meta)."""
    from .pgirm import HyperplaneSet

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "invalign-checkpoint-v1":
        raise ValueError(f"{path}: not an invalign checkpoint")
    enc = MlpEncoder.from_state(doc["encoder"])
    hs = None
    if doc.get("hyperplanes") is not None:
        hs = HyperplaneSet.from_state(doc["hyperplanes"])
    return enc, hs, doc.get("meta", {})
