"""Per-axis shallow MLPs turning feature vectors into velocity components.

Each staggered axis owns one network: a single hidden layer of width 64 with
ELU activation, evaluated and differentiated by hand in float64.  The forward
pass is b2 + W2 @ elu(W1 @ f + b1); the backward pass returns exact
reverse-mode gradients for the parameters and the input feature, which is all
the autodiff this model ever needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import SsnfBuffer, query_feature
from .field_core import GridDims, MacField, face_centers

HIDDEN_WIDTH = 64


def elu(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0.0, x, np.expm1(x))


def elu_grad(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0.0, 1.0, np.exp(x))


@dataclass
class Mlp:
    """One hidden layer; weights stay float64 so gradient checks are sharp."""

    w1: np.ndarray   # (hidden, in)
    b1: np.ndarray   # (hidden,)
    w2: np.ndarray   # (1, hidden)
    b2: np.ndarray   # (1,)

    @classmethod
    def glorot(cls, in_width: int, hidden: int = HIDDEN_WIDTH,
               rng: np.random.Generator | None = None) -> "Mlp":
        if in_width < 1 or hidden < 1:
            raise ValueError("layer widths must be positive")
        rng = rng or np.random.default_rng()
        s1 = np.sqrt(6.0 / (in_width + hidden))
        s2 = np.sqrt(6.0 / (hidden + 1))
        return cls(rng.uniform(-s1, s1, (hidden, in_width)),
                   np.zeros(hidden),
                   rng.uniform(-s2, s2, (1, hidden)),
                   np.zeros(1))

    @property
    def in_width(self) -> int:
        return self.w1.shape[1]

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self) -> "Mlp":
        return Mlp(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


def forward(mlp: Mlp, feature) -> float:
    """Scalar component decoded from one feature vector."""
    return float(forward_batch(mlp, np.asarray(feature, dtype=np.float64)[None, :])[0])


def forward_batch(mlp: Mlp, feats: np.ndarray) -> np.ndarray:
    h = feats @ mlp.w1.T + mlp.b1
    return elu(h) @ mlp.w2[0] + mlp.b2[0]


def forward_hidden(mlp: Mlp, feats: np.ndarray):
    """Forward pass keeping the hidden pre/post activations for reuse."""
    h = feats @ mlp.w1.T + mlp.b1
    z = elu(h)
    return h, z, z @ mlp.w2[0] + mlp.b2[0]


def backward_from_hidden(mlp: Mlp, feats: np.ndarray, h: np.ndarray,
                         z: np.ndarray, upstream: np.ndarray):
    """Parameter gradients (summed over the batch) and feature gradients."""
    dh = (upstream[:, None] * mlp.w2[0]) * elu_grad(h)
    grads = [dh.T @ feats,
             dh.sum(axis=0),
             (upstream @ z)[None, :],
             np.array([upstream.sum()])]
    return grads, dh @ mlp.w1


def forward_backward_batch(mlp: Mlp, feats: np.ndarray, upstream: np.ndarray):
    """Values, parameter gradients (summed over the batch), feature gradients."""
    h, z, vals = forward_hidden(mlp, feats)
    grads, dfeats = backward_from_hidden(mlp, feats, h, z, upstream)
    return vals, grads, dfeats


def forward_backward(mlp: Mlp, feature, upstream: float):
    """Single-sample wrapper used by the gradient-check suite."""
    feats = np.asarray(feature, dtype=np.float64)[None, :]
    vals, grads, dfeat = forward_backward_batch(
        mlp, feats, np.array([float(upstream)]))
    return float(vals[0]), grads, dfeat[0]


class DecoderEnsemble:
    """One Mlp per spatial axis, all sharing the input width."""

    def __init__(self, mlps: list[Mlp]):
        if not mlps:
            raise ValueError("ensemble needs at least one decoder")
        if len({m.in_width for m in mlps}) != 1:
            raise ValueError("decoders must share the input width")
        self.mlps = mlps

    @classmethod
    def glorot(cls, dim: int, in_width: int, hidden: int = HIDDEN_WIDTH,
               seed: int = 0) -> "DecoderEnsemble":
        rng = np.random.default_rng(seed)
        return cls([Mlp.glorot(in_width, hidden, rng) for _ in range(dim)])

    @property
    def dim(self) -> int:
        return len(self.mlps)

    @property
    def in_width(self) -> int:
        return self.mlps[0].in_width

    def copy(self) -> "DecoderEnsemble":
        return DecoderEnsemble([m.copy() for m in self.mlps])

    def params(self) -> list[np.ndarray]:
        return [p for m in self.mlps for p in m.params()]

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for a, m in enumerate(self.mlps):
            out[f"dec{a}_w1"] = m.w1
            out[f"dec{a}_b1"] = m.b1
            out[f"dec{a}_w2"] = m.w2
            out[f"dec{a}_b2"] = m.b2
        return out

    @classmethod
    def from_arrays(cls, dim: int, arrays: dict[str, np.ndarray]) -> "DecoderEnsemble":
        mlps = []
        for a in range(dim):
            mlps.append(Mlp(*(np.ascontiguousarray(arrays[f"dec{a}_{n}"],
                                                   dtype=np.float64)
                              for n in ("w1", "b1", "w2", "b2"))))
        return cls(mlps)


def decode_component(buf: SsnfBuffer, pts: np.ndarray, t, axis: int) -> np.ndarray:
    """Velocity component along one axis at scattered positions."""
    return forward_batch(buf.decoders.mlps[axis], query_feature(buf, pts, t))


def decode_velocity(buf: SsnfBuffer, t: float) -> MacField:
    """Evaluate the neural field on every face of the owning grid."""
    if buf.decoders is None:
        raise RuntimeError("buffer has no decoder ensemble attached")
    dims: GridDims = buf.dims
    comps = []
    for a in range(dims.dim):
        vals = decode_component(buf, face_centers(dims, a), t, a)
        comps.append(vals.reshape(dims.comp_shape(a)).astype(np.float32))
    return MacField(dims, comps)
