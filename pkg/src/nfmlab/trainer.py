"""Streamed training of the neural velocity buffer.

One session per frame: the newest frame is supervised from its MAC grid, all
older frames from the frozen auxiliary copy of the buffer, sampled with equal
priority per frame.  Spatial positions are face centers of cells drawn from a
sizing-biased distribution, so batches concentrate where the flow is complex.
Optimization is AdamW over the feature tables and decoder parameters with an
exponentially decaying learning rate and an early stop on the batch MSE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoder import backward_from_hidden, decode_component, forward_hidden
from .encoder import SsnfBuffer, query_feature, query_feature_backward
from .field_core import CellField, MacField

LR_DECAY_ITERS = 1500


def lr_schedule(iteration: int, lr_start: float = 0.01) -> float:
    """Geometric decay to a tenth of the start rate, then constant."""
    return lr_start * 0.1 ** (min(iteration, LR_DECAY_ITERS) / LR_DECAY_ITERS)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8192
    max_iters: int = 2000
    early_stop: float = 1e-4     # relative to the newest frame's mean square
    lr_start: float = 0.01
    weight_decay: float = 1e-2

    def __post_init__(self):
        if self.batch_size < 1 or self.max_iters < 1:
            raise ValueError("batch_size and max_iters must be >= 1")
        if self.early_stop <= 0.0 or self.lr_start <= 0.0:
            raise ValueError("early_stop and lr_start must be positive")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be >= 0")


# ==========================================================================
# sampling
# ==========================================================================


def build_sampling_distribution(S, sigma: float, dx_coarse: float,
                                dx_fine: float) -> np.ndarray:
    """Per-cell probabilities: sizing clipped to the level thresholds.

    q_I is proportional to min(max(sigma / dx_coarse, S_I), sigma / dx_fine);
    the clips keep the normalization defined for flat fields and stop extreme
    cells from starving the rest.
    """
    data = S.data if isinstance(S, CellField) else np.asarray(S)
    lo = sigma / dx_coarse
    hi = sigma / dx_fine
    if not 0.0 < lo <= hi:
        raise ValueError("need 0 < sigma/dx_coarse <= sigma/dx_fine")
    q = np.clip(data.astype(np.float64), lo, hi)
    return q / q.sum()


def sample_batch(q: np.ndarray, frame_times, aux: SsnfBuffer | None,
                 u_mid: MacField, rng: np.random.Generator, batch_size: int):
    """Draw (position, normalized time, axis, target) tuples.

    Cells come from q, the face side and axis are uniform, and the frame
    index is uniform over the stream.  Targets for the newest frame are the
    grid values; older frames are queried from the frozen auxiliary buffer at
    its own normalization.
    """
    frame_times = np.asarray(frame_times, dtype=np.float64)
    n_frames = len(frame_times)
    if n_frames < 1:
        raise ValueError("cannot sample an empty frame stream")
    if n_frames > 1:
        if aux is None or aux.decoders is None:
            raise ValueError("past frames need the auxiliary buffer")
        if len(aux.frame_times) != n_frames - 1:
            raise ValueError(f"auxiliary buffer stores {len(aux.frame_times)} "
                             f"frames, expected {n_frames - 1}")
    dims = u_mid.dims
    dim = dims.dim
    if q.shape != dims.cells:
        raise ValueError("sampling distribution does not match the grid")

    flat = rng.choice(q.size, size=batch_size, p=q.ravel())
    cell_idx = np.stack(np.unravel_index(flat, dims.cells), axis=1)
    axis = rng.integers(0, dim, size=batch_size)
    side = rng.integers(0, 2, size=batch_size)
    face_idx = cell_idx.copy()
    face_idx[np.arange(batch_size), axis] += side
    pos = (face_idx + 0.5) * dims.dx
    pos[np.arange(batch_size), axis] -= 0.5 * dims.dx

    frame = rng.integers(0, n_frames, size=batch_size)
    starts = np.concatenate([[0.0], frame_times[:-1]])
    mid_abs = 0.5 * (starts + frame_times)
    t_norm = mid_abs[frame] / frame_times[-1]

    target = np.empty(batch_size, dtype=np.float64)
    newest = frame == n_frames - 1
    for a in range(dim):
        sel = newest & (axis == a)
        if sel.any():
            target[sel] = u_mid.comps[a][tuple(face_idx[sel].T)]
        sel = ~newest & (axis == a)
        if sel.any():
            t_aux = mid_abs[frame[sel]] * aux.lam
            target[sel] = decode_component(aux, pos[sel], t_aux, a)
    return pos, t_norm, axis, target


# ==========================================================================
# optimizer
# ==========================================================================


@dataclass
class AdamwState:
    """Moment estimates plus the decoupled weight-decay mask."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    decay: list[bool]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-15
    weight_decay: float = 1e-2

    @classmethod
    def for_params(cls, params: list[np.ndarray], decay: list[bool],
                   weight_decay: float = 1e-2) -> "AdamwState":
        if len(params) != len(decay):
            raise ValueError("one decay flag per parameter array")
        return cls([np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params],
                   list(decay), weight_decay=weight_decay)


def adamw_step(params: list[np.ndarray], grads: list[np.ndarray],
               state: AdamwState, lr: float) -> None:
    """In-place decoupled-weight-decay Adam update with bias correction."""
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v, dec in zip(params, grads, state.m, state.v, state.decay):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        upd = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if dec:
            upd = upd + state.weight_decay * p
        p -= lr * upd


# ==========================================================================
# session
# ==========================================================================


def _mean_square(u: MacField) -> float:
    total = sum(float((c.astype(np.float64) ** 2).sum()) for c in u.comps)
    count = sum(c.size for c in u.comps)
    return total / count


def train_session(buf: SsnfBuffer, aux: SsnfBuffer | None, u_mid: MacField,
                  S: CellField, cfg: TrainConfig,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Fit the buffer to the frame stream ending at u_mid; returns the losses.

    The caller has already grown the activation with S and appended the
    frame's duration, so the newest normalized mid-time is defined.  The
    auxiliary buffer is read-only throughout.
    """
    if buf.decoders is None:
        raise RuntimeError("buffer has no decoder ensemble attached")
    if not buf.frame_times:
        raise ValueError("no frame recorded; update the time multiplier first")
    if rng is None:
        rng = buf.rng
    dim = buf.dims.dim
    q = build_sampling_distribution(S, buf.sigma, buf.dx_coarse, buf.dx_fine)

    params: list[np.ndarray] = [lvl.features for lvl in buf.levels]
    decay: list[bool] = [False] * len(buf.levels)
    for mlp in buf.decoders.mlps:
        params.extend(mlp.params())
        decay.extend([True, False, True, False])   # decay weights, not biases
    state = AdamwState.for_params(params, decay, weight_decay=cfg.weight_decay)

    threshold = cfg.early_stop * _mean_square(u_mid)
    losses = []
    for it in range(cfg.max_iters):
        pos, t_norm, axis, target = sample_batch(
            q, buf.frame_times, aux, u_mid, rng, cfg.batch_size)
        feats = query_feature(buf, pos, t_norm)
        feat_grads = [np.zeros_like(lvl.features) for lvl in buf.levels]
        mlp_grads: list[np.ndarray] = []
        sse = 0.0
        for a in range(dim):
            sel = np.flatnonzero(axis == a)
            mlp = buf.decoders.mlps[a]
            if sel.size:
                fa = feats[sel]
                h, z, vals = forward_hidden(mlp, fa)
                res = vals - target[sel]
                sse += float(res @ res)
                grads_a, dfeat = backward_from_hidden(
                    mlp, fa, h, z, 2.0 * res / cfg.batch_size)
                query_feature_backward(buf, pos[sel], t_norm[sel], dfeat,
                                       grads=feat_grads)
                mlp_grads.extend(grads_a)
            else:
                mlp_grads.extend([np.zeros_like(p) for p in mlp.params()])
        loss = sse / cfg.batch_size
        if not np.isfinite(loss):
            raise RuntimeError(f"training diverged at iteration {it}")
        losses.append(loss)
        if loss <= threshold:
            break
        adamw_step(params, feat_grads + mlp_grads, state,
                   lr_schedule(it, cfg.lr_start))
    return np.asarray(losses)
