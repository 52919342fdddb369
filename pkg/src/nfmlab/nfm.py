"""Flow-map time stepping in impulse form.

One step rebuilds the velocity from the last reinitialization snapshot
instead of from the previous frame: the backward map psi (with Jacobian
columns T) is re-marched from identity through the stored midpoint
history, the forward map phi/F advances incrementally, and the impulse
T^T u0(psi) is error-compensated against a forward remap before
projection.  The midpoint history itself lives either in a trained
spatio-temporal feature buffer (the production path) or as a dense list
of grids (the exact sampler, kept to isolate fitting error from the
rest of the scheme).

Long-range transport is what the layout buys: impulse and density are
pulled straight from the reinit epoch through one map, so per-step
interpolation error does not compound inside a cycle.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .decoder import DecoderEnsemble, decode_velocity
from .encoder import (
    SsnfBuffer,
    copy_buffer,
    grow,
    reinit_features,
    reset_frames,
    update_time_multiplier,
)
from .field_core import (
    CellField,
    GridDims,
    MacField,
    _clamp2,
    _clamp3,
    compute_sizing,
    dilate_sizing,
    face_centers,
    interp_scalar_many,
    interp_velocity_many,
)
from .flowmap import (
    MapField,
    backward_march,
    map_positions_at_cells,
    reset_identity,
    rk4_step,
)
from .poisson import PoissonConfig, project
from .scenes import build_scene
from .trainer import TrainConfig, train_session

SPEED_FLOOR = 1e-3    # rest-state guard in the CFL timestep


# ============================================================
# configuration and state
# ============================================================


@dataclass(frozen=True)
class SimConfig:
    scene: str = "steady_vortex_2d"
    reinit_n: int = 20
    cfl: float = 1.0
    sigma: float = 0.01
    enc_min_res: int = 16
    enc_max_res: int = 0          # 0: match the grid
    enc_levels: int = 4
    feat_len: int = 0             # 0: encoder default for the dimension
    decoder_width: int = 64
    train: TrainConfig = TrainConfig()
    buoyancy: float = 0.0
    gravity: tuple[float, ...] = (0.0, -1.0)
    seed: int = 0
    sampler: str = "neural"       # "exact" stores the midpoint grids verbatim
    poisson: PoissonConfig | None = None

    def __post_init__(self):
        if self.reinit_n < 1:
            raise ValueError("reinit_n must be >= 1")
        if self.cfl <= 0.0:
            raise ValueError("cfl must be positive")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.sampler not in ("neural", "exact"):
            raise ValueError(f"unknown sampler {self.sampler!r}")


@dataclass
class SimState:
    cfg: SimConfig
    dims: GridDims
    u: MacField
    u0: MacField                  # velocity snapshot at the last reinit
    fwd: MapField
    bwd: MapField
    rng: np.random.Generator
    rho: CellField | None = None
    rho0: CellField | None = None
    buf: SsnfBuffer | None = None
    aux: SsnfBuffer | None = None
    mid_frames: list = field(default_factory=list)
    dt_history: list = field(default_factory=list)
    i: int = 0
    last_losses: np.ndarray | None = None
    last_train_seconds: float = 0.0

    @property
    def j(self) -> int:
        return self.i % self.cfg.reinit_n

    @property
    def cycle_time(self) -> float:
        return float(sum(self.dt_history))


def init_state(cfg: SimConfig, dims: GridDims, u: MacField,
               rho: CellField | None = None) -> SimState:
    buf = aux = None
    if cfg.sampler == "neural":
        buf = SsnfBuffer(dims, min_res=cfg.enc_min_res,
                         max_res=cfg.enc_max_res or min(dims.cells),
                         levels=cfg.enc_levels,
                         feat_len=cfg.feat_len or None,
                         sigma=cfg.sigma, seed=cfg.seed)
        buf.decoders = DecoderEnsemble.glorot(dims.dim, buf.query_width,
                                              hidden=cfg.decoder_width,
                                              seed=cfg.seed + 1)
        aux = copy_buffer(buf)
    return SimState(cfg=cfg, dims=dims, u=u.copy(), u0=u.copy(),
                    fwd=MapField.identity(dims), bwd=MapField.identity(dims),
                    rng=np.random.default_rng(cfg.seed),
                    rho=None if rho is None else rho.copy(),
                    rho0=None if rho is None else rho.copy(),
                    buf=buf, aux=aux)


def init_scene_state(cfg: SimConfig, dims: GridDims) -> SimState:
    u, rho = build_scene(cfg.scene, dims, cfg.poisson)
    return init_state(cfg, dims, u, rho)


# ============================================================
# timestep and midpoint estimate
# ============================================================


def compute_dt(u: MacField, cfl: float, dx: float) -> float:
    """CFL timestep, floored against division by zero at rest."""
    return cfl * dx / max(u.max_speed(), SPEED_FLOOR)


def pullback_velocity(vel: MacField, m: MapField) -> MacField:
    """Matrix-transpose transport of vel through the map, per face."""
    d = m.dims
    comps = []
    for a in range(d.dim):
        v = interp_velocity_many(vel, m.pos[a])
        comps.append((m.col[a] * v).sum(axis=1)
                     .reshape(d.comp_shape(a)).astype(np.float32))
    return MacField(d, comps)


def midpoint_velocity(u: MacField, dt: float, force: MacField | None = None,
                      cfg: PoissonConfig | None = None) -> MacField:
    """Second-order velocity estimate at t + dt/2.

    A half-step backward map pulls the current impulse to the midpoint;
    no error compensation and no long-range map here, the single half
    step does not accumulate enough drift to pay for either.
    """
    half = MapField.identity(u.dims)
    rk4_step(half, u, -0.5 * dt)
    m = pullback_velocity(u, half)
    if force is not None:
        for a in range(u.dims.dim):
            m.comps[a] += np.float32(0.5 * dt) * force.comps[a]
    return project(m, cfg)


# ============================================================
# error-compensated impulse reconstruction
# ============================================================


@njit(cache=True)
def _bounds2(arr, dx, ox, oy, ex, ey, pts, lo, hi):
    n0, n1 = arr.shape
    inv = 1.0 / dx
    for k in range(pts.shape[0]):
        x, y = _clamp2(pts[k, 0], pts[k, 1], ex, ey)
        i = int(np.floor(x * inv - ox))
        j = int(np.floor(y * inv - oy))
        if i < 0:
            i = 0
        elif i > n0 - 2:
            i = n0 - 2
        if j < 0:
            j = 0
        elif j > n1 - 2:
            j = n1 - 2
        a = arr[i, j]
        b = arr[i + 1, j]
        c = arr[i, j + 1]
        d = arr[i + 1, j + 1]
        lo[k] = min(min(a, b), min(c, d))
        hi[k] = max(max(a, b), max(c, d))


@njit(cache=True)
def _bounds3(arr, dx, ox, oy, oz, ex, ey, ez, pts, lo, hi):
    n0, n1, n2 = arr.shape
    inv = 1.0 / dx
    for s in range(pts.shape[0]):
        x, y, z = _clamp3(pts[s, 0], pts[s, 1], pts[s, 2], ex, ey, ez)
        i = int(np.floor(x * inv - ox))
        j = int(np.floor(y * inv - oy))
        k = int(np.floor(z * inv - oz))
        if i < 0:
            i = 0
        elif i > n0 - 2:
            i = n0 - 2
        if j < 0:
            j = 0
        elif j > n1 - 2:
            j = n1 - 2
        if k < 0:
            k = 0
        elif k > n2 - 2:
            k = n2 - 2
        mn = arr[i, j, k]
        mx = mn
        for di in range(2):
            for dj in range(2):
                for dk in range(2):
                    v = arr[i + di, j + dj, k + dk]
                    if v < mn:
                        mn = v
                    if v > mx:
                        mx = v
        lo[s] = mn
        hi[s] = mx


def neighborhood_bounds(vel: MacField, axis: int,
                        pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min/max of the component's samples on the 2^d lattice nodes around pts."""
    d = vel.dims
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    lo = np.empty(pts.shape[0])
    hi = np.empty(pts.shape[0])
    offs = [0.0 if b == axis else 0.5 for b in range(d.dim)]
    if d.dim == 2:
        _bounds2(vel.comps[axis], d.dx, offs[0], offs[1], *d.extent, pts, lo, hi)
    else:
        _bounds3(vel.comps[axis], d.dx, offs[0], offs[1], offs[2], *d.extent,
                 pts, lo, hi)
    return lo, hi


def sample_clamped(q: MacField, u0: MacField, pts: np.ndarray) -> np.ndarray:
    """Sample q at pts, each component limited to u0's local value range.

    The limiter acts on the snapshot samples themselves, before any
    Jacobian gets applied: the transported components mix under the map,
    so their final range legitimately leaves u0's componentwise bounds
    under rotation, and clamping after the mix bleeds energy.
    """
    vals = interp_velocity_many(q, pts)
    for b in range(q.dims.dim):
        lo, hi = neighborhood_bounds(u0, b, pts)
        np.clip(vals[:, b], lo, hi, out=vals[:, b])
    return vals


def reconstruct_impulse(u0: MacField, bwd: MapField, fwd: MapField) -> MacField:
    """Limited two-pass impulse: pull back, remap forward, compensate, clamp.

    The forward remap of the pulled-back impulse measures the transport
    stencil's own error against the snapshot; subtracting half of it
    (pulled back in turn) cancels the smoothing bias to second order.
    Both passes sample at the same feet with the same columns, so the
    compensated impulse equals the pullback of the pre-corrected
    snapshot u0 - e: that is the field whose samples get range-limited.
    """
    d = bwd.dims
    mbar = pullback_velocity(u0, bwd)
    mbar0 = pullback_velocity(mbar, fwd)
    q = MacField(d, [c - 0.5 * (a - c)
                     for a, c in zip(mbar0.comps, u0.comps)])
    comps = []
    for a in range(d.dim):
        vals = sample_clamped(q, u0, bwd.pos[a])
        comps.append((bwd.col[a] * vals).sum(axis=1)
                     .reshape(d.comp_shape(a)).astype(np.float32))
    return MacField(d, comps)


def impulse_advect_bfecc(u0: MacField, bwd: MapField, fwd: MapField,
                         cfg: PoissonConfig | None = None) -> MacField:
    """Reconstruct the velocity at the current time from the reinit snapshot."""
    return project(reconstruct_impulse(u0, bwd, fwd), cfg)


# ============================================================
# forcing and passive transport
# ============================================================


def buoyancy_force(dims: GridDims, rho: CellField | None, coeff: float,
                   gravity: tuple[float, ...]) -> MacField | None:
    """Density-proportional body force per unit time, sampled at faces."""
    if coeff == 0.0 or rho is None:
        return None
    if len(gravity) != dims.dim:
        raise ValueError(f"gravity has {len(gravity)} components "
                         f"for a {dims.dim}D grid")
    comps = []
    for a in range(dims.dim):
        if gravity[a] == 0.0:
            comps.append(np.zeros(dims.comp_shape(a), dtype=np.float32))
            continue
        vals = interp_scalar_many(rho, face_centers(dims, a))
        comps.append((coeff * gravity[a] * vals)
                     .reshape(dims.comp_shape(a)).astype(np.float32))
    return MacField(dims, comps)


def apply_external_force(u: MacField, force: MacField | None, elapsed: float,
                         cfg: PoissonConfig | None = None) -> MacField:
    """Add the force integral accumulated since reinit, then re-project.

    The integrand is constant along flow paths, so the path integral
    collapses to force x elapsed time.  Added to the velocity, not the
    impulse: the map should not transport it a second time.
    """
    if force is None:
        return u
    comps = [c + np.float32(elapsed) * f
             for c, f in zip(u.comps, force.comps)]
    return project(MacField(u.dims, comps), cfg)


@njit(cache=True)
def _bilerp2(a, dx, ex, ey, pts, out):
    n0, n1 = a.shape
    inv = 1.0 / dx
    for k in range(pts.shape[0]):
        x, y = _clamp2(pts[k, 0], pts[k, 1], ex, ey)
        lx = x * inv - 0.5
        ly = y * inv - 0.5
        i = int(np.floor(lx))
        j = int(np.floor(ly))
        fx = lx - i
        fy = ly - j
        if i < 0:
            i, fx = 0, 0.0
        elif i > n0 - 2:
            i, fx = n0 - 2, 1.0
        if j < 0:
            j, fy = 0, 0.0
        elif j > n1 - 2:
            j, fy = n1 - 2, 1.0
        out[k] = ((1.0 - fx) * ((1.0 - fy) * a[i, j] + fy * a[i, j + 1])
                  + fx * ((1.0 - fy) * a[i + 1, j] + fy * a[i + 1, j + 1]))


@njit(cache=True)
def _bilerp3(a, dx, ex, ey, ez, pts, out):
    n0, n1, n2 = a.shape
    inv = 1.0 / dx
    for s in range(pts.shape[0]):
        x, y, z = _clamp3(pts[s, 0], pts[s, 1], pts[s, 2], ex, ey, ez)
        lx = x * inv - 0.5
        ly = y * inv - 0.5
        lz = z * inv - 0.5
        i = int(np.floor(lx))
        j = int(np.floor(ly))
        k = int(np.floor(lz))
        fx = lx - i
        fy = ly - j
        fz = lz - k
        if i < 0:
            i, fx = 0, 0.0
        elif i > n0 - 2:
            i, fx = n0 - 2, 1.0
        if j < 0:
            j, fy = 0, 0.0
        elif j > n1 - 2:
            j, fy = n1 - 2, 1.0
        if k < 0:
            k, fz = 0, 0.0
        elif k > n2 - 2:
            k, fz = n2 - 2, 1.0
        c00 = (1.0 - fz) * a[i, j, k] + fz * a[i, j, k + 1]
        c01 = (1.0 - fz) * a[i, j + 1, k] + fz * a[i, j + 1, k + 1]
        c10 = (1.0 - fz) * a[i + 1, j, k] + fz * a[i + 1, j, k + 1]
        c11 = (1.0 - fz) * a[i + 1, j + 1, k] + fz * a[i + 1, j + 1, k + 1]
        out[s] = ((1.0 - fx) * ((1.0 - fy) * c00 + fy * c01)
                  + fx * ((1.0 - fy) * c10 + fy * c11))


def advect_density(rho0: CellField, bwd: MapField) -> CellField:
    """Pull the reinit-time density through the backward map.

    Bilinear sampling, not the quadratic kernel: passive transport wants
    the identity map to reproduce the field exactly and new extrema to be
    impossible, and it never needs derivatives.
    """
    d = rho0.dims
    psi = np.ascontiguousarray(map_positions_at_cells(bwd))
    vals = np.empty(psi.shape[0])
    if d.dim == 2:
        _bilerp2(rho0.data, d.dx, *d.extent, psi, vals)
    else:
        _bilerp3(rho0.data, d.dx, *d.extent, psi, vals)
    return CellField.from_array(d, vals.reshape(d.cells))


# ============================================================
# reinitialization and the full step
# ============================================================


def reinitialize(state: SimState) -> SimState:
    """Start a fresh cycle: identity maps, new snapshots, blank features."""
    reset_identity(state.fwd)
    reset_identity(state.bwd)
    state.u0 = state.u.copy()
    if state.rho is not None:
        state.rho0 = state.rho.copy()
    state.dt_history.clear()
    state.mid_frames.clear()
    if state.buf is not None:
        reinit_features(state.buf, int(state.rng.integers(2 ** 31 - 1)))
        reset_frames(state.buf)
        state.aux = copy_buffer(state.buf)
    return state


def _history_sampler(state: SimState) -> Callable[[int], MacField] | None:
    if state.j == 0:
        return None
    if state.buf is None:
        frames = state.mid_frames
        return lambda l: frames[l]
    buf = state.buf
    times = np.asarray(buf.frame_times)
    starts = np.concatenate(([0.0], times[:-1]))
    mids = 0.5 * (starts + times) * buf.lam
    return lambda l: decode_velocity(buf, float(mids[l]))


def step(state: SimState) -> SimState:
    """One full time step; trains the buffer on every step but the
    cycle's last, whose midpoint field is only needed for one march."""
    cfg = state.cfg
    if state.j == 0:
        reinitialize(state)
    j = state.j
    dt = compute_dt(state.u, cfg.cfl, state.dims.dx)
    state.dt_history.append(dt)

    force = buoyancy_force(state.dims, state.rho, cfg.buoyancy, cfg.gravity)
    u_mid = midpoint_velocity(state.u, dt, force, cfg.poisson)

    state.last_losses = None
    state.last_train_seconds = 0.0
    if state.buf is None:
        state.mid_frames.append(u_mid.copy())
    elif (state.i + 1) % cfg.reinit_n != 0:
        tick = time.perf_counter()
        S = dilate_sizing(compute_sizing(u_mid))
        grow(state.buf, S)
        _, stale = update_time_multiplier(state.buf, dt)
        if stale:
            # the normalization just moved too far: refit from scratch
            reinit_features(state.buf, int(state.rng.integers(2 ** 31 - 1)))
        state.last_losses = train_session(
            state.buf, state.aux if j > 0 else None, u_mid, S, cfg.train)
        state.aux = copy_buffer(state.buf)
        state.last_train_seconds = time.perf_counter() - tick

    backward_march(state.bwd, u_mid, state.dt_history, j,
                   _history_sampler(state))
    rk4_step(state.fwd, u_mid, dt)

    state.u = impulse_advect_bfecc(state.u0, state.bwd, state.fwd, cfg.poisson)
    if state.rho is not None:
        state.rho = advect_density(state.rho0, state.bwd)
    if force is not None:
        state.u = apply_external_force(state.u, force, state.cycle_time,
                                       cfg.poisson)
    state.i += 1
    return state
