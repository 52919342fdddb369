"""Experiment drivers: run, fit, diagnose, compare, and the n sweep.

Every driver takes a RunConfig, writes its artifacts under cfg.out_dir
(a resolved config manifest, a metrics CSV, optional snapshots and
vorticity images), and returns a small result object with the numbers a
caller usually wants next.  Given a fixed seed and deterministic mode
the file output is byte-reproducible; wall-time columns are the only
nondeterministic fields and the metrics writer zeroes them in that mode.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import BaselineKind, baseline_step
from .decoder import DecoderEnsemble, decode_velocity
from .encoder import (
    SsnfBuffer,
    copy_buffer,
    grow,
    reinit_features,
    update_time_multiplier,
)
from .field_core import (
    CellField,
    MacField,
    compute_sizing,
    dilate_sizing,
    divergence,
    vorticity,
)
from .flowmap import (
    MapField,
    backward_march,
    jacobian_consistency_error,
    marched_consistency,
    roundtrip_error,
    sl_backward_map_step,
)
from .metrics import (
    COLUMNS,
    MetricsRecord,
    MetricsWriter,
    aepe,
    kinetic_energy,
    mean_abs_error,
    rms_speed,
    rmse,
)
from .nfm import SimConfig, compute_dt, init_scene_state, step
from .poisson import read_projection_clock
from .runconfig import RunConfig, config_to_text
from .scenes import build_scene
from .snapshot import write_snapshot
from .trainer import TrainConfig, train_session

STEADY_SCENES = ("steady_vortex_2d",)


def train_config_from_run(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(batch_size=cfg.batch_size, max_iters=cfg.max_iters,
                       early_stop=cfg.early_stop, lr_start=cfg.learning_rate)


def sim_config_from_run(cfg: RunConfig) -> SimConfig:
    """Narrow an experiment manifest down to the solver's own knobs."""
    return SimConfig(scene=cfg.scene, reinit_n=cfg.reinit_n, cfl=cfg.cfl,
                     sigma=cfg.sigma, enc_min_res=cfg.enc_min_res,
                     enc_max_res=cfg.enc_max_res, enc_levels=cfg.enc_levels,
                     feat_len=cfg.enc_features, decoder_width=cfg.decoder_width,
                     train=train_config_from_run(cfg), buoyancy=cfg.buoyancy,
                     gravity=cfg.gravity_vector(), seed=cfg.seed,
                     sampler=cfg.sampler)


def _div_inf(u: MacField) -> float:
    return float(np.abs(divergence(u).data).max())


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config_to_text(cfg))
    return out


# ============================================================
# vorticity images
# ============================================================

# blue-white-red diverging ramp endpoints
_COOL = np.array([59.0, 76.0, 192.0])
_MID = np.array([221.0, 221.0, 221.0])
_WARM = np.array([180.0, 4.0, 38.0])


def vorticity_panel(u: MacField) -> np.ndarray:
    """2D array to image: the scalar curl in 2D, curl magnitude on the
    middle z slice in 3D."""
    w = vorticity(u)
    if u.dims.dim == 2:
        return np.asarray(w.data, dtype=np.float64)
    mag = np.sqrt((w.astype(np.float64) ** 2).sum(axis=-1))
    return mag[:, :, mag.shape[2] // 2]


def write_ppm(path: str | Path, panel: np.ndarray, lo: float, hi: float) -> None:
    """Binary pixmap of panel mapped through the diverging ramp.

    The panel is indexed (x, y); image rows run top to bottom, so the
    y axis is flipped to point up.  Values are clamped to [lo, hi].
    """
    if hi <= lo:
        raise ValueError(f"empty normalization range [{lo}, {hi}]")
    t = np.clip((panel.astype(np.float64).T[::-1] - lo) / (hi - lo), 0.0, 1.0)
    s = (2.0 * t - 1.0)[..., None]
    rgb = np.where(s < 0.0, _MID - s * (_COOL - _MID), _MID + s * (_WARM - _MID))
    with open(path, "wb") as fh:
        fh.write(f"P6\n{t.shape[1]} {t.shape[0]}\n255\n".encode())
        fh.write(np.rint(rgb).clip(0.0, 255.0).astype(np.uint8).tobytes())


class _ImageSink:
    """Writes numbered vorticity pixmaps with bounds fixed by the first
    frame and recorded next to the images, so every frame of a run is
    normalized identically."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.bounds: tuple[float, float] | None = None

    def emit(self, u: MacField, step_no: int) -> Path:
        panel = vorticity_panel(u)
        if self.bounds is None:
            self.dir.mkdir(parents=True, exist_ok=True)
            b = max(float(np.abs(panel).max()), 1e-12)
            self.bounds = (-b, b)
            (self.dir / "bounds.txt").write_text(
                f"lo = {-b:.10e}\nhi = {b:.10e}\n")
        path = self.dir / f"vort_{step_no:06d}.ppm"
        write_ppm(path, panel, *self.bounds)
        return path


# ============================================================
# run: drive a simulation and record per-step metrics
# ============================================================


@dataclass
class RunResult:
    out_dir: Path
    metrics_path: Path
    velocity: MacField
    density: CellField | None
    truth: MacField | None    # initial state of a steady scene, else None
    wall_seconds: float


def run(cfg: RunConfig) -> RunResult:
    """Advance cfg.steps steps of cfg.method on cfg.scene.

    Writes out_dir/metrics.csv (one row per step), the resolved config
    manifest, velocity/density snapshots every snapshot_every steps and
    vorticity pixmaps every image_every steps when those are nonzero.
    Steady scenes also fill the rmse/aepe columns against the initial
    equilibrium; map-quality columns are filled for the flow-map method.
    """
    out = _prepare_out(cfg)
    writer = MetricsWriter(out / "metrics.csv", deterministic=cfg.deterministic)
    images = _ImageSink(out / "images")
    dims = cfg.grid_dims()

    state = None
    kind = None
    if cfg.method == "nfm":
        state = init_scene_state(sim_config_from_run(cfg), dims)
        u, rho = state.u, state.rho
    else:
        kind = BaselineKind.parse(cfg.method)
        u, _ = build_scene(cfg.scene, dims)
        rho = None    # baselines advect velocity only
    truth = u.copy() if cfg.scene in STEADY_SCENES else None

    started = time.perf_counter()
    sim_time = 0.0
    read_projection_clock(reset=True)
    for s in range(1, cfg.steps + 1):
        tick = time.perf_counter()
        proj0 = read_projection_clock()
        if state is not None:
            step(state)
            dt = float(state.dt_history[-1])
            u, rho = state.u, state.rho
            losses = state.last_losses
            wall_train = state.last_train_seconds
            rt = roundtrip_error(state.fwd, state.bwd)
            jc = jacobian_consistency_error(state.fwd, state.bwd)
        else:
            dt = compute_dt(u, cfg.cfl, dims.dx)
            u = baseline_step(kind, u, dt)
            losses, wall_train = None, 0.0
            rt = jc = float("nan")
        sim_time += dt

        wall_project = read_projection_clock() - proj0
        wall_total = time.perf_counter() - tick
        writer.append(MetricsRecord(
            step=s, time=sim_time,
            kinetic_energy=kinetic_energy(u),
            max_speed=u.max_speed(),
            div_inf=_div_inf(u),
            roundtrip=rt, jacobian=jc,
            rmse=float("nan") if truth is None else rmse(u, truth),
            aepe=float("nan") if truth is None else aepe(u, truth),
            train_loss=float(losses[-1]) if losses is not None else float("nan"),
            train_iters=0 if losses is None else len(losses),
            wall_march=max(wall_total - wall_train - wall_project, 0.0),
            wall_train=wall_train, wall_project=wall_project,
            wall_total=wall_total))

        if cfg.snapshot_every and s % cfg.snapshot_every == 0:
            snap = out / "snapshots"
            snap.mkdir(parents=True, exist_ok=True)
            write_snapshot(u, snap / f"vel_{s:06d}.nfmf")
            if rho is not None:
                write_snapshot(rho, snap / f"rho_{s:06d}.nfmf")
        if cfg.image_every and s % cfg.image_every == 0:
            images.emit(u, s)

    return RunResult(out_dir=out, metrics_path=writer.path, velocity=u,
                     density=rho, truth=truth,
                     wall_seconds=time.perf_counter() - started)


# ============================================================
# fit: stream frames through the training loop
# ============================================================


@dataclass
class SessionStats:
    rmse: float
    aepe: float
    loss: float
    iters: int
    rms_speed: float


@dataclass
class FitResult:
    out_dir: Path
    metrics_path: Path
    sessions: list[SessionStats]


def fit(cfg: RunConfig) -> FitResult:
    """Fit a stream of cfg.steps frames, one training session per frame.

    Frames come from advecting the scene with the MacCormack stepper
    (or with cfg.method when it names another baseline) at CFL steps.
    After each session the newest frame is decoded back at its midpoint
    time and compared against the grid; the metrics CSV carries those
    errors in the rmse/aepe columns alongside the session's loss and
    iteration count.
    """
    out = _prepare_out(cfg)
    writer = MetricsWriter(out / "metrics.csv", deterministic=cfg.deterministic)
    dims = cfg.grid_dims()
    advance = BaselineKind.MCR if cfg.method == "nfm" else BaselineKind.parse(cfg.method)

    u, _ = build_scene(cfg.scene, dims)
    buf = SsnfBuffer(dims, min_res=cfg.enc_min_res,
                     max_res=cfg.enc_max_res or min(dims.cells),
                     levels=cfg.enc_levels, feat_len=cfg.enc_features or None,
                     sigma=cfg.sigma, seed=cfg.seed)
    buf.decoders = DecoderEnsemble.glorot(dims.dim, buf.query_width,
                                          hidden=cfg.decoder_width,
                                          seed=cfg.seed + 1)
    tcfg = train_config_from_run(cfg)
    rng = np.random.default_rng(cfg.seed)

    aux = None
    sim_time = 0.0
    sessions: list[SessionStats] = []
    read_projection_clock(reset=True)
    for s in range(1, cfg.steps + 1):
        tick = time.perf_counter()
        proj0 = read_projection_clock()
        dt = compute_dt(u, cfg.cfl, dims.dx)

        t0 = time.perf_counter()
        S = dilate_sizing(compute_sizing(u))
        grow(buf, S)
        _, stale = update_time_multiplier(buf, dt)
        if stale:
            reinit_features(buf, int(rng.integers(2 ** 31 - 1)))
        losses = train_session(buf, aux, u, S, tcfg)
        aux = copy_buffer(buf)
        wall_train = time.perf_counter() - t0

        start = buf.frame_times[-2] if len(buf.frame_times) > 1 else 0.0
        decoded = decode_velocity(buf, 0.5 * (start + buf.frame_times[-1]) * buf.lam)
        stats = SessionStats(rmse=rmse(decoded, u), aepe=aepe(decoded, u),
                             loss=float(losses[-1]), iters=len(losses),
                             rms_speed=rms_speed(u))
        sessions.append(stats)
        sim_time += dt

        wall_project = read_projection_clock() - proj0
        wall_total = time.perf_counter() - tick
        writer.append(MetricsRecord(
            step=s, time=sim_time,
            kinetic_energy=kinetic_energy(u),
            max_speed=u.max_speed(),
            div_inf=_div_inf(u),
            rmse=stats.rmse, aepe=stats.aepe,
            train_loss=stats.loss, train_iters=stats.iters,
            wall_march=max(wall_total - wall_train - wall_project, 0.0),
            wall_train=wall_train, wall_project=wall_project,
            wall_total=wall_total))

        u = baseline_step(advance, u, dt)

    return FitResult(out_dir=out, metrics_path=writer.path, sessions=sessions)


# ============================================================
# diagnose: map quality against the asymmetric baseline
# ============================================================

DIAGNOSE_COLUMNS = ("step", "time", "bidir_roundtrip", "bidir_jacobian",
                    "sl_roundtrip", "sl_jacobian")


@dataclass
class DiagnoseResult:
    out_dir: Path
    csv_path: Path
    bidir_roundtrip: float
    bidir_jacobian: float
    sl_roundtrip: float
    sl_jacobian: float


def diagnose(cfg: RunConfig) -> DiagnoseResult:
    """Kinematic map-quality comparison on a frozen velocity field.

    Two backward maps chase the same steady scene velocity for
    cfg.steps CFL steps: one is rebuilt from identity through the whole
    step history each step (the production scheme), the other updates
    incrementally by interpolating its own previous state at backtraced
    points.  Quality is measured without either map's interpolants:
    particles seeded at each map's feet are marched forward through the
    history, and the distance from the faces they should return to is
    the roundtrip error; the accumulated Jacobian-column product's
    distance from identity is the consistency error.  The result holds
    the final step's numbers.
    """
    out = _prepare_out(cfg)
    dims = cfg.grid_dims()
    u, _ = build_scene(cfg.scene, dims)
    dt = compute_dt(u, cfg.cfl, dims.dx)

    bwd = MapField.identity(dims)
    sl = MapField.identity(dims)
    dts: list[float] = []
    frames = lambda l: u    # noqa: E731  steady field, every entry identical
    rows = []
    for s in range(1, cfg.steps + 1):
        dts.append(dt)
        j = s - 1
        backward_march(bwd, u, dts, j, frames)
        sl_backward_map_step(sl, u, dt)
        brt, bjc = marched_consistency(bwd, u, dts, j, frames)
        srt, sjc = marched_consistency(sl, u, dts, j, frames)
        rows.append((s, s * dt, brt, bjc, srt, sjc))

    csv_path = out / "diagnose.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAGNOSE_COLUMNS)
        for row in rows:
            w.writerow([str(row[0])] + [f"{v:.10e}" for v in row[1:]])
    last = rows[-1]
    return DiagnoseResult(out_dir=out, csv_path=csv_path,
                          bidir_roundtrip=last[2], bidir_jacobian=last[3],
                          sl_roundtrip=last[4], sl_jacobian=last[5])


# ============================================================
# compare and sweep-n: multi-run frontends over run()
# ============================================================


def compare(cfg: RunConfig,
            methods: Sequence[str] = ("nfm", "mcr", "bfecc", "sl")) -> Path:
    """Run each method under out_dir/<method>/ and join the per-step
    metrics into one long-form CSV keyed by a leading method column."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for m in methods:
        sub = replace(cfg, method=m, out_dir=str(out / m))
        paths[m] = run(sub).metrics_path
    joined = out / "compare.csv"
    with open(joined, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("method",) + COLUMNS)
        for m in methods:
            with open(paths[m], newline="") as src:
                r = csv.reader(src)
                next(r)
                for row in r:
                    w.writerow([m] + row)
    return joined


SWEEP_COLUMNS = ("reinit_n", "mean_abs_err", "rmse", "aepe", "kinetic_energy")


@dataclass
class SweepResult:
    out_dir: Path
    csv_path: Path
    rows: list[tuple[int, float, float, float, float]]


def sweep_n(cfg: RunConfig, n_values: Sequence[int]) -> SweepResult:
    """Final-state error of the flow-map method as a function of the
    reinitialization period, one sub-run per n.  Error columns are
    against the steady truth and empty for scenes without one."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in n_values:
        sub = replace(cfg, method="nfm", reinit_n=int(n),
                      out_dir=str(out / f"n{int(n):03d}"))
        res = run(sub)
        if res.truth is not None:
            errs = (mean_abs_error(res.velocity, res.truth),
                    rmse(res.velocity, res.truth),
                    aepe(res.velocity, res.truth))
        else:
            errs = (float("nan"),) * 3
        rows.append((int(n),) + errs + (kinetic_energy(res.velocity),))

    csv_path = out / "sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([str(row[0])] + ["" if np.isnan(v) else f"{v:.10e}"
                                        for v in row[1:]])
    return SweepResult(out_dir=out, csv_path=csv_path, rows=rows)
