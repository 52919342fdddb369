"""Error metrics, energy, and the per-step metrics CSV.

The CSV column order is frozen (see COLUMNS); deterministic mode zeroes the
wall-time columns so repeated runs produce byte-identical files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .field_core import GridDims, MacField


def _cell_avg(f: MacField, axis: int) -> np.ndarray:
    """Average the two axis-`axis` faces of every cell."""
    c = f.comps[axis].astype(np.float64)
    lo = tuple(slice(0, -1) if a == axis else slice(None) for a in range(f.dims.dim))
    hi = tuple(slice(1, None) if a == axis else slice(None) for a in range(f.dims.dim))
    return 0.5 * (c[lo] + c[hi])


def cell_velocity(f: MacField) -> np.ndarray:
    """(cells..., dim) velocity vectors aggregated at cell centers."""
    return np.stack([_cell_avg(f, a) for a in range(f.dims.dim)], axis=-1)


def rmse(a: MacField, b: MacField) -> float:
    """Root mean squared difference over all face samples of all components."""
    if a.dims != b.dims:
        raise ValueError("fields live on different grids")
    num = 0.0
    count = 0
    for ca, cb in zip(a.comps, b.comps):
        d = ca.astype(np.float64) - cb.astype(np.float64)
        num += float((d * d).sum())
        count += d.size
    return float(np.sqrt(num / count))


def aepe(a: MacField, b: MacField) -> float:
    """Mean Euclidean distance between cell-centered velocity vectors."""
    if a.dims != b.dims:
        raise ValueError("fields live on different grids")
    d = cell_velocity(a) - cell_velocity(b)
    return float(np.sqrt((d * d).sum(axis=-1)).mean())


def mean_abs_error(a: MacField, b: MacField) -> float:
    """Mean absolute difference over all face samples of all components."""
    if a.dims != b.dims:
        raise ValueError("fields live on different grids")
    num = 0.0
    count = 0
    for ca, cb in zip(a.comps, b.comps):
        num += float(np.abs(ca.astype(np.float64) - cb.astype(np.float64)).sum())
        count += ca.size
    return num / count


def kinetic_energy(u: MacField) -> float:
    """0.5 * sum of cell-centered speed squared times cell volume."""
    v = cell_velocity(u)
    return 0.5 * float((v * v).sum()) * u.dims.dx ** u.dims.dim


def rms_speed(u: MacField) -> float:
    """Root mean squared speed over cell centers."""
    v = cell_velocity(u)
    return float(np.sqrt((v * v).sum(axis=-1).mean()))


# ============================================================
# metrics records and the CSV writer
# ============================================================


@dataclass
class MetricsRecord:
    step: int
    time: float
    kinetic_energy: float
    max_speed: float
    div_inf: float
    roundtrip: float = float("nan")
    jacobian: float = float("nan")
    rmse: float = float("nan")
    aepe: float = float("nan")
    train_loss: float = float("nan")
    train_iters: int = 0
    wall_march: float = 0.0
    wall_train: float = 0.0
    wall_project: float = 0.0
    wall_total: float = 0.0

    def validate(self) -> "MetricsRecord":
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and f.name not in _OPTIONAL and not np.isfinite(v):
                raise ValueError(f"non-finite metric {f.name}={v}")
        return self


_OPTIONAL = {"roundtrip", "jacobian", "rmse", "aepe", "train_loss"}
COLUMNS = tuple(f.name for f in fields(MetricsRecord))
_WALL = tuple(c for c in COLUMNS if c.startswith("wall_"))


def _fmt(name: str, value) -> str:
    if name in ("step", "train_iters"):
        return str(int(value))
    if isinstance(value, float) and np.isnan(value):
        return ""
    return f"{value:.10e}"


class MetricsWriter:
    """Appends records to a CSV with the frozen column order."""

    def __init__(self, path: str | Path, deterministic: bool = False):
        self.path = Path(path)
        self.deterministic = deterministic
        self._last_step = None
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", newline="") as fh:
            csv.writer(fh).writerow(COLUMNS)

    def append(self, rec: MetricsRecord) -> None:
        rec.validate()
        if self._last_step is not None and rec.step <= self._last_step:
            raise ValueError(f"step {rec.step} not after {self._last_step}")
        self._last_step = rec.step
        row = []
        for name in COLUMNS:
            value = getattr(rec, name)
            if self.deterministic and name in _WALL:
                value = 0.0
            row.append(_fmt(name, value))
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow(row)


def read_metrics(path: str | Path) -> list[MetricsRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"unexpected metrics columns {reader.fieldnames}")
        for row in reader:
            kw = {}
            for name in COLUMNS:
                raw = row[name]
                if name in ("step", "train_iters"):
                    kw[name] = int(raw)
                else:
                    kw[name] = float(raw) if raw else float("nan")
            out.append(MetricsRecord(**kw))
    return out
