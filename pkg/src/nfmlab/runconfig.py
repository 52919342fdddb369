"""Experiment configuration: flat key = value manifests plus overrides.

The file format is one `key = value` pair per line, `#` comments, no
sections.  CLI flags override file keys, which override the defaults below.
Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .field_core import GridDims

_SCENE_DIM = {
    "steady_vortex_2d": 2,
    "leapfrog_2d": 2,
    "leapfrog_3d": 3,
}

_METHODS = ("nfm", "sl", "bfecc", "mcr")
_SAMPLERS = ("neural", "exact")


@dataclass(frozen=True)
class RunConfig:
    scene: str = "steady_vortex_2d"
    resolution: str = "128"
    cfl: float = 1.0
    reinit_n: int = 20
    sigma: float = 0.01
    batch_size: int = 8192
    max_iters: int = 2000
    steps: int = 300
    method: str = "nfm"
    seed: int = 0
    out_dir: str = "out"
    snapshot_every: int = 0
    image_every: int = 0
    deterministic: bool = False
    sampler: str = "neural"
    enc_min_res: int = 16
    enc_max_res: int = 0          # 0: match the simulation resolution
    enc_levels: int = 4
    enc_features: int = 0         # 0: 8 per node in 2D, 16 in 3D
    decoder_width: int = 64
    learning_rate: float = 1e-2
    early_stop: float = 1e-4
    buoyancy: float = 0.0
    gravity: str = "0,-1"

    def __post_init__(self):
        if self.scene not in _SCENE_DIM:
            raise ValueError(f"unknown scene {self.scene!r}; "
                             f"pick one of {sorted(_SCENE_DIM)}")
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}; pick one of {_METHODS}")
        if self.sampler not in _SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}; pick one of {_SAMPLERS}")
        if self.cfl <= 0.0:
            raise ValueError("cfl must be positive")
        if self.reinit_n < 1:
            raise ValueError("reinit_n must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch_size < 1 or self.max_iters < 1:
            raise ValueError("batch_size and max_iters must be >= 1")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.enc_features and self.enc_features % 4:
            raise ValueError("enc_features must be divisible by 4 "
                             "(four temporal anchor segments)")
        self.grid_dims()    # validates the resolution string

    def grid_dims(self) -> GridDims:
        parts = [p for p in self.resolution.replace("x", " ").split() if p]
        try:
            counts = [int(p) for p in parts]
        except ValueError:
            raise ValueError(f"bad resolution {self.resolution!r}") from None
        dim = _SCENE_DIM[self.scene]
        if len(counts) == 1:
            counts = counts * dim
        if len(counts) != dim:
            raise ValueError(f"scene {self.scene!r} is {dim}D but resolution "
                             f"{self.resolution!r} has {len(counts)} axes")
        return GridDims.of(*counts)

    def gravity_vector(self) -> tuple[float, ...]:
        parts = [float(p) for p in self.gravity.split(",")]
        dim = _SCENE_DIM[self.scene]
        if len(parts) != dim:
            raise ValueError(f"gravity {self.gravity!r} has {len(parts)} "
                             f"components for a {dim}D scene")
        return tuple(parts)


_BOOL_WORDS = {"true": True, "1": True, "yes": True,
               "false": False, "0": False, "no": False}


def _coerce(name: str, kind: type, raw: str):
    if kind is bool:
        try:
            return _BOOL_WORDS[raw.strip().lower()]
        except KeyError:
            raise ValueError(f"bad boolean for {name}: {raw!r}") from None
    try:
        return kind(raw.strip()) if kind is not str else raw.strip()
    except ValueError:
        raise ValueError(f"bad {kind.__name__} for {name}: {raw!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, value = body.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_config(file_path: str | Path | None = None, **overrides) -> RunConfig:
    """Defaults <- config file <- keyword overrides (None values skipped)."""
    types = {f.name: f.type for f in fields(RunConfig)}
    kinds = {"str": str, "float": float, "int": int, "bool": bool}
    merged: dict = {}
    if file_path is not None:
        raw = parse_config_text(Path(file_path).read_text(), str(file_path))
        for key, value in raw.items():
            if key not in types:
                raise ValueError(f"{file_path}: unknown config key {key!r}")
            merged[key] = _coerce(key, kinds[types[key]], value)
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in types:
            raise ValueError(f"unknown config key {key!r}")
        kind = kinds[types[key]]
        merged[key] = _coerce(key, kind, value) if isinstance(value, str) else kind(value)
    return RunConfig(**merged)


def config_to_text(cfg: RunConfig) -> str:
    """Manifest form of a config; parsing it back reproduces cfg."""
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"
