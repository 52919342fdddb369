"""Initial-condition catalog: mollified vortices in the closed unit box.

Every constructor samples a closed-form velocity onto the MAC layout and
projects it, so scenes enter the solvers divergence-free and wall-compatible.
The singular Biot-Savart profiles are tamed by the saturating mollifier
m(s) = 1 - exp(-s^3), which vanishes cubically at the origin and is
indistinguishable from 1 a few supports out.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .field_core import CellField, GridDims, MacField, cell_centers, face_centers
from .poisson import PoissonConfig, project

# strength/support of the classic four-vortex ladder; the single steady
# vortex gets a wider core so a 128-cell run resolves its swirl peak
LEAPFROG_X = 0.25
LEAPFROG_YS = (0.26, 0.38, 0.62, 0.74)
LEAPFROG_STRENGTH = 0.005
LEAPFROG_SUPPORT = 0.02
STEADY_STRENGTH = 0.005
STEADY_SUPPORT = 0.06
RING_XS = (0.16, 0.29125)
RING_MAJOR = 0.21
RING_MINOR = 0.0168


@dataclass(frozen=True)
class VortexSpec:
    """One mollified vortex: a 2D point swirl or a 3D circular filament."""

    center: tuple[float, ...]
    strength: float = LEAPFROG_STRENGTH
    support: float = LEAPFROG_SUPPORT
    normal: tuple[float, float, float] | None = None
    major_radius: float | None = None
    minor_radius: float | None = None

    def __post_init__(self):
        if not self.support > 0.0:
            raise ValueError("mollification support must be positive")
        ring = (self.normal, self.major_radius, self.minor_radius)
        if any(v is not None for v in ring):
            if any(v is None for v in ring):
                raise ValueError("ring specs need normal, major_radius and minor_radius")
            if not self.major_radius > self.minor_radius > 0.0:
                raise ValueError("ring radii must satisfy major > minor > 0")
            if not float(np.linalg.norm(self.normal)) > 0.0:
                raise ValueError("ring normal must be nonzero")

    @property
    def is_ring(self) -> bool:
        return self.major_radius is not None


def mollifier(s):
    """m(s) = 1 - exp(-s^3); expm1 keeps the small-s cubic exact."""
    s = np.asarray(s, dtype=np.float64)
    return -np.expm1(-(s ** 3))


# ============================================================
# 2D point vortices
# ============================================================


def point_vortex_2d(dims: GridDims, specs: VortexSpec | Sequence[VortexSpec],
                    do_project: bool = True,
                    cfg: PoissonConfig | None = None) -> MacField:
    """Superpose mollified point vortices and project onto the MAC grid.

    Each vortex swirls counterclockwise (for positive strength) at
    w/(2*pi*d) * m(d/a) about its center: zero at the core, the ideal point
    vortex beyond a few supports.
    """
    if dims.dim != 2:
        raise ValueError("point vortices are a 2D construction")
    if isinstance(specs, VortexSpec):
        specs = [specs]
    comps = []
    for a in range(2):
        pts = face_centers(dims, a)
        val = np.zeros(len(pts))
        for sp in specs:
            if sp.is_ring:
                raise ValueError("ring specs belong to vortex_ring_3d")
            rx = pts[:, 0] - sp.center[0]
            ry = pts[:, 1] - sp.center[1]
            d = np.hypot(rx, ry)
            d = np.maximum(d, 1e-12 * sp.support)
            swirl = sp.strength / (2.0 * np.pi * d) * mollifier(d / sp.support)
            val += swirl * (-ry if a == 0 else rx) / d
        comps.append(val.reshape(dims.comp_shape(a)).astype(np.float32))
    f = MacField(dims, comps)
    return project(f, cfg) if do_project else f


def steady_vortex_2d(dims: GridDims, strength: float = STEADY_STRENGTH,
                     support: float = STEADY_SUPPORT,
                     cfg: PoissonConfig | None = None) -> MacField:
    """Single centered vortex; an equilibrium of the closed box.

    A purely radial swirl balances against pressure, and the wall correction
    the projection adds is exactly the image field under which a centered
    vortex stays put, so the long-run truth is the initial state itself.
    """
    center = tuple(e / 2.0 for e in dims.extent)
    return point_vortex_2d(dims, VortexSpec(center=center, strength=strength,
                                            support=support), cfg=cfg)


def leapfrog_2d_scene(dims: GridDims,
                      cfg: PoissonConfig | None = None) -> tuple[MacField, CellField]:
    """Four staged point vortices that leapfrog rightward, plus a smoke sheet.

    Two counter-rotating pairs mirrored about mid-height; signs are chosen so
    the pack propagates toward the far wall (positive x).
    """
    specs = [
        VortexSpec(center=(LEAPFROG_X, y),
                   strength=LEAPFROG_STRENGTH * (1.0 if y > 0.5 else -1.0),
                   support=LEAPFROG_SUPPORT)
        for y in LEAPFROG_YS
    ]
    vel = point_vortex_2d(dims, specs, cfg=cfg)

    # vertical smoke sheet through the vortex line, tapered at both ends
    pts = cell_centers(dims)
    stripe = np.exp(-(((pts[:, 0] - LEAPFROG_X) / 0.02) ** 2))
    t_lo = np.clip((pts[:, 1] - 0.18) / 0.06, 0.0, 1.0)
    t_hi = np.clip((0.82 - pts[:, 1]) / 0.06, 0.0, 1.0)
    window = t_lo * t_lo * (3.0 - 2.0 * t_lo) * t_hi * t_hi * (3.0 - 2.0 * t_hi)
    density = CellField.from_array(dims, (stripe * window).reshape(dims.cells))
    return vel, density


# ============================================================
# 3D vortex rings
# ============================================================


def _ring_frame(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = normal / np.linalg.norm(normal)
    seed = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, seed)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def vortex_ring_3d(dims: GridDims, specs: VortexSpec | Sequence[VortexSpec],
                   segments: int = 256, do_project: bool = True,
                   cfg: PoissonConfig | None = None) -> MacField:
    """Mollified Biot-Savart velocity of circular filaments, projected.

    Each ring is discretized into straight segments; a segment at y with
    direction dl contributes strength/(4*pi) * dl x (x-y)/|x-y|^3, scaled by
    the mollifier so the core stays finite.
    """
    if dims.dim != 3:
        raise ValueError("vortex rings are a 3D construction")
    if isinstance(specs, VortexSpec):
        specs = [specs]
    comps = []
    for a in range(3):
        pts = face_centers(dims, a)
        val = np.zeros(len(pts))
        for sp in specs:
            if not sp.is_ring:
                raise ValueError("2D point specs belong to point_vortex_2d")
            e1, e2 = _ring_frame(np.asarray(sp.normal, dtype=np.float64))
            theta = np.linspace(0.0, 2.0 * np.pi, segments + 1)
            nodes = (np.asarray(sp.center)[None, :]
                     + sp.major_radius * (np.cos(theta)[:, None] * e1
                                          + np.sin(theta)[:, None] * e2))
            mids = 0.5 * (nodes[1:] + nodes[:-1])
            dls = nodes[1:] - nodes[:-1]
            scale = sp.strength / (4.0 * np.pi)
            for y, dl in zip(mids, dls):
                r = pts - y
                dist = np.sqrt((r * r).sum(axis=1))
                dist = np.maximum(dist, 1e-12 * sp.support)
                w = scale * mollifier(dist / sp.support) / dist ** 3
                cross_a = (dl[(a + 1) % 3] * r[:, (a + 2) % 3]
                           - dl[(a + 2) % 3] * r[:, (a + 1) % 3])
                val += w * cross_a
        comps.append(val.reshape(dims.comp_shape(a)).astype(np.float32))
    f = MacField(dims, comps)
    return project(f, cfg) if do_project else f


def leapfrog_3d_scene(dims: GridDims, cfg: PoissonConfig | None = None) -> MacField:
    """Two coaxial rings staged along x, set to leapfrog down the box."""
    cy = dims.extent[1] / 2.0
    cz = dims.extent[2] / 2.0
    specs = [
        VortexSpec(center=(x, cy, cz), strength=LEAPFROG_STRENGTH,
                   support=RING_MINOR, normal=(1.0, 0.0, 0.0),
                   major_radius=RING_MAJOR, minor_radius=RING_MINOR)
        for x in RING_XS
    ]
    return vortex_ring_3d(dims, specs, cfg=cfg)


# ============================================================
# catalog lookup
# ============================================================


def build_scene(name: str, dims: GridDims,
                cfg: PoissonConfig | None = None,
                **overrides) -> tuple[MacField, CellField | None]:
    """Construct a catalog scene by id; returns (velocity, optional density)."""
    if name == "steady_vortex_2d":
        return steady_vortex_2d(dims, cfg=cfg, **overrides), None
    if name == "leapfrog_2d":
        return leapfrog_2d_scene(dims, cfg=cfg)
    if name == "leapfrog_3d":
        return leapfrog_3d_scene(dims, cfg=cfg), None
    raise ValueError(f"unknown scene {name!r}")
