"""MAC-grid fields, quadratic-kernel interpolation, and derived scalar fields.

Grid conventions: the domain is the closed box [0, nx*dx] x [0, ny*dx] (x [0, nz*dx]
in 3D) with dx = 1 / min(cells), so the shorter edge has unit length.  Velocity
component i lives at the face centers of axis i and has one extra sample along
that axis.  Cell centers sit at (i + 0.5) * dx.

Interpolation uses the quadratic kernel with support 1.5 cells.  Near walls the
stencil drops out-of-range samples and renormalizes; the derivative weights are
differentiated through the renormalization, so the reported Jacobian is the true
derivative of the clamped interpolant everywhere (constants keep zero gradient
right up to the wall).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class GridDims:
    """Cell counts per axis plus the spacing derived from them."""

    cells: tuple[int, ...]
    dx: float

    @classmethod
    def of(cls, *cells: int) -> "GridDims":
        cells = tuple(int(c) for c in cells)
        if len(cells) not in (2, 3):
            raise ValueError(f"only 2D/3D grids supported, got {len(cells)} axes")
        if any(c < 4 for c in cells):
            raise ValueError(f"all axis counts must be >= 4, got {cells}")
        return cls(cells, 1.0 / min(cells))

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def extent(self) -> tuple[float, ...]:
        return tuple(c * self.dx for c in self.cells)

    def comp_shape(self, axis: int) -> tuple[int, ...]:
        return tuple(c + (1 if a == axis else 0) for a, c in enumerate(self.cells))

    def face_count(self, axis: int) -> int:
        n = 1
        for c in self.comp_shape(axis):
            n *= c
        return n


@dataclass
class MacField:
    """Staggered vector field: one face-centered array per axis."""

    dims: GridDims
    comps: list[np.ndarray]

    @classmethod
    def zeros(cls, dims: GridDims) -> "MacField":
        return cls(dims, [np.zeros(dims.comp_shape(a), dtype=np.float32) for a in range(dims.dim)])

    @classmethod
    def from_arrays(cls, dims: GridDims, comps) -> "MacField":
        out = [np.ascontiguousarray(c, dtype=np.float32) for c in comps]
        for a, c in enumerate(out):
            if c.shape != dims.comp_shape(a):
                raise ValueError(f"component {a} has shape {c.shape}, expected {dims.comp_shape(a)}")
        return cls(dims, out)

    def copy(self) -> "MacField":
        return MacField(self.dims, [c.copy() for c in self.comps])

    def max_speed(self) -> float:
        return max(float(np.max(np.abs(c))) if c.size else 0.0 for c in self.comps)


@dataclass
class CellField:
    """Cell-centered scalar field."""

    dims: GridDims
    data: np.ndarray

    @classmethod
    def zeros(cls, dims: GridDims) -> "CellField":
        return cls(dims, np.zeros(dims.cells, dtype=np.float32))

    @classmethod
    def from_array(cls, dims: GridDims, data) -> "CellField":
        data = np.ascontiguousarray(data, dtype=np.float32)
        if data.shape != dims.cells:
            raise ValueError(f"cell array has shape {data.shape}, expected {dims.cells}")
        return cls(dims, data)

    def copy(self) -> "CellField":
        return CellField(self.dims, self.data.copy())


def kernel_quadratic(r):
    """Quadratic interpolation kernel N(r), support |r| < 1.5 (cell units)."""
    r = np.abs(np.asarray(r, dtype=np.float64))
    out = np.where(r < 0.5, 0.75 - r * r, np.where(r < 1.5, 0.5 * (1.5 - r) ** 2, 0.0))
    return float(out) if out.ndim == 0 else out


def face_centers(dims: GridDims, axis: int) -> np.ndarray:
    """Coordinates of all face centers of one axis, flattened C-order, (N, dim)."""
    axes = []
    for a, n in enumerate(dims.comp_shape(axis)):
        if a == axis:
            axes.append(np.arange(n, dtype=np.float64) * dims.dx)
        else:
            axes.append((np.arange(n, dtype=np.float64) + 0.5) * dims.dx)
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=-1)


def cell_centers(dims: GridDims) -> np.ndarray:
    axes = [(np.arange(n, dtype=np.float64) + 0.5) * dims.dx for n in dims.cells]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=-1)


# ============================================================
# numba kernels
# ============================================================


@njit(cache=True, inline="always")
def _stencil(x, n):
    """3-point quadratic stencil at lattice coordinate x over n samples.

    Returns clamped indices, renormalized value weights, and derivative weights
    differentiated through the renormalization (quotient rule).
    """
    c = int(np.floor(x + 0.5))
    f = x - c
    w0 = 0.5 * (0.5 - f) * (0.5 - f)
    w1 = 0.75 - f * f
    w2 = 0.5 * (0.5 + f) * (0.5 + f)
    d0 = f - 0.5
    d1 = -2.0 * f
    d2 = f + 0.5
    i0 = c - 1
    i1 = c
    i2 = c + 1
    if i0 < 0 or i0 >= n:
        w0 = 0.0
        d0 = 0.0
        i0 = 0
    if i1 < 0 or i1 >= n:
        w1 = 0.0
        d1 = 0.0
        i1 = 0
    if i2 < 0 or i2 >= n:
        w2 = 0.0
        d2 = 0.0
        i2 = n - 1
    s = w0 + w1 + w2
    ds = d0 + d1 + d2
    inv = 1.0 / s
    q = ds * inv * inv
    return i0, i1, i2, w0 * inv, w1 * inv, w2 * inv, d0 * inv - w0 * q, d1 * inv - w1 * q, d2 * inv - w2 * q


@njit(cache=True, inline="always")
def _samp2(a, lx, ly):
    i0, i1, i2, u0, u1, u2, _, _, _ = _stencil(lx, a.shape[0])
    j0, j1, j2, v0, v1, v2, _, _, _ = _stencil(ly, a.shape[1])
    return (u0 * (v0 * a[i0, j0] + v1 * a[i0, j1] + v2 * a[i0, j2])
            + u1 * (v0 * a[i1, j0] + v1 * a[i1, j1] + v2 * a[i1, j2])
            + u2 * (v0 * a[i2, j0] + v1 * a[i2, j1] + v2 * a[i2, j2]))


@njit(cache=True, inline="always")
def _samp2_grad(a, lx, ly):
    """Value and lattice-unit partials of the clamped quadratic interpolant."""
    i0, i1, i2, u0, u1, u2, du0, du1, du2 = _stencil(lx, a.shape[0])
    j0, j1, j2, v0, v1, v2, dv0, dv1, dv2 = _stencil(ly, a.shape[1])
    r0 = v0 * a[i0, j0] + v1 * a[i0, j1] + v2 * a[i0, j2]
    r1 = v0 * a[i1, j0] + v1 * a[i1, j1] + v2 * a[i1, j2]
    r2 = v0 * a[i2, j0] + v1 * a[i2, j1] + v2 * a[i2, j2]
    s0 = dv0 * a[i0, j0] + dv1 * a[i0, j1] + dv2 * a[i0, j2]
    s1 = dv0 * a[i1, j0] + dv1 * a[i1, j1] + dv2 * a[i1, j2]
    s2 = dv0 * a[i2, j0] + dv1 * a[i2, j1] + dv2 * a[i2, j2]
    val = u0 * r0 + u1 * r1 + u2 * r2
    gx = du0 * r0 + du1 * r1 + du2 * r2
    gy = u0 * s0 + u1 * s1 + u2 * s2
    return val, gx, gy


@njit(cache=True, inline="always")
def _samp3(a, lx, ly, lz):
    i0, i1, i2, u0, u1, u2, _, _, _ = _stencil(lx, a.shape[0])
    j0, j1, j2, v0, v1, v2, _, _, _ = _stencil(ly, a.shape[1])
    k0, k1, k2, w0, w1, w2, _, _, _ = _stencil(lz, a.shape[2])
    out = 0.0
    for ii in range(3):
        i = i0 if ii == 0 else (i1 if ii == 1 else i2)
        wu = u0 if ii == 0 else (u1 if ii == 1 else u2)
        for jj in range(3):
            j = j0 if jj == 0 else (j1 if jj == 1 else j2)
            wv = v0 if jj == 0 else (v1 if jj == 1 else v2)
            out += wu * wv * (w0 * a[i, j, k0] + w1 * a[i, j, k1] + w2 * a[i, j, k2])
    return out


@njit(cache=True, inline="always")
def _samp3_grad(a, lx, ly, lz):
    i0, i1, i2, u0, u1, u2, du0, du1, du2 = _stencil(lx, a.shape[0])
    j0, j1, j2, v0, v1, v2, dv0, dv1, dv2 = _stencil(ly, a.shape[1])
    k0, k1, k2, w0, w1, w2, dw0, dw1, dw2 = _stencil(lz, a.shape[2])
    val = 0.0
    gx = 0.0
    gy = 0.0
    gz = 0.0
    for ii in range(3):
        i = i0 if ii == 0 else (i1 if ii == 1 else i2)
        wu = u0 if ii == 0 else (u1 if ii == 1 else u2)
        du = du0 if ii == 0 else (du1 if ii == 1 else du2)
        for jj in range(3):
            j = j0 if jj == 0 else (j1 if jj == 1 else j2)
            wv = v0 if jj == 0 else (v1 if jj == 1 else v2)
            dv = dv0 if jj == 0 else (dv1 if jj == 1 else dv2)
            r = w0 * a[i, j, k0] + w1 * a[i, j, k1] + w2 * a[i, j, k2]
            s = dw0 * a[i, j, k0] + dw1 * a[i, j, k1] + dw2 * a[i, j, k2]
            val += wu * wv * r
            gx += du * wv * r
            gy += wu * dv * r
            gz += wu * wv * s
    return val, gx, gy, gz


@njit(cache=True, inline="always")
def _clamp2(px, py, ex, ey):
    x = px
    y = py
    if x < 0.0:
        x = 0.0
    elif x > ex:
        x = ex
    if y < 0.0:
        y = 0.0
    elif y > ey:
        y = ey
    return x, y


@njit(cache=True, inline="always")
def _clamp3(px, py, pz, ex, ey, ez):
    x = px
    y = py
    z = pz
    if x < 0.0:
        x = 0.0
    elif x > ex:
        x = ex
    if y < 0.0:
        y = 0.0
    elif y > ey:
        y = ey
    if z < 0.0:
        z = 0.0
    elif z > ez:
        z = ez
    return x, y, z


@njit(cache=True, inline="always")
def _vel2(u, v, dx, ex, ey, px, py):
    x, y = _clamp2(px, py, ex, ey)
    il = 1.0 / dx
    uu = _samp2(u, x * il, y * il - 0.5)
    vv = _samp2(v, x * il - 0.5, y * il)
    return uu, vv


@njit(cache=True, inline="always")
def _vel2_grad(u, v, dx, ex, ey, px, py):
    """Velocity and physical-unit Jacobian (g_ab = d u_a / d x_b)."""
    x, y = _clamp2(px, py, ex, ey)
    il = 1.0 / dx
    uu, ux, uy = _samp2_grad(u, x * il, y * il - 0.5)
    vv, vx, vy = _samp2_grad(v, x * il - 0.5, y * il)
    return uu, vv, ux * il, uy * il, vx * il, vy * il


@njit(cache=True, inline="always")
def _vel3(u, v, w, dx, ex, ey, ez, px, py, pz):
    x, y, z = _clamp3(px, py, pz, ex, ey, ez)
    il = 1.0 / dx
    uu = _samp3(u, x * il, y * il - 0.5, z * il - 0.5)
    vv = _samp3(v, x * il - 0.5, y * il, z * il - 0.5)
    ww = _samp3(w, x * il - 0.5, y * il - 0.5, z * il)
    return uu, vv, ww


@njit(cache=True, inline="always")
def _vel3_grad(u, v, w, dx, ex, ey, ez, px, py, pz):
    x, y, z = _clamp3(px, py, pz, ex, ey, ez)
    il = 1.0 / dx
    uu, ux, uy, uz = _samp3_grad(u, x * il, y * il - 0.5, z * il - 0.5)
    vv, vx, vy, vz = _samp3_grad(v, x * il - 0.5, y * il, z * il - 0.5)
    ww, wx, wy, wz = _samp3_grad(w, x * il - 0.5, y * il - 0.5, z * il)
    return uu, vv, ww, ux * il, uy * il, uz * il, vx * il, vy * il, vz * il, wx * il, wy * il, wz * il


@njit(cache=True)
def _vel2_many(u, v, dx, ex, ey, pts, out):
    for k in range(pts.shape[0]):
        out[k, 0], out[k, 1] = _vel2(u, v, dx, ex, ey, pts[k, 0], pts[k, 1])


@njit(cache=True)
def _vel3_many(u, v, w, dx, ex, ey, ez, pts, out):
    for k in range(pts.shape[0]):
        out[k, 0], out[k, 1], out[k, 2] = _vel3(u, v, w, dx, ex, ey, ez, pts[k, 0], pts[k, 1], pts[k, 2])


@njit(cache=True)
def _vel2_jac_many(u, v, dx, ex, ey, pts, vel, jac):
    for k in range(pts.shape[0]):
        uu, vv, a, b, c, d = _vel2_grad(u, v, dx, ex, ey, pts[k, 0], pts[k, 1])
        vel[k, 0] = uu
        vel[k, 1] = vv
        jac[k, 0, 0] = a
        jac[k, 0, 1] = b
        jac[k, 1, 0] = c
        jac[k, 1, 1] = d


@njit(cache=True)
def _vel3_jac_many(u, v, w, dx, ex, ey, ez, pts, vel, jac):
    for k in range(pts.shape[0]):
        r = _vel3_grad(u, v, w, dx, ex, ey, ez, pts[k, 0], pts[k, 1], pts[k, 2])
        vel[k, 0] = r[0]
        vel[k, 1] = r[1]
        vel[k, 2] = r[2]
        jac[k, 0, 0] = r[3]
        jac[k, 0, 1] = r[4]
        jac[k, 0, 2] = r[5]
        jac[k, 1, 0] = r[6]
        jac[k, 1, 1] = r[7]
        jac[k, 1, 2] = r[8]
        jac[k, 2, 0] = r[9]
        jac[k, 2, 1] = r[10]
        jac[k, 2, 2] = r[11]


@njit(cache=True)
def _sizing2(u, v, dx, ex, ey, out):
    nx, ny = out.shape
    for i in range(nx):
        for j in range(ny):
            px = (i + 0.5) * dx
            py = (j + 0.5) * dx
            _, _, a, b, c, d = _vel2_grad(u, v, dx, ex, ey, px, py)
            out[i, j] = np.sqrt(a * a + b * b + c * c + d * d)


@njit(cache=True)
def _sizing3(u, v, w, dx, ex, ey, ez, out):
    nx, ny, nz = out.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                r = _vel3_grad(u, v, w, dx, ex, ey, ez, (i + 0.5) * dx, (j + 0.5) * dx, (k + 0.5) * dx)
                acc = 0.0
                for t in range(3, 12):
                    acc += r[t] * r[t]
                out[i, j, k] = np.sqrt(acc)


@njit(cache=True)
def _dilate2(s, iters):
    a = s.copy()
    b = s.copy()
    nx, ny = s.shape
    for _ in range(iters):
        changed = False
        for i in range(nx):
            for j in range(ny):
                acc = 0.0
                if i > 0:
                    acc += a[i - 1, j]
                if i < nx - 1:
                    acc += a[i + 1, j]
                if j > 0:
                    acc += a[i, j - 1]
                if j < ny - 1:
                    acc += a[i, j + 1]
                v = np.float32(0.25 * acc)
                if v < a[i, j]:
                    v = a[i, j]
                b[i, j] = v
                if v != a[i, j]:
                    changed = True
        t = a
        a = b
        b = t
        if not changed:
            break
    return a


@njit(cache=True)
def _dilate3(s, iters):
    # 1/6 per neighbor keeps the relaxation contractive in 3D
    a = s.copy()
    b = s.copy()
    nx, ny, nz = s.shape
    for _ in range(iters):
        changed = False
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    acc = 0.0
                    if i > 0:
                        acc += a[i - 1, j, k]
                    if i < nx - 1:
                        acc += a[i + 1, j, k]
                    if j > 0:
                        acc += a[i, j - 1, k]
                    if j < ny - 1:
                        acc += a[i, j + 1, k]
                    if k > 0:
                        acc += a[i, j, k - 1]
                    if k < nz - 1:
                        acc += a[i, j, k + 1]
                    v = np.float32(acc / 6.0)
                    if v < a[i, j, k]:
                        v = a[i, j, k]
                    b[i, j, k] = v
                    if v != a[i, j, k]:
                        changed = True
            # no early exit mid-sweep; full pass keeps the update well defined
        t = a
        a = b
        b = t
        if not changed:
            break
    return a


@njit(cache=True)
def _div2(u, v, dx, out):
    nx, ny = out.shape
    il = 1.0 / dx
    for i in range(nx):
        for j in range(ny):
            out[i, j] = (u[i + 1, j] - u[i, j] + v[i, j + 1] - v[i, j]) * il


@njit(cache=True)
def _div3(u, v, w, dx, out):
    nx, ny, nz = out.shape
    il = 1.0 / dx
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                out[i, j, k] = (u[i + 1, j, k] - u[i, j, k]
                                + v[i, j + 1, k] - v[i, j, k]
                                + w[i, j, k + 1] - w[i, j, k]) * il


@njit(cache=True)
def _vort2(u, v, dx, out):
    # node curl averaged to cell centers; one-sided differences at walls
    nx, ny = out.shape
    il = 1.0 / dx
    node = np.empty((nx + 1, ny + 1), dtype=np.float64)
    for i in range(nx + 1):
        ilo = i - 1
        ihi = i
        if ilo < 0:
            ilo = 0
            ihi = 1
        if ihi > nx - 1:
            ihi = nx - 1
            ilo = nx - 2
        span = il / (ihi - ilo)
        for j in range(ny + 1):
            jlo = j - 1
            jhi = j
            if jlo < 0:
                jlo = 0
                jhi = 1
            if jhi > ny - 1:
                jhi = ny - 1
                jlo = ny - 2
            dvdx = (v[ihi, j] - v[ilo, j]) * span
            dudy = (u[i, jhi] - u[i, jlo]) * il / (jhi - jlo)
            node[i, j] = dvdx - dudy
    for i in range(nx):
        for j in range(ny):
            out[i, j] = 0.25 * (node[i, j] + node[i + 1, j] + node[i, j + 1] + node[i + 1, j + 1])


@njit(cache=True)
def _scal2_many(a, dx, ex, ey, pts, out):
    il = 1.0 / dx
    for k in range(pts.shape[0]):
        x, y = _clamp2(pts[k, 0], pts[k, 1], ex, ey)
        out[k] = _samp2(a, x * il - 0.5, y * il - 0.5)


@njit(cache=True)
def _scal3_many(a, dx, ex, ey, ez, pts, out):
    il = 1.0 / dx
    for k in range(pts.shape[0]):
        x, y, z = _clamp3(pts[k, 0], pts[k, 1], pts[k, 2], ex, ey, ez)
        out[k] = _samp3(a, x * il - 0.5, y * il - 0.5, z * il - 0.5)


@njit(cache=True)
def _face2_many(a, dx, ex, ey, ox, oy, pts, out):
    il = 1.0 / dx
    for k in range(pts.shape[0]):
        x, y = _clamp2(pts[k, 0], pts[k, 1], ex, ey)
        out[k] = _samp2(a, x * il - ox, y * il - oy)


@njit(cache=True)
def _face3_many(a, dx, ex, ey, ez, ox, oy, oz, pts, out):
    il = 1.0 / dx
    for k in range(pts.shape[0]):
        x, y, z = _clamp3(pts[k, 0], pts[k, 1], pts[k, 2], ex, ey, ez)
        out[k] = _samp3(a, x * il - ox, y * il - oy, z * il - oz)


# ============================================================
# public operations
# ============================================================


def _check_point(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"non-finite sample position {p}")
    return p


def interp_velocity(f: MacField, p) -> np.ndarray:
    """Velocity vector at p by quadratic-kernel interpolation of each component."""
    p = _check_point(p)
    d = f.dims
    if d.dim == 2:
        return np.array(_vel2(f.comps[0], f.comps[1], d.dx, *d.extent, p[0], p[1]))
    return np.array(_vel3(f.comps[0], f.comps[1], f.comps[2], d.dx, *d.extent, p[0], p[1], p[2]))


def interp_velocity_jacobian(f: MacField, p):
    """Velocity and its analytic Jacobian (d u_a / d x_b) at p."""
    p = _check_point(p)
    d = f.dims
    if d.dim == 2:
        uu, vv, a, b, c, e = _vel2_grad(f.comps[0], f.comps[1], d.dx, *d.extent, p[0], p[1])
        return np.array([uu, vv]), np.array([[a, b], [c, e]])
    r = _vel3_grad(f.comps[0], f.comps[1], f.comps[2], d.dx, *d.extent, p[0], p[1], p[2])
    return np.array(r[:3]), np.array(r[3:]).reshape(3, 3)


def interp_velocity_many(f: MacField, pts: np.ndarray) -> np.ndarray:
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    out = np.empty_like(pts)
    d = f.dims
    if d.dim == 2:
        _vel2_many(f.comps[0], f.comps[1], d.dx, *d.extent, pts, out)
    else:
        _vel3_many(f.comps[0], f.comps[1], f.comps[2], d.dx, *d.extent, pts, out)
    return out


def interp_velocity_jacobian_many(f: MacField, pts: np.ndarray):
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    n, d = pts.shape
    vel = np.empty((n, d))
    jac = np.empty((n, d, d))
    if d == 2:
        _vel2_jac_many(f.comps[0], f.comps[1], f.dims.dx, *f.dims.extent, pts, vel, jac)
    else:
        _vel3_jac_many(f.comps[0], f.comps[1], f.comps[2], f.dims.dx, *f.dims.extent, pts, vel, jac)
    return vel, jac


def compute_sizing(f: MacField) -> CellField:
    """Frobenius norm of the velocity Jacobian at every cell center."""
    d = f.dims
    out = np.empty(d.cells, dtype=np.float32)
    if d.dim == 2:
        _sizing2(f.comps[0], f.comps[1], d.dx, *d.extent, out)
    else:
        _sizing3(f.comps[0], f.comps[1], f.comps[2], d.dx, *d.extent, out)
    return CellField(d, out)


def dilate_sizing(S: CellField, iters: int = 1024) -> CellField:
    """Relax S <- max(S, mean of axis neighbors) for `iters` sweeps.

    Missing wall neighbors contribute zero.  The sweep stops early once a pass
    changes nothing, which is exact: the update is monotone and pointwise
    non-decreasing, so the first unchanged pass is the fixed point.
    """
    if iters < 0:
        raise ValueError("iters must be >= 0")
    if iters == 0:
        return S.copy()
    fn = _dilate2 if S.dims.dim == 2 else _dilate3
    return CellField(S.dims, fn(S.data, iters))


def divergence(f: MacField) -> CellField:
    d = f.dims
    out = np.empty(d.cells, dtype=np.float32)
    if d.dim == 2:
        _div2(f.comps[0], f.comps[1], d.dx, out)
    else:
        _div3(f.comps[0], f.comps[1], f.comps[2], d.dx, out)
    return CellField(d, out)


def vorticity(f: MacField):
    """Scalar curl at cell centers (2D) or a 3-vector per node (3D)."""
    d = f.dims
    if d.dim == 2:
        out = np.empty(d.cells, dtype=np.float32)
        _vort2(f.comps[0], f.comps[1], d.dx, out)
        return CellField(d, out)
    return _vorticity3(f)


def _vorticity3(f: MacField) -> np.ndarray:
    """Curl sampled on the (nx+1, ny+1, nz+1) node lattice; diagnostics only."""
    u, v, w = (c.astype(np.float64) for c in f.comps)
    dx = f.dims.dx
    nx, ny, nz = f.dims.cells

    def node_diff(a, axis):
        # derivative of a face-centered series at node positions; ends replicate
        d = np.diff(a, axis=axis) / dx
        first = np.take(d, [0], axis=axis)
        last = np.take(d, [-1], axis=axis)
        return np.concatenate([first, d, last], axis=axis)

    def to_nodes(a, axis):
        # face-centered series averaged to node positions; ends clamp
        n = a.shape[axis]
        mid = 0.5 * (np.take(a, range(0, n - 1), axis=axis) + np.take(a, range(1, n), axis=axis))
        first = np.take(a, [0], axis=axis)
        last = np.take(a, [-1], axis=axis)
        return np.concatenate([first, mid, last], axis=axis)

    out = np.empty((nx + 1, ny + 1, nz + 1, 3), dtype=np.float32)
    out[..., 0] = to_nodes(node_diff(w, 1), 0) - to_nodes(node_diff(v, 2), 0)
    out[..., 1] = to_nodes(node_diff(u, 2), 1) - to_nodes(node_diff(w, 0), 1)
    out[..., 2] = to_nodes(node_diff(v, 0), 2) - to_nodes(node_diff(u, 1), 2)
    return out


def interp_scalar(s: CellField, p) -> float:
    p = _check_point(p)
    out = np.empty(1)
    d = s.dims
    if d.dim == 2:
        _scal2_many(s.data, d.dx, *d.extent, p.reshape(1, -1), out)
    else:
        _scal3_many(s.data, d.dx, *d.extent, p.reshape(1, -1), out)
    return float(out[0])


def interp_scalar_many(s: CellField, pts: np.ndarray) -> np.ndarray:
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    out = np.empty(pts.shape[0])
    d = s.dims
    if d.dim == 2:
        _scal2_many(s.data, d.dx, *d.extent, pts, out)
    else:
        _scal3_many(s.data, d.dx, *d.extent, pts, out)
    return out


def interp_face_scalar_many(dims: GridDims, axis: int, arr: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Sample a scalar stored on axis-`axis` face centers at many points."""
    if arr.shape != dims.comp_shape(axis):
        raise ValueError(f"array shape {arr.shape} does not match axis {axis} faces")
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    out = np.empty(pts.shape[0])
    off = tuple(0.0 if i == axis else 0.5 for i in range(dims.dim))
    arr = np.ascontiguousarray(arr)
    if dims.dim == 2:
        _face2_many(arr, dims.dx, *dims.extent, *off, pts, out)
    else:
        _face3_many(arr, dims.dx, *dims.extent, *off, pts, out)
    return out
