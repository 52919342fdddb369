"""Pressure projection on the closed Neumann box.

Solves lap(potential) = div(m) on cell centers and subtracts the gradient,
leaving a discretely divergence-free field.  Two interchangeable solvers:

- "dct": cosine-transform diagonalization of the 5/7-point Neumann Laplacian.
  Direct, deterministic, residual at machine precision.  Default.
- "pcg": matrix-free conjugate gradient with a Jacobi preconditioner.
  Kept as the reference iterative path; same contract.

The pure-Neumann system is singular (constants); compatibility is enforced by
subtracting the mean of the right-hand side and the mean of the potential.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.fft import dctn, idctn

from .field_core import CellField, GridDims, MacField, divergence


@dataclass(frozen=True)
class PoissonConfig:
    rel_tol: float = 1e-6        # residual 2-norm vs RHS 2-norm (pcg)
    abs_tol_inf: float = 1e-6    # residual inf-norm target (pcg)
    max_iters: int = 2000
    solver: str = "dct"

    def __post_init__(self):
        if not (0.0 < self.rel_tol < 1.0):
            raise ValueError("rel_tol must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.solver not in ("dct", "pcg"):
            raise ValueError(f"unknown solver {self.solver!r}")


class ProjectionError(RuntimeError):
    """Solver failed to reach tolerance; carries the final residual norm."""

    def __init__(self, residual: float, iters: int):
        super().__init__(f"poisson solve stalled at residual {residual:.3e} after {iters} iterations")
        self.residual = residual
        self.iters = iters


# ============================================================
# solvers
# ============================================================


def _solve_dct(rhs: np.ndarray, dx: float) -> np.ndarray:
    shape = rhs.shape
    spec = dctn(rhs, type=2)
    lam = np.zeros(shape)
    for a, n in enumerate(shape):
        k = np.arange(n)
        lam_a = (2.0 * np.cos(np.pi * k / n) - 2.0) / (dx * dx)
        lam = lam + lam_a.reshape([-1 if i == a else 1 for i in range(len(shape))])
    lam.flat[0] = 1.0  # nullspace mode, numerator forced to zero below
    spec.flat[0] = 0.0
    phi = idctn(spec / lam, type=2)
    return np.ascontiguousarray(phi)


@njit(cache=True)
def _apply_neg_lap_2d(x, out, inv_h2):
    nx, ny = x.shape
    for i in range(nx):
        for j in range(ny):
            acc = 0.0
            diag = 0.0
            if i > 0:
                acc += x[i - 1, j]
                diag += 1.0
            if i < nx - 1:
                acc += x[i + 1, j]
                diag += 1.0
            if j > 0:
                acc += x[i, j - 1]
                diag += 1.0
            if j < ny - 1:
                acc += x[i, j + 1]
                diag += 1.0
            out[i, j] = (diag * x[i, j] - acc) * inv_h2


@njit(cache=True)
def _apply_neg_lap_3d(x, out, inv_h2):
    nx, ny, nz = x.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                acc = 0.0
                diag = 0.0
                if i > 0:
                    acc += x[i - 1, j, k]
                    diag += 1.0
                if i < nx - 1:
                    acc += x[i + 1, j, k]
                    diag += 1.0
                if j > 0:
                    acc += x[i, j - 1, k]
                    diag += 1.0
                if j < ny - 1:
                    acc += x[i, j + 1, k]
                    diag += 1.0
                if k > 0:
                    acc += x[i, j, k - 1]
                    diag += 1.0
                if k < nz - 1:
                    acc += x[i, j, k + 1]
                    diag += 1.0
                out[i, j, k] = (diag * x[i, j, k] - acc) * inv_h2


def _jacobi_diag(shape, dx: float) -> np.ndarray:
    diag = np.zeros(shape)
    for a, n in enumerate(shape):
        counts = np.full(n, 2.0)
        counts[0] = 1.0
        counts[-1] = 1.0
        diag = diag + counts.reshape([-1 if i == a else 1 for i in range(len(shape))])
    return diag / (dx * dx)


def _solve_pcg(rhs: np.ndarray, dx: float, cfg: PoissonConfig) -> np.ndarray:
    # CG on -lap(phi) = -rhs, SPD on the mean-zero subspace
    b = -rhs
    apply_a = _apply_neg_lap_2d if b.ndim == 2 else _apply_neg_lap_3d
    inv_h2 = 1.0 / (dx * dx)
    inv_diag = 1.0 / _jacobi_diag(b.shape, dx)

    x = np.zeros_like(b)
    r = b.copy()
    b_norm = float(np.linalg.norm(b.reshape(-1)))
    if b_norm == 0.0:
        return x
    tol2 = cfg.rel_tol * b_norm

    z = r * inv_diag
    p = z.copy()
    rz = float(np.sum(r * z))
    ap = np.empty_like(b)
    res2 = b_norm
    res_inf = float(np.abs(r).max())
    for it in range(cfg.max_iters):
        if res2 <= tol2 and res_inf <= cfg.abs_tol_inf:
            x -= x.mean()
            return x
        apply_a(p, ap, inv_h2)
        denom = float(np.sum(p * ap))
        if denom == 0.0:
            break
        alpha = rz / denom
        x += alpha * p
        r -= alpha * ap
        r -= r.mean()  # keep iterates in the mean-zero subspace
        res2 = float(np.linalg.norm(r.reshape(-1)))
        res_inf = float(np.abs(r).max())
        z = r * inv_diag
        rz_new = float(np.sum(r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    if res2 <= tol2 and res_inf <= cfg.abs_tol_inf:
        x -= x.mean()
        return x
    raise ProjectionError(res2 / b_norm, cfg.max_iters)


def solve_potential(rhs: CellField, cfg: PoissonConfig | None = None) -> CellField:
    """Solve lap(phi) = rhs with Neumann walls; phi returned mean-free."""
    cfg = cfg or PoissonConfig()
    b = rhs.data.astype(np.float64)
    b = b - b.mean()
    if cfg.solver == "dct":
        phi = _solve_dct(b, rhs.dims.dx)
        phi -= phi.mean()
    else:
        phi = _solve_pcg(b, rhs.dims.dx, cfg)
        phi -= phi.mean()
    return CellField(rhs.dims, phi.astype(np.float32))


# ============================================================
# projection
# ============================================================


def enforce_walls(f: MacField) -> MacField:
    """Zero the normal component on every wall face, in place."""
    for a, c in enumerate(f.comps):
        sl_lo = tuple(0 if i == a else slice(None) for i in range(f.dims.dim))
        sl_hi = tuple(-1 if i == a else slice(None) for i in range(f.dims.dim))
        c[sl_lo] = 0.0
        c[sl_hi] = 0.0
    return f


def _grad_subtract(m: MacField, phi: np.ndarray) -> MacField:
    d = m.dims
    inv = 1.0 / d.dx
    out = []
    for a in range(d.dim):
        c = m.comps[a].astype(np.float64)
        hi = tuple(slice(1, None) if i == a else slice(None) for i in range(d.dim))
        lo = tuple(slice(None, -1) if i == a else slice(None) for i in range(d.dim))
        interior = tuple(slice(1, -1) if i == a else slice(None) for i in range(d.dim))
        c[interior] -= (phi[hi] - phi[lo]) * inv
        out.append(c.astype(np.float32))
    return enforce_walls(MacField(d, out))


_solve_clock = [0.0]    # cumulative wall seconds spent inside project()


def read_projection_clock(reset: bool = False) -> float:
    """Cumulative projection wall time; pass reset=True to zero it."""
    total = _solve_clock[0]
    if reset:
        _solve_clock[0] = 0.0
    return total


def project(m: MacField, cfg: PoissonConfig | None = None) -> MacField:
    """Remove the divergent part of m; walls stay impermeable."""
    tick = time.perf_counter()
    cfg = cfg or PoissonConfig()
    m = enforce_walls(m.copy())
    rhs = divergence(m)
    b = rhs.data.astype(np.float64)
    b -= b.mean()
    if cfg.solver == "dct":
        phi = _solve_dct(b, m.dims.dx)
    else:
        phi = _solve_pcg(b, m.dims.dx, cfg)
    out = _grad_subtract(m, phi)
    _solve_clock[0] += time.perf_counter() - tick
    return out


def project_idempotence_check(u: MacField, cfg: PoissonConfig | None = None) -> float:
    """Max-norm distance between u and project(u) for an already-projected u."""
    v = project(u, cfg)
    return max(float(np.abs(v.comps[a] - u.comps[a]).max()) for a in range(u.dims.dim))
