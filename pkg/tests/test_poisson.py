"""Pressure solve and projection tests.

The projection is checked against a dense least-squares solve of the same
Neumann system on a small grid, then the contract invariants (divergence
bound, idempotence, orthogonality of the removed part) are exercised on
larger random fields with both solver backends.
"""
import numpy as np
import pytest

from nfmlab.field_core import CellField, GridDims, MacField, divergence
from nfmlab.poisson import (
    PoissonConfig,
    ProjectionError,
    enforce_walls,
    project,
    project_idempotence_check,
    solve_potential,
)

from helpers import random_mac, solenoidal_mac_2d

DIV_TOL = 1e-5
SOLVERS = ["dct", "pcg"]


# ============================================================
# dense oracle
# ============================================================


def dense_neumann_laplacian(cells, dx):
    """Row-major matrix of the cell-centered 5/7-point Neumann Laplacian."""
    shape = tuple(cells)
    n = int(np.prod(shape))
    idx = np.arange(n).reshape(shape)
    lap = np.zeros((n, n))
    inv_h2 = 1.0 / (dx * dx)
    for cell in np.ndindex(shape):
        row = idx[cell]
        for a in range(len(shape)):
            for step in (-1, 1):
                nb = list(cell)
                nb[a] += step
                if 0 <= nb[a] < shape[a]:
                    lap[row, idx[tuple(nb)]] += inv_h2
                    lap[row, row] -= inv_h2
    return lap


def dense_project(m):
    """Reference projection: lstsq potential, central gradient subtraction."""
    m = enforce_walls(m.copy())
    dims = m.dims
    rhs = divergence(m).data.astype(np.float64)
    rhs -= rhs.mean()
    lap = dense_neumann_laplacian(dims.cells, dims.dx)
    phi = np.linalg.lstsq(lap, rhs.ravel(), rcond=None)[0].reshape(dims.cells)
    out = []
    for a in range(dims.dim):
        c = m.comps[a].astype(np.float64)
        hi = tuple(slice(1, None) if i == a else slice(None) for i in range(dims.dim))
        lo = tuple(slice(None, -1) if i == a else slice(None) for i in range(dims.dim))
        interior = tuple(slice(1, -1) if i == a else slice(None) for i in range(dims.dim))
        c[interior] -= (phi[hi] - phi[lo]) / dims.dx
        out.append(c)
    for a, c in enumerate(out):
        sl_lo = tuple(0 if i == a else slice(None) for i in range(dims.dim))
        sl_hi = tuple(-1 if i == a else slice(None) for i in range(dims.dim))
        c[sl_lo] = 0.0
        c[sl_hi] = 0.0
    return out


# ============================================================
# solver correctness
# ============================================================


class TestAgainstDenseSolve:
    @pytest.mark.parametrize("solver", SOLVERS)
    def test_projection_matches_dense_8x8(self, solver):
        dims = GridDims.of(8, 8)
        rng = np.random.default_rng(7)
        m = random_mac(dims, rng, amp=1.0)
        ref = dense_project(m)
        got = project(m, PoissonConfig(solver=solver))
        for a in range(2):
            assert np.abs(got.comps[a] - ref[a]).max() < 1e-5

    @pytest.mark.parametrize("solver", SOLVERS)
    def test_projection_matches_dense_6x6x6(self, solver):
        dims = GridDims.of(6, 6, 6)
        rng = np.random.default_rng(8)
        m = random_mac(dims, rng, amp=1.0)
        ref = dense_project(m)
        got = project(m, PoissonConfig(solver=solver))
        for a in range(3):
            assert np.abs(got.comps[a] - ref[a]).max() < 1e-5

    @pytest.mark.parametrize("solver", SOLVERS)
    def test_potential_matches_dense(self, solver):
        dims = GridDims.of(8, 8)
        rng = np.random.default_rng(9)
        b = rng.normal(size=dims.cells)
        b -= b.mean()
        lap = dense_neumann_laplacian(dims.cells, dims.dx)
        ref = np.linalg.lstsq(lap, b.ravel(), rcond=None)[0].reshape(dims.cells)
        ref -= ref.mean()
        got = solve_potential(CellField(dims, b.astype(np.float32)), PoissonConfig(solver=solver))
        assert abs(float(got.data.mean())) < 1e-6
        assert np.abs(got.data - ref).max() < 1e-4

    def test_solvers_agree(self):
        dims = GridDims.of(32, 24)
        rng = np.random.default_rng(10)
        m = random_mac(dims, rng, amp=0.5)
        a = project(m, PoissonConfig(solver="dct"))
        b = project(m, PoissonConfig(solver="pcg"))
        for k in range(2):
            assert np.abs(a.comps[k] - b.comps[k]).max() < 1e-5


# ============================================================
# contract invariants
# ============================================================


class TestProjectionInvariants:
    @pytest.mark.parametrize("solver", SOLVERS)
    def test_divergence_bound_2d(self, solver):
        dims = GridDims.of(64, 64)
        rng = np.random.default_rng(11)
        u = project(random_mac(dims, rng, amp=0.25), PoissonConfig(solver=solver))
        assert np.abs(divergence(u).data).max() <= DIV_TOL

    def test_divergence_bound_3d(self):
        dims = GridDims.of(16, 16, 16)
        rng = np.random.default_rng(12)
        u = project(random_mac(dims, rng, amp=0.25))
        assert np.abs(divergence(u).data).max() <= DIV_TOL

    @pytest.mark.parametrize("solver", SOLVERS)
    def test_idempotent(self, solver):
        dims = GridDims.of(64, 64)
        rng = np.random.default_rng(13)
        cfg = PoissonConfig(solver=solver)
        u = project(random_mac(dims, rng, amp=0.25), cfg)
        assert project_idempotence_check(u, cfg) <= 10 * DIV_TOL

    def test_removed_part_orthogonal(self):
        # The subtracted gradient is L2-orthogonal to the solenoidal result.
        dims = GridDims.of(48, 48)
        rng = np.random.default_rng(14)
        m = enforce_walls(random_mac(dims, rng, amp=0.5))
        u = project(m)
        dot = norm_u = norm_g = 0.0
        for a in range(2):
            g = m.comps[a].astype(np.float64) - u.comps[a].astype(np.float64)
            w = u.comps[a].astype(np.float64)
            dot += float((w * g).sum())
            norm_u += float((w * w).sum())
            norm_g += float((g * g).sum())
        assert abs(dot) <= 1e-6 * np.sqrt(norm_u) * np.sqrt(norm_g)

    def test_pure_gradient_removed_entirely(self):
        # Face samples of grad(x^2 + y^2) are an exact discrete gradient,
        # so nothing should survive the projection.
        dims = GridDims.of(8, 8)
        comps = []
        for a in range(2):
            shape = dims.comp_shape(a)
            coord = (np.arange(shape[a]) * dims.dx).astype(np.float64)
            expand = tuple(slice(None) if i == a else None for i in range(2))
            comps.append(np.broadcast_to(2.0 * coord[expand], shape).astype(np.float32).copy())
        u = project(MacField(dims, comps))
        assert max(np.abs(c).max() for c in u.comps) <= DIV_TOL

    @pytest.mark.parametrize("solver", SOLVERS)
    def test_solenoidal_field_unchanged(self, solver):
        dims = GridDims.of(48, 48)
        rng = np.random.default_rng(15)
        u = solenoidal_mac_2d(dims, rng, amp=0.5)
        v = project(u, PoissonConfig(solver=solver))
        for a in range(2):
            assert np.abs(v.comps[a] - u.comps[a]).max() <= DIV_TOL

    def test_zero_maps_to_zero(self):
        dims = GridDims.of(16, 16)
        u = project(MacField.zeros(dims))
        assert all(np.all(c == 0.0) for c in u.comps)

    def test_input_not_mutated(self):
        dims = GridDims.of(16, 16)
        rng = np.random.default_rng(16)
        m = random_mac(dims, rng, amp=1.0)
        before = [c.copy() for c in m.comps]
        project(m)
        for a in range(2):
            assert np.array_equal(m.comps[a], before[a])

    def test_wall_faces_zeroed(self):
        dims = GridDims.of(16, 12)
        rng = np.random.default_rng(17)
        u = project(random_mac(dims, rng, amp=1.0))
        assert np.all(u.comps[0][0, :] == 0.0) and np.all(u.comps[0][-1, :] == 0.0)
        assert np.all(u.comps[1][:, 0] == 0.0) and np.all(u.comps[1][:, -1] == 0.0)


# ============================================================
# failure and config handling
# ============================================================


class TestSolverControl:
    def test_pcg_raises_when_starved(self):
        dims = GridDims.of(32, 32)
        rng = np.random.default_rng(18)
        m = random_mac(dims, rng, amp=1.0)
        with pytest.raises(ProjectionError) as err:
            project(m, PoissonConfig(solver="pcg", max_iters=2))
        assert err.value.residual > 0.0
        assert err.value.iters == 2

    def test_config_rejects_bad_values(self):
        with pytest.raises(ValueError):
            PoissonConfig(rel_tol=0.0)
        with pytest.raises(ValueError):
            PoissonConfig(rel_tol=2.0)
        with pytest.raises(ValueError):
            PoissonConfig(max_iters=0)
        with pytest.raises(ValueError):
            PoissonConfig(solver="multigrid")
