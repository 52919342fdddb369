"""Flow-map marching and consistency-diagnostic tests.

Linear velocity fields are the workhorse here: quadratic interpolation
reproduces them exactly away from walls, so the marched maps can be
checked against closed-form matrix oracles instead of loose tolerances.
"""
import numpy as np
import pytest
from scipy.linalg import expm

from nfmlab.field_core import GridDims, MacField, face_centers
from nfmlab.flowmap import (
    MapField,
    assemble_jacobian_at_cells,
    backward_march,
    eval_map,
    jacobian_consistency_error,
    map_positions_at_cells,
    marched_consistency,
    reset_identity,
    roundtrip_error,
    rk4_step,
    sl_backward_map_step,
)

from helpers import algebraic_vortex_fns, mac_from_function, mollified_rotation_2d


def constant_field(dims, vec):
    return mac_from_function(dims, [
        (lambda p, c=c: np.full(len(p), c)) for c in vec
    ])


def linear_field_2d(dims, a_mat, center=(0.5, 0.5)):
    cx, cy = center

    def fu(p):
        return a_mat[0, 0] * (p[:, 0] - cx) + a_mat[0, 1] * (p[:, 1] - cy)

    def fv(p):
        return a_mat[1, 0] * (p[:, 0] - cx) + a_mat[1, 1] * (p[:, 1] - cy)

    return mac_from_function(dims, [fu, fv])


def rk4_amplification(a_mat, dt):
    """One-step RK4 transfer matrix for dx/dt = A x."""
    z = a_mat * dt
    m = np.eye(a_mat.shape[0])
    out = np.eye(a_mat.shape[0])
    fact = 1.0
    for k in range(1, 5):
        m = m @ z
        fact *= k
        out = out + m / fact
    return out


def interior_mask(m, axis, radius=0.25):
    base = face_centers(m.dims, axis)
    center = np.array(m.dims.extent) / 2.0
    return np.sqrt(((base - center) ** 2).sum(axis=1)) < radius


# ============================================================
# identity state
# ============================================================


class TestResetIdentity:
    def test_positions_and_columns(self):
        dims = GridDims.of(8, 6)
        m = MapField.identity(dims)
        for a in range(2):
            assert np.array_equal(m.pos[a], face_centers(dims, a))
            expect = np.zeros((m.pos[a].shape[0], 2))
            expect[:, a] = 1.0
            assert np.array_equal(m.col[a], expect)

    def test_reset_idempotent(self):
        dims = GridDims.of(8, 8)
        m = MapField.identity(dims)
        rk4_step(m, mollified_rotation_2d(dims), 0.1)
        reset_identity(m)
        once = m.copy()
        reset_identity(m)
        for a in range(2):
            assert np.array_equal(m.pos[a], once.pos[a])
            assert np.array_equal(m.col[a], once.col[a])

    def test_identity_diagnostics_vanish(self):
        dims = GridDims.of(12, 12)
        fwd, bwd = MapField.identity(dims), MapField.identity(dims)
        assert roundtrip_error(fwd, bwd) == 0.0
        assert jacobian_consistency_error(fwd, bwd) <= 1e-12

    def test_identity_3d(self):
        dims = GridDims.of(4, 5, 6)
        m = MapField.identity(dims)
        for a in range(3):
            assert np.array_equal(m.pos[a], face_centers(dims, a))
        assert roundtrip_error(m, MapField.identity(dims)) == 0.0


# ============================================================
# RK4 march
# ============================================================


class TestRk4Step:
    def test_zero_velocity_is_fixed_point(self):
        dims = GridDims.of(16, 16)
        m = MapField.identity(dims)
        rk4_step(m, MacField.zeros(dims), 0.05)
        ref = MapField.identity(dims)
        for a in range(2):
            assert np.array_equal(m.pos[a], ref.pos[a])
            assert np.array_equal(m.col[a], ref.col[a])

    def test_constant_velocity_translates(self):
        dims = GridDims.of(16, 16)
        c = np.array([0.5, -0.25])
        m = MapField.identity(dims)
        rk4_step(m, constant_field(dims, c), 0.125)
        for a in range(2):
            expect = face_centers(dims, a) + 0.125 * c
            assert np.abs(m.pos[a] - expect).max() < 1e-12
            cols = np.zeros((len(expect), 2))
            cols[:, a] = 1.0
            assert np.abs(m.col[a] - cols).max() < 1e-12

    def test_zero_dt_rejected(self):
        dims = GridDims.of(8, 8)
        with pytest.raises(ValueError):
            rk4_step(MapField.identity(dims), MacField.zeros(dims), 0.0)

    def test_linear_field_matches_stage_oracle(self):
        # Exact linear reproduction makes the march equal the closed-form
        # RK4 transfer matrix, up to float32 storage noise in the field.
        dims = GridDims.of(32, 32)
        a_mat = np.array([[0.3, -1.1], [0.9, -0.3]])
        u = linear_field_2d(dims, a_mat)
        dt = 0.2
        m = MapField.identity(dims)
        rk4_step(m, u, dt)
        r4 = rk4_amplification(a_mat, dt)
        center = np.array([0.5, 0.5])
        for a in range(2):
            mask = interior_mask(m, a)
            base = face_centers(dims, a)[mask]
            expect_pos = center + (base - center) @ r4.T
            assert np.abs(m.pos[a][mask] - expect_pos).max() < 1e-6
            expect_col = r4[:, a]
            assert np.abs(m.col[a][mask] - expect_col).max() < 1e-5

    def test_linear_field_fifth_order_local_error(self):
        dims = GridDims.of(32, 32)
        a_mat = np.array([[0.0, -2.0], [2.0, 0.0]])
        u = linear_field_2d(dims, a_mat)
        center = np.array([0.5, 0.5])

        def one_step_error(dt):
            m = MapField.identity(dims)
            rk4_step(m, u, dt)
            worst = 0.0
            for a in range(2):
                mask = interior_mask(m, a)
                base = face_centers(dims, a)[mask]
                exact_pos = center + (base - center) @ expm(a_mat * dt).T
                exact_col = expm(a_mat * dt)[:, a]
                worst = max(worst, np.abs(m.pos[a][mask] - exact_pos).max())
                worst = max(worst, np.abs(m.col[a][mask] - exact_col).max())
            return worst

        coarse, fine = one_step_error(0.2), one_step_error(0.1)
        assert coarse / fine == pytest.approx(32.0, rel=0.25)

    def test_fourth_order_over_fixed_horizon(self):
        dims = GridDims.of(32, 32)
        a_mat = np.array([[0.0, -2.0], [2.0, 0.0]])
        u = linear_field_2d(dims, a_mat)
        center = np.array([0.5, 0.5])
        horizon = 0.4

        def global_error(steps):
            m = MapField.identity(dims)
            for _ in range(steps):
                rk4_step(m, u, horizon / steps)
            exact = expm(a_mat * horizon)
            worst = 0.0
            for a in range(2):
                mask = interior_mask(m, a)
                base = face_centers(dims, a)[mask]
                worst = max(worst, np.abs(m.pos[a][mask] - (center + (base - center) @ exact.T)).max())
            return worst

        ratio = global_error(2) / global_error(4)
        assert 8.0 <= ratio <= 32.0

    def test_back_forward_composition_cancels_superlinearly(self):
        # A +dt then -dt pair cancels the leading local error, so halving dt
        # shrinks the residual by ~2^6; anything <= 2^4 would flag a scheme
        # that lost the cancellation.
        dims = GridDims.of(64, 64)
        u = mollified_rotation_2d(dims)
        ref = MapField.identity(dims)

        def residual(dt):
            m = MapField.identity(dims)
            rk4_step(m, u, dt)
            rk4_step(m, u, -dt)
            return roundtrip_error(m, ref)

        coarse, fine = residual(0.4), residual(0.2)
        assert coarse / fine >= 24.0
        assert fine < 1e-4

    def test_rotation_keeps_unit_determinant(self):
        dims = GridDims.of(64, 64)
        u = mollified_rotation_2d(dims)
        dt = 0.5 * dims.dx / u.max_speed()
        m = MapField.identity(dims)
        for _ in range(50):
            rk4_step(m, u, dt)
        det = np.linalg.det(assemble_jacobian_at_cells(m))
        from nfmlab.field_core import cell_centers

        r = np.sqrt(((cell_centers(dims) - 0.5) ** 2).sum(axis=1))
        assert np.abs(det[r < 0.2] - 1.0).max() < 1e-3

    def test_3d_constant_velocity(self):
        dims = GridDims.of(8, 8, 8)
        c = np.array([0.25, -0.5, 0.125])
        m = MapField.identity(dims)
        rk4_step(m, constant_field(dims, c), 0.1)
        for a in range(3):
            expect = face_centers(dims, a) + 0.1 * c
            assert np.abs(m.pos[a] - expect).max() < 1e-12


# ============================================================
# backward march over a step history
# ============================================================


class TestBackwardMarch:
    def test_single_substep_equals_rk4(self):
        dims = GridDims.of(32, 32)
        u = mollified_rotation_2d(dims)
        a = backward_march(MapField.identity(dims), u, [0.05], 0)
        b = reset_identity(MapField.identity(dims))
        rk4_step(b, u, -0.05)
        for ax in range(2):
            assert np.array_equal(a.pos[ax], b.pos[ax])
            assert np.array_equal(a.col[ax], b.col[ax])

    def test_constant_history_translates_back(self):
        dims = GridDims.of(16, 16)
        c = np.array([0.5, -0.25])
        u = constant_field(dims, c)
        m = backward_march(MapField.identity(dims), u, [0.01, 0.01, 0.01], 2,
                           frames=lambda l: u)
        for a in range(2):
            expect = face_centers(dims, a) - 3 * 0.01 * c
            assert np.abs(m.pos[a] - expect).max() < 1e-9
            cols = np.zeros((len(expect), 2))
            cols[:, a] = 1.0
            assert np.abs(m.col[a] - cols).max() < 1e-9

    def test_zero_history_is_identity(self):
        dims = GridDims.of(16, 16)
        z = MacField.zeros(dims)
        m = backward_march(MapField.identity(dims), z, [0.02, 0.02], 1, frames=lambda l: z)
        ref = MapField.identity(dims)
        for a in range(2):
            assert np.array_equal(m.pos[a], ref.pos[a])

    def test_resets_previous_state(self):
        dims = GridDims.of(16, 16)
        u = mollified_rotation_2d(dims)
        m = MapField.identity(dims)
        rk4_step(m, u, 0.3)                       # stale state to discard
        got = backward_march(m, u, [0.05], 0)
        want = rk4_step(reset_identity(MapField.identity(dims)), u, -0.05)
        for a in range(2):
            assert np.array_equal(got.pos[a], want.pos[a])

    def test_missing_inputs_rejected(self):
        dims = GridDims.of(8, 8)
        u = MacField.zeros(dims)
        with pytest.raises(ValueError):
            backward_march(MapField.identity(dims), u, [0.1], 1, frames=lambda l: u)
        with pytest.raises(ValueError):
            backward_march(MapField.identity(dims), u, [0.1, 0.1], 1)
        with pytest.raises(ValueError):
            backward_march(MapField.identity(dims), u, [], -1)


# ============================================================
# semi-Lagrangian baseline
# ============================================================


class TestSlBackwardMapStep:
    def test_zero_velocity_unchanged(self):
        dims = GridDims.of(16, 16)
        m = MapField.identity(dims)
        sl_backward_map_step(m, MacField.zeros(dims), 0.05)
        ref = MapField.identity(dims)
        for a in range(2):
            assert np.abs(m.pos[a] - ref.pos[a]).max() < 1e-12
            assert np.abs(m.col[a] - ref.col[a]).max() < 1e-12

    def test_constant_velocity_translates_back(self):
        dims = GridDims.of(16, 16)
        c = np.array([0.5, -0.25])
        m = MapField.identity(dims)
        sl_backward_map_step(m, constant_field(dims, c), 0.05)
        for a in range(2):
            expect = face_centers(dims, a) - 0.05 * c
            assert np.abs(m.pos[a] - expect).max() < 1e-7
            cols = np.zeros((len(expect), 2))
            cols[:, a] = 1.0
            assert np.abs(m.col[a] - cols).max() < 1e-7

    def test_roundtrip_error_accumulates(self):
        # The first couple of steps sit at the interpolation floor; once the
        # per-step map corruption dominates, the error must climb steadily.
        dims = GridDims.of(64, 64)
        u = mollified_rotation_2d(dims)
        dt = dims.dx / u.max_speed()
        fwd, bwd = MapField.identity(dims), MapField.identity(dims)
        errors = []
        for _ in range(14):
            rk4_step(fwd, u, dt)
            sl_backward_map_step(bwd, u, dt)
            errors.append(roundtrip_error(fwd, bwd))
        tail = errors[2:]
        assert all(b > a for a, b in zip(tail, tail[1:]))
        assert errors[-1] > 10.0 * errors[2]

    def test_marched_maps_beat_interpolated_maps(self):
        # Same 20-step steady-field experiment both ways, judged by marching
        # tracers forward from each backward map's feet; the re-marched map
        # must be orders of magnitude more consistent than the interpolated
        # update in both position and Jacobian.
        dims = GridDims.of(64, 64)
        u = mac_from_function(dims, algebraic_vortex_fns())
        dt = dims.dx / u.max_speed()
        steps = 20
        hist = [dt] * steps

        fwd = MapField.identity(dims)
        sl_bwd = MapField.identity(dims)
        for _ in range(steps):
            rk4_step(fwd, u, dt)
            sl_backward_map_step(sl_bwd, u, dt)
        marched_bwd = backward_march(MapField.identity(dims), u,
                                     hist, steps - 1, frames=lambda l: u)

        rt_m, jc_m = marched_consistency(marched_bwd, u, hist, steps - 1, lambda l: u)
        rt_s, jc_s = marched_consistency(sl_bwd, u, hist, steps - 1, lambda l: u)
        assert rt_m < 1e-2 * rt_s
        assert jc_m < 1e-2 * jc_s
        # the interpolated diagnostics agree on the ordering
        assert roundtrip_error(fwd, marched_bwd) < roundtrip_error(fwd, sl_bwd)
        assert (jacobian_consistency_error(fwd, marched_bwd)
                < jacobian_consistency_error(fwd, sl_bwd))


class TestMarchedConsistency:
    def test_constant_field_cancels_exactly(self):
        # Backward then forward through a uniform flow retraces the same
        # straight characteristics, so the residual is pure float noise.
        dims = GridDims.of(16, 16)
        u = constant_field(dims, np.array([0.4, -0.2]))
        hist = [0.02, 0.03, 0.01]
        bwd = backward_march(MapField.identity(dims), u, hist, 2, frames=lambda l: u)
        rt, jc = marched_consistency(bwd, u, hist, 2, frames=lambda l: u)
        assert rt < 1e-9
        assert jc < 1e-9

    def test_identity_map_reports_forward_march(self):
        # Seeding from an unmarched identity map measures the forward drift
        # itself, which for a translation is exactly the travelled distance.
        dims = GridDims.of(16, 16)
        c = np.array([0.4, -0.2])
        u = constant_field(dims, c)
        rt, jc = marched_consistency(MapField.identity(dims), u, [0.05], 0)
        assert abs(rt - 0.05 * np.hypot(*c)) < 1e-7
        assert jc < 1e-9

    def test_missing_inputs_rejected(self):
        dims = GridDims.of(8, 8)
        u = MacField.zeros(dims)
        m = MapField.identity(dims)
        with pytest.raises(ValueError):
            marched_consistency(m, u, [0.1], 1, frames=lambda l: u)
        with pytest.raises(ValueError):
            marched_consistency(m, u, [0.1, 0.1], 1)
        with pytest.raises(ValueError):
            marched_consistency(m, u, [], -1)


# ============================================================
# evaluation helpers
# ============================================================


class TestMapEvaluation:
    def test_identity_map_evaluates_to_query(self):
        dims = GridDims.of(16, 16)
        m = MapField.identity(dims)
        rng = np.random.default_rng(3)
        pts = rng.uniform(0, 1, (50, 2))
        for a in range(2):
            assert np.abs(eval_map(m, a, pts) - pts).max() < 1e-12

    def test_cell_assembly_of_identity(self):
        dims = GridDims.of(8, 8)
        m = MapField.identity(dims)
        jac = assemble_jacobian_at_cells(m)
        assert np.abs(jac - np.eye(2)).max() < 1e-14
        from nfmlab.field_core import cell_centers

        assert np.abs(map_positions_at_cells(m) - cell_centers(dims)).max() < 1e-13
