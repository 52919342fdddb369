"""Metric formulas against closed forms, plus the CSV writer contract."""
import numpy as np
import pytest

from nfmlab.field_core import GridDims, MacField
from nfmlab.metrics import (
    COLUMNS,
    MetricsRecord,
    MetricsWriter,
    aepe,
    cell_velocity,
    kinetic_energy,
    mean_abs_error,
    read_metrics,
    rmse,
    rms_speed,
)

from helpers import mac_from_function, random_mac, rigid_rotation_field


def offset(f, deltas):
    return MacField(f.dims, [
        (f.comps[a].astype(np.float64) + deltas[a]).astype(np.float32)
        for a in range(f.dims.dim)
    ])


class TestErrorMetrics:
    def test_identical_fields_zero(self):
        rng = np.random.default_rng(0)
        f = random_mac(GridDims.of(16, 16), rng)
        assert rmse(f, f) == 0.0
        assert aepe(f, f) == 0.0
        assert mean_abs_error(f, f) == 0.0

    def test_rmse_of_uniform_offset(self):
        rng = np.random.default_rng(1)
        f = random_mac(GridDims.of(16, 16), rng)
        g = offset(f, [0.25, 0.25])
        assert abs(rmse(f, g) - 0.25) < 1e-6

    def test_aepe_of_uniform_offset(self):
        rng = np.random.default_rng(2)
        f = random_mac(GridDims.of(16, 16), rng)
        v = np.array([0.3, -0.4])     # norm 0.5
        g = offset(f, v)
        assert abs(aepe(f, g) - 0.5) < 1e-6

    def test_mae_of_uniform_offset(self):
        rng = np.random.default_rng(3)
        f = random_mac(GridDims.of(8, 8), rng)
        g = offset(f, [0.125, 0.125])
        assert abs(mean_abs_error(f, g) - 0.125) < 1e-6

    def test_mismatched_grids_rejected(self):
        rng = np.random.default_rng(4)
        a = random_mac(GridDims.of(8, 8), rng)
        b = random_mac(GridDims.of(16, 16), rng)
        for fn in (rmse, aepe, mean_abs_error):
            with pytest.raises(ValueError):
                fn(a, b)

    def test_cell_velocity_of_constant(self):
        dims = GridDims.of(8, 8)
        f = mac_from_function(dims, [
            lambda p: np.full(len(p), 1.5),
            lambda p: np.full(len(p), -2.0),
        ])
        v = cell_velocity(f)
        assert v.shape == (8, 8, 2)
        assert np.abs(v[..., 0] - 1.5).max() < 1e-6
        assert np.abs(v[..., 1] + 2.0).max() < 1e-6


class TestEnergy:
    def test_zero_field(self):
        assert kinetic_energy(MacField.zeros(GridDims.of(8, 8))) == 0.0

    def test_unit_flow_on_unit_square(self):
        dims = GridDims.of(64, 64)
        f = mac_from_function(dims, [
            lambda p: np.ones(len(p)),
            lambda p: np.zeros(len(p)),
        ])
        assert abs(kinetic_energy(f) - 0.5) < 1e-6
        assert abs(rms_speed(f) - 1.0) < 1e-6

    def test_rigid_rotation_matches_integral(self):
        # 0.5 * integral of r^2 over the centered unit square = 0.5/6
        f = rigid_rotation_field(GridDims.of(128, 128))
        assert abs(kinetic_energy(f) - 1.0 / 12.0) < 0.01 / 12.0


class TestMetricsCsv:
    def make(self, step, wall=1.5):
        return MetricsRecord(step=step, time=0.1 * step, kinetic_energy=1.0,
                             max_speed=2.0, div_inf=1e-6, wall_total=wall)

    def test_roundtrip_preserves_values(self, tmp_path):
        path = tmp_path / "m.csv"
        w = MetricsWriter(path)
        recs = [self.make(1), self.make(2)]
        recs[1].rmse = 0.5
        for r in recs:
            w.append(r)
        back = read_metrics(path)
        assert len(back) == 2
        assert back[0].step == 1
        assert back[1].rmse == 0.5
        assert np.isnan(back[0].rmse)
        assert back[0].wall_total == 1.5

    def test_header_is_frozen_column_order(self, tmp_path):
        path = tmp_path / "m.csv"
        MetricsWriter(path)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(COLUMNS)
        assert COLUMNS[:5] == ("step", "time", "kinetic_energy", "max_speed", "div_inf")

    def test_deterministic_mode_zeroes_wall_times(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        wa = MetricsWriter(a, deterministic=True)
        wb = MetricsWriter(b, deterministic=True)
        wa.append(self.make(1, wall=1.23))
        wb.append(self.make(1, wall=4.56))
        assert a.read_bytes() == b.read_bytes()

    def test_step_must_increase(self, tmp_path):
        w = MetricsWriter(tmp_path / "m.csv")
        w.append(self.make(3))
        with pytest.raises(ValueError):
            w.append(self.make(3))

    def test_non_finite_rejected(self, tmp_path):
        w = MetricsWriter(tmp_path / "m.csv")
        bad = self.make(1)
        bad.kinetic_energy = float("inf")
        with pytest.raises(ValueError):
            w.append(bad)

    def test_optional_fields_may_be_nan(self, tmp_path):
        w = MetricsWriter(tmp_path / "m.csv")
        w.append(self.make(1))     # roundtrip/jacobian/rmse/aepe all nan
