import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dijkstra_arrival
from pyrotime.firesim import (
    RosModel, SpreadConfig, directional_ros, sample_training_configs, solve_arrival, solve_eikonal,
    write_config_sidecar,
)
from pyrotime.rastercore import GridSpec

MODEL = RosModel()


class TestDirectionalRos:
    @given(st.floats(0, 360))
    def test_no_wind_is_isotropic(self, heading):
        assert directional_ros(MODEL, (0.0, 123.0), heading) == MODEL.base_ros

    def test_downwind_speed_five(self):
        assert directional_ros(MODEL, (5.0, 30.0), 30.0) == pytest.approx(3.0 * MODEL.base_ros)

    @given(st.floats(0.1, 5), st.floats(0, 360))
    def test_flank_between_back_and_head(self, speed, direction):
        head = directional_ros(MODEL, (speed, direction), direction)
        flank = directional_ros(MODEL, (speed, direction), direction + 90)
        back = directional_ros(MODEL, (speed, direction), direction + 180)
        assert back < flank < head

    @given(st.floats(0, 5), st.floats(0, 360), st.floats(0, 360))
    def test_positive_and_max_downwind(self, speed, direction, heading):
        r = directional_ros(MODEL, (speed, direction), heading)
        assert 0 < r <= directional_ros(MODEL, (speed, direction), direction) + 1e-15

    def test_default_shape_exponent_is_one(self):
        assert MODEL.shape_exponent == pytest.approx(1.0)

    def test_negative_speed(self):
        with pytest.raises(ValueError):
            directional_ros(MODEL, (-1.0, 0.0), 0.0)


class TestSolver:
    def test_isotropic_axis_arrivals(self):
        spec = GridSpec(64, 64, 60.0)
        cfg = SpreadConfig(spec, ((32, 32, 0.0),), 0.0, 0.0, 1.0, 48.0)
        arr = solve_arrival(cfg, RosModel(base_ros=1.0)).values
        for k in range(1, 30):
            exact = 60.0 * k / 3600.0
            for val in (arr[32, 32 + k], arr[32, 32 - k], arr[32 + k, 32], arr[32 - k, 32]):
                assert abs(val - exact) / exact <= 0.08

    def test_two_ignitions_pointwise_min(self):
        spec = GridSpec(48, 48, 60.0)
        model = RosModel(base_ros=0.1)
        a = SpreadConfig(spec, ((10, 12, 0.0),), 3.0, 45.0, 0.1, 48.0)
        b = SpreadConfig(spec, ((35, 30, 1.5),), 3.0, 45.0, 0.1, 48.0)
        both = SpreadConfig(spec, ((10, 12, 0.0), (35, 30, 1.5)), 3.0, 45.0, 0.1, 48.0)
        va, vb, vboth = (solve_arrival(c, model).values for c in (a, b, both))
        expected = np.minimum(va, vb)
        finite = np.isfinite(expected)
        assert np.array_equal(finite, np.isfinite(vboth))
        assert np.abs(vboth[finite] - expected[finite]).max() <= 1e-6

    def test_ignition_time_and_duration_cutoff(self):
        spec = GridSpec(32, 32, 60.0)
        cfg = SpreadConfig(spec, ((16, 16, 2.0),), 0.0, 0.0, 0.05, 2.5)
        arr = solve_arrival(cfg)
        assert arr.values[16, 16] == 2.0
        assert arr.background_mask.any()
        assert arr.values[~arr.background_mask].max() <= 2.5

    def test_no_ignition_inside(self):
        spec = GridSpec(16, 16, 60.0)
        with pytest.raises(ValueError):
            solve_arrival(SpreadConfig(spec, ((20, 3, 0.0),)))

    @pytest.mark.parametrize("direction", [0.0, 30.0, 90.0])
    def test_anisotropic_against_dijkstra(self, direction):
        n, res, c = 64, 60.0, 32
        wind = (5.0, direction)
        arr = solve_arrival(SpreadConfig(GridSpec(n, n, res), ((c, c, 0.0),), *wind, 0.05, 48.0),
                            MODEL).values
        oracle = dijkstra_arrival(4 * n, res / 4, (4 * c, 4 * c),
                                  lambda h: directional_ros(MODEL, wind, h))[::4, ::4]
        theta = math.radians(direction)
        for offset in (0, 90, 180, 270):
            h = theta + math.radians(offset)
            for k in range(5, 30):
                i = c + round(k * math.sin(h))
                j = c - round(k * math.cos(h))
                if 0 <= i < n and 0 <= j < n and np.isfinite(arr[j, i]):
                    assert abs(arr[j, i] - oracle[j, i]) / oracle[j, i] <= 0.10

    def test_downwind_matches_distance_over_head_rate(self):
        n, res, c = 64, 60.0, 32
        arr = solve_arrival(SpreadConfig(GridSpec(n, n, res), ((c, c, 0.0),), 5.0, 90.0, 0.05, 48.0),
                            MODEL).values
        head = directional_ros(MODEL, (5.0, 90.0), 90.0)
        flank = directional_ros(MODEL, (5.0, 90.0), 0.0)
        for k in (10, 20, 30):
            assert arr[c, c + k] == pytest.approx(k * res / head / 3600, rel=0.10)
            assert arr[c - k, c] == pytest.approx(k * res / flank / 3600, rel=0.10)

    @settings(max_examples=10)
    @given(st.floats(0, 5), st.floats(0, 360), st.integers(8, 24), st.integers(8, 24))
    def test_upwind_causality(self, speed, direction, i0, j0):
        u = solve_eikonal((32, 32), 30.0, [(i0, j0, 0.0)], MODEL, (speed, direction))
        ny, nx = u.shape
        for j in range(ny):
            for i in range(nx):
                if (i, j) == (i0, j0):
                    continue
                nb = [u[jj, ii] for jj in range(max(j - 1, 0), min(j + 2, ny))
                      for ii in range(max(i - 1, 0), min(i + 2, nx)) if (ii, jj) != (i, j)]
                assert u[j, i] > min(nb)

    @settings(max_examples=8)
    @given(st.floats(0, 5), st.floats(0, 360))
    def test_sweep_order_invariance(self, speed, direction):
        base = solve_eikonal((40, 40), 30.0, [(17, 22, 0.0)], MODEL, (speed, direction))
        for k in (1, 2, 3):
            other = solve_eikonal((40, 40), 30.0, [(17, 22, 0.0)], MODEL, (speed, direction),
                                  sweep_start=k)
            assert np.abs(other - base).max() <= 1e-6

    def test_zero_wind_rotation_symmetry(self):
        u = solve_eikonal((33, 33), 60.0, [(16, 16, 0.0)], MODEL, (0.0, 0.0))
        for k in (1, 2, 3):
            assert np.array_equal(np.rot90(u, k), u)

    @settings(max_examples=8)
    @given(st.floats(0.1, 10), st.floats(0, 5), st.floats(0, 360))
    def test_ros_scaling(self, c, speed, direction):
        a = solve_eikonal((32, 32), 30.0, [(16, 16, 0.0)], MODEL, (speed, direction))
        b = solve_eikonal((32, 32), 30.0, [(16, 16, 0.0)], MODEL.scaled(c), (speed, direction))
        np.testing.assert_allclose(b * c, a, rtol=1e-12, atol=0)


class TestSampling:
    def test_count_and_determinism(self):
        a = sample_training_configs(20, 7, GridSpec(64, 64))
        b = sample_training_configs(20, 7, GridSpec(64, 64))
        assert len(a) == 20 and a == b
        assert all(c.ignition_points == ((32, 32, 0.0),) for c in a)

    def test_wind_speed_mean(self):
        speeds = [c.wind_speed10 for c in sample_training_configs(10_000, 3, GridSpec(64, 64))]
        assert abs(np.mean(speeds) - 2.5) <= 0.05
        assert 0 <= min(speeds) and max(speeds) <= 5

    def test_sidecar_round_trip(self, tmp_path):
        cfg = sample_training_configs(1, 0, GridSpec(64, 64))[0]
        write_config_sidecar(tmp_path / "s.json", cfg, MODEL, 0)
        doc = json.loads((tmp_path / "s.json").read_text())
        assert SpreadConfig.from_json(doc["config"]) == cfg
