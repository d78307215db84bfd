"""Trajectory generator contracts: frozen samples, determinism, spline bounds."""
import numpy as np
import pytest

from tsm_dither.errors import InvalidSpecError
from tsm_dither.trajgen import (METHODS, TrajectorySpec, gen_random_trajectory,
                                gen_random_trajectory_detail, gen_sinusoid,
                                interpolate_segment, make_rng,
                                sample_waypoints, trajectory_for_samples)


def test_sinusoid_frozen_points():
    # raised cosine: 0 at t=0, A/2 at quarter period, A at half period
    spec = TrajectorySpec(kind="sinusoid", amplitude_mm=16.0, period_s=10.0,
                          duration_s=20.0, sample_rate_hz=10.0)
    s = gen_sinusoid(spec)
    assert s.values[0] == 0.0
    assert s.values[25] == pytest.approx(8.0, abs=1e-12)   # t = 2.5 s
    assert s.values[50] == pytest.approx(16.0, abs=1e-12)  # t = 5.0 s


def test_sinusoid_starts_at_rest():
    spec = TrajectorySpec(kind="sinusoid", amplitude_mm=16.0, period_s=1.0,
                          sample_rate_hz=1000.0)
    s = gen_sinusoid(spec)
    # startup velocity is O(dt), under 1% of the mid-swing peak A*pi/T
    v0 = abs(s.values[1] - s.values[0]) / s.dt
    v_peak = spec.amplitude_mm * np.pi / spec.period_s
    assert v0 < 0.01 * v_peak


def test_sinusoid_invalid_period():
    with pytest.raises(InvalidSpecError):
        gen_sinusoid(TrajectorySpec(kind="sinusoid", period_s=0.0))


def test_waypoints_origin_and_range():
    spec = TrajectorySpec(kind="random", n_waypoints=50)
    for seed in range(20):
        pts = sample_waypoints(spec, make_rng(seed))
        assert pts[0].position_mm == 0.0
        assert len(pts) == 51
        for wp in pts[1:]:
            assert 5.0 <= wp.position_mm <= 15.0


def test_waypoints_deterministic():
    spec = TrajectorySpec(kind="random", n_waypoints=10)
    a = sample_waypoints(spec, make_rng(42))
    b = sample_waypoints(spec, make_rng(42))
    assert [w.position_mm for w in a] == [w.position_mm for w in b]


def test_lerp_midpoint():
    seg, meta = interpolate_segment(0.0, 10.0, "lerp", n_samples=3)
    assert np.allclose(seg, [0.0, 5.0, 10.0])
    assert meta == {"clamped_start": False, "clamped_end": False}


def test_endpoints_every_method():
    rng = np.random.default_rng(3)
    for method in METHODS:
        for _ in range(25):
            p_a, p_b, prev_p, next_p = rng.uniform(0.0, 15.0, size=4)
            seg, _ = interpolate_segment(p_a, p_b, method, (prev_p, next_p), 17)
            assert seg[0] == pytest.approx(p_a, abs=1e-12)
            assert seg[-1] == pytest.approx(p_b, abs=1e-12)


def test_collinear_spline_reduces_to_lerp():
    # equally spaced collinear control points: tangents equal the slope
    for method in ("cubic_hermite", "catmull_rom"):
        seg, _ = interpolate_segment(2.0, 4.0, method, (0.0, 6.0), 33)
        lerp, _ = interpolate_segment(2.0, 4.0, "lerp", n_samples=33)
        assert np.max(np.abs(seg - lerp)) < 1e-12


def test_missing_context_clamps_and_flags():
    seg, meta = interpolate_segment(0.0, 10.0, "catmull_rom", (None, None), 11)
    assert meta == {"clamped_start": True, "clamped_end": True}
    assert seg[0] == 0.0 and seg[-1] == 10.0


def test_random_trajectory_deterministic():
    spec = TrajectorySpec(kind="random", n_waypoints=6, seed=42)
    a = gen_random_trajectory(spec)
    b = gen_random_trajectory(spec)
    assert np.array_equal(a.values, b.values)


def test_waypoints_hit_segment_boundaries():
    spec = TrajectorySpec(kind="random", n_waypoints=7, seed=5)
    series, waypoints, _ = gen_random_trajectory_detail(spec)
    seg = int(round(spec.segment_duration_s * spec.sample_rate_hz))
    for i, wp in enumerate(waypoints):
        assert series.values[i * seg] == pytest.approx(wp.position_mm, abs=1e-12)


def test_overshoot_margin_and_continuity():
    # spline overshoot stays within 25% of the widest waypoint span feeding
    # the segment's tangents (Hermite tangent terms peak at 4/27 of the
    # tangent magnitude), and consecutive samples never imply > 200 mm/s
    for seed in range(100):
        spec = TrajectorySpec(kind="random", n_waypoints=5, seed=seed)
        series, waypoints, _ = gen_random_trajectory_detail(spec)
        pos = [w.position_mm for w in waypoints]
        seg = int(round(spec.segment_duration_s * spec.sample_rate_hz))
        for i in range(len(pos) - 1):
            lo, hi = min(pos[i], pos[i + 1]), max(pos[i], pos[i + 1])
            spans = [hi - lo]
            if i >= 1:
                spans.append(abs(pos[i + 1] - pos[i - 1]))
            if i + 2 < len(pos):
                spans.append(abs(pos[i + 2] - pos[i]))
            margin = 0.25 * max(spans) + 1e-9
            chunk = series.values[i * seg:(i + 1) * seg + 1]
            assert chunk.min() >= lo - margin
            assert chunk.max() <= hi + margin
        steps = np.abs(np.diff(series.values))
        assert steps.max() <= 200.0 * series.dt


def test_trajectory_for_samples_exact_length():
    for n in (100, 1500, 15000):
        s = trajectory_for_samples(n, seed=7)
        assert s.n == n
        assert s.values[0] == 0.0
    # 15000 samples at 55 Hz span about 272.7 s
    s = trajectory_for_samples(15000, seed=7)
    assert s.duration == pytest.approx(14999 / 55.0, rel=1e-12)


def test_spec_validation_errors():
    with pytest.raises(InvalidSpecError):
        gen_random_trajectory(TrajectorySpec(kind="random", n_waypoints=1))
    with pytest.raises(InvalidSpecError):
        gen_sinusoid(TrajectorySpec(kind="bogus"))
    with pytest.raises(InvalidSpecError):
        interpolate_segment(0.0, 1.0, "quintic")


def test_csv_export_header(tmp_path):
    s = trajectory_for_samples(50, seed=1)
    path = tmp_path / "traj.csv"
    s.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t_s,pos_mm"
    assert len(lines) == 51
