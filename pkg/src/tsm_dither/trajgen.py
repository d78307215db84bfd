"""Random and sinusoidal trajectory generation.

Random trajectories: waypoint 0 sits at 0 mm, every later waypoint is drawn
uniformly from [5, 15] mm, and each waypoint-to-waypoint segment is filled by
an interpolation method drawn uniformly from {lerp, cubic_hermite,
catmull_rom}. `n_waypoints` counts the random waypoints, i.e. the number of
segments; the emitted series has n_waypoints * segment_duration * sample_rate
samples plus the final endpoint.

Randomness comes from numpy's PCG64 generator. Seeding procedure: a single
integer seed constructs PCG64(seed); draws happen in a fixed order (all
waypoint positions first, then one method index per segment), so a seed pins
the whole trajectory bit-exactly for a given numpy build.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpecError
from .signals import TimeSeries

METHODS = ("lerp", "cubic_hermite", "catmull_rom")
WAYPOINT_LOW_MM = 5.0
WAYPOINT_HIGH_MM = 15.0


@dataclass(frozen=True)
class Waypoint:
    index: int
    position_mm: float


@dataclass
class TrajectorySpec:
    """Parameters for one generated trajectory.

    kind: "random" or "sinusoid".
    amplitude_mm / period_s: sinusoid shape (peak amplitude, full period).
    duration_s: sinusoid length; defaults to two periods when None.
    n_waypoints: number of random waypoints after the origin (= segments).
    segment_duration_s: time between consecutive waypoints.
    """

    kind: str = "random"
    amplitude_mm: float = 16.0
    period_s: float = 1.0
    duration_s: float | None = None
    n_waypoints: int = 8
    segment_duration_s: float = 2.0
    sample_rate_hz: float = 55.0
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in ("random", "sinusoid"):
            raise InvalidSpecError(f"unknown trajectory kind {self.kind!r}")
        if self.sample_rate_hz <= 0.0:
            raise InvalidSpecError("sample_rate_hz must be positive")
        if self.kind == "sinusoid":
            if self.amplitude_mm <= 0.0 or self.period_s <= 0.0:
                raise InvalidSpecError("sinusoid needs positive amplitude and period")
            if self.duration_s is not None and self.duration_s <= 0.0:
                raise InvalidSpecError("duration_s must be positive")
        else:
            if self.n_waypoints < 2:
                raise InvalidSpecError("random kind needs n_waypoints >= 2")
            if self.segment_duration_s <= 0.0:
                raise InvalidSpecError("segment_duration_s must be positive")


def make_rng(seed: int) -> np.random.Generator:
    """The package-wide generator: PCG64 seeded with one integer."""
    return np.random.Generator(np.random.PCG64(seed))


def gen_sinusoid(spec: TrajectorySpec) -> TimeSeries:
    """Raised-cosine sinusoid s(t) = A/2 * (1 - cos(2*pi*t/period)).

    Starts and ends each period at 0 mm with zero velocity, so it can be
    commanded from rest. Sampled on [0, duration) at spec.sample_rate_hz.
    """
    spec.validate()
    if spec.kind != "sinusoid":
        raise InvalidSpecError("gen_sinusoid needs kind='sinusoid'")
    duration = spec.duration_s if spec.duration_s is not None else 2.0 * spec.period_s
    dt = 1.0 / spec.sample_rate_hz
    n = int(round(duration / dt))
    if n < 2:
        raise InvalidSpecError("duration too short for the sample rate")
    t = dt * np.arange(n)
    vals = 0.5 * spec.amplitude_mm * (1.0 - np.cos(2.0 * np.pi * t / spec.period_s))
    return TimeSeries(t0=0.0, dt=dt, values=vals, unit="mm")


def sample_waypoints(spec: TrajectorySpec, rng: np.random.Generator) -> list[Waypoint]:
    """Waypoint 0 at 0 mm, then spec.n_waypoints i.i.d. U(5, 15) positions."""
    spec.validate()
    pts = [Waypoint(0, 0.0)]
    draws = rng.uniform(WAYPOINT_LOW_MM, WAYPOINT_HIGH_MM, size=spec.n_waypoints)
    for i, p in enumerate(draws):
        pts.append(Waypoint(i + 1, float(p)))
    return pts


def _hermite_eval(p_a, p_b, m_a, m_b, u):
    # cubic Hermite basis on u in [0, 1], tangents per unit parameter
    u2 = u * u
    u3 = u2 * u
    h00 = 2.0 * u3 - 3.0 * u2 + 1.0
    h10 = u3 - 2.0 * u2 + u
    h01 = -2.0 * u3 + 3.0 * u2
    h11 = u3 - u2
    return h00 * p_a + h10 * m_a + h01 * p_b + h11 * m_b


def interpolate_segment(
    p_a: float,
    p_b: float,
    method: str,
    context: tuple[float | None, float | None] = (None, None),
    n_samples: int = 111,
) -> tuple[np.ndarray, dict]:
    """Fill one segment from p_a to p_b inclusive.

    context carries the neighboring waypoint positions (prev, next) used for
    spline tangents; a missing neighbor falls back to a clamped zero tangent
    and the metadata flags it.

    cubic_hermite takes central-difference tangents; catmull_rom is the
    uniform cardinal spline at tension 0.5. On uniformly spaced waypoints the
    two prescriptions give the same tangents, so the curves coincide; both
    are kept because the method label is part of the trajectory's identity.

    Returns:
        (samples, meta) with len(samples) == n_samples, samples[0] == p_a,
        samples[-1] == p_b, and meta = {"clamped_start": bool,
        "clamped_end": bool}.
    """
    if method not in METHODS:
        raise InvalidSpecError(f"unknown interpolation method {method!r}")
    if n_samples < 2:
        raise InvalidSpecError("n_samples must be at least 2")
    u = np.linspace(0.0, 1.0, n_samples)
    meta = {"clamped_start": False, "clamped_end": False}
    if method == "lerp":
        return p_a + (p_b - p_a) * u, meta
    prev_p, next_p = context
    if prev_p is None:
        m_a = 0.0
        meta["clamped_start"] = True
    else:
        m_a = 0.5 * (p_b - prev_p)
    if next_p is None:
        m_b = 0.0
        meta["clamped_end"] = True
    else:
        m_b = 0.5 * (next_p - p_a)
    return _hermite_eval(p_a, p_b, m_a, m_b, u), meta


def gen_random_trajectory(spec: TrajectorySpec) -> TimeSeries:
    """Random waypoint trajectory with per-segment interpolation methods."""
    series, _, _ = gen_random_trajectory_detail(spec)
    return series


def gen_random_trajectory_detail(
    spec: TrajectorySpec,
) -> tuple[TimeSeries, list[Waypoint], list[str]]:
    """Like gen_random_trajectory but also returns waypoints and methods."""
    spec.validate()
    if spec.kind != "random":
        raise InvalidSpecError("gen_random_trajectory needs kind='random'")
    rng = make_rng(spec.seed)
    waypoints = sample_waypoints(spec, rng)
    n_seg = len(waypoints) - 1
    methods = [METHODS[int(k)] for k in rng.integers(0, len(METHODS), size=n_seg)]
    dt = 1.0 / spec.sample_rate_hz
    seg_samples = int(round(spec.segment_duration_s * spec.sample_rate_hz))
    if seg_samples < 1:
        raise InvalidSpecError("segment_duration_s too short for the sample rate")
    pos = [wp.position_mm for wp in waypoints]
    out = np.empty(n_seg * seg_samples + 1)
    out[0] = pos[0]
    for i in range(n_seg):
        prev_p = pos[i - 1] if i >= 1 else None
        next_p = pos[i + 2] if i + 2 < len(pos) else None
        seg, _ = interpolate_segment(
            pos[i], pos[i + 1], methods[i], (prev_p, next_p), seg_samples + 1
        )
        out[i * seg_samples + 1 : (i + 1) * seg_samples + 1] = seg[1:]
    return TimeSeries(t0=0.0, dt=dt, values=out, unit="mm"), waypoints, methods


def trajectory_for_samples(n_samples: int, seed: int, sample_rate_hz: float = 55.0,
                           segment_duration_s: float = 2.0) -> TimeSeries:
    """Random trajectory truncated to exactly n_samples."""
    seg_samples = int(round(segment_duration_s * sample_rate_hz))
    n_seg = max(2, -(-(n_samples - 1) // seg_samples))
    spec = TrajectorySpec(
        kind="random",
        n_waypoints=n_seg,
        segment_duration_s=segment_duration_s,
        sample_rate_hz=sample_rate_hz,
        seed=seed,
    )
    full = gen_random_trajectory(spec)
    if full.n < n_samples:
        raise InvalidSpecError("generated trajectory shorter than requested")
    return TimeSeries(t0=0.0, dt=full.dt, values=full.values[:n_samples], unit="mm")
