"""Three-rate control stack around the plant.

A motion generator at 55 Hz low-pass filters the commanded trajectory with a
20-tap moving average and differentiates it into a velocity reference. Two
PID velocity loops run at 1 kHz: one drives the carriage motor, the other
regulates the crank's angular velocity at 2*pi*f for the selected dither
frequency f. Observation rows are sampled at 55 Hz aligned with the command
samples. The kernel orders ticks by (timestamp, motion < control <
observation) and integrates the plant between control ticks.

Each motor is modeled as a first-order velocity actuator (time constant
tau_act) around the PID, whose output saturates at the actuator limit; the
integral term is clamped so ki * integral never exceeds that limit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import _kernels
from .errors import ConfigurationError, InsufficientDataError, SimulationDivergedError
from .plant import PlantParams
from .signals import TimeSeries


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float
    kd: float = 0.0


@dataclass(frozen=True)
class ControlConfig:
    rate_motion_hz: float = 55.0
    rate_control_hz: float = 1000.0
    lpf_window: int = 20
    motion_pid: PidGains = field(default_factory=lambda: PidGains(kp=0.9, ki=300.0))
    vib_pid: PidGains = field(default_factory=lambda: PidGains(kp=0.9, ki=300.0))
    tau_act_s: float = 0.002
    v_limit_mm_s: float = 400.0
    omega_limit_rad_s: float = 2.0 * math.pi * 120.0
    settle_s: float = 0.5

    def __post_init__(self):
        if self.lpf_window < 1:
            raise ConfigurationError("lpf_window must be >= 1")
        if self.rate_control_hz < self.rate_motion_hz:
            raise ConfigurationError("control loop must run at least as fast as motion")
        if self.tau_act_s <= 0.0 or self.settle_s < 0.0:
            raise ConfigurationError("tau_act_s must be positive, settle_s nonnegative")

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(d: dict) -> "ControlConfig":
        d = dict(d)
        motion = PidGains(**d.pop("motion_pid"))
        vib = PidGains(**d.pop("vib_pid"))
        return ControlConfig(motion_pid=motion, vib_pid=vib, **d)


def motion_generator(window, dt: float, q_d_prev: float | None = None) -> tuple[float, float]:
    """Moving-average filter plus backward-difference velocity reference.

    window holds the most recent lpf_window command samples (oldest first).
    q_d_prev is the previous filtered value; when omitted it is recomputed
    from the window with the newest sample dropped, which matches a window
    that advanced by exactly one sample.

    Returns (q_d, v_ref).
    """
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 1 or w.size < 2:
        raise InsufficientDataError("window must hold at least two samples")
    if dt <= 0.0:
        raise ConfigurationError("dt must be positive")
    q_d = float(np.mean(w))
    if q_d_prev is None:
        # previous window = current shifted one sample back; the sample that
        # scrolled out is unknown, so back-extrapolate it linearly from the
        # two oldest samples (exact for warmed-up affine histories)
        q_d_prev = float((np.sum(w[:-1]) + 2.0 * w[0] - w[1]) / w.size)
    return q_d, (q_d - q_d_prev) / dt


def vibration_command(freq_hz: float) -> float:
    """Angular velocity reference for the crank: omega = 2 pi f."""
    if freq_hz < 0.0:
        raise ConfigurationError(f"frequency must be nonnegative, got {freq_hz}")
    return 2.0 * math.pi * freq_hz


@dataclass
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0


def pid_step(state: PidState, gains: PidGains, error: float, dt: float,
             out_limit: float) -> tuple[PidState, float]:
    """One PID tick with clamped integral and saturated output."""
    if dt <= 0.0:
        raise ConfigurationError("dt must be positive")
    u, integral, prev_e = _kernels.pid_tick(
        float(error), state.integral, state.prev_error,
        gains.kp, gains.ki, gains.kd, dt, out_limit,
    )
    return PidState(integral=integral, prev_error=prev_e), float(u)


@dataclass
class ObservationLog:
    """55 Hz observation rows plus loop internals kept for diagnostics."""

    t: np.ndarray
    q_ref: np.ndarray
    q_d: np.ndarray
    p_meas: np.ndarray
    t_in: np.ndarray
    t_out: np.ndarray
    x_in: np.ndarray
    v_ref: np.ndarray
    v_act: np.ndarray
    dissipation_j: float
    vib_freq_hz: float

    @property
    def n(self) -> int:
        return int(self.t.size)

    def to_csv(self, path) -> None:
        lines = ["t_s,q_ref_mm,q_d_mm,p_meas_mm,T_in_N,T_out_N"]
        for i in range(self.n):
            lines.append(
                f"{self.t[i]:.12g},{self.q_ref[i]:.12g},{self.q_d[i]:.12g},"
                f"{self.p_meas[i]:.12g},{self.t_in[i]:.12g},{self.t_out[i]:.12g}"
            )
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def run_control_loop(traj: TimeSeries, plant_params: PlantParams,
                     config: ControlConfig, vib_freq_hz: float = 0.0) -> ObservationLog:
    """Run one closed-loop episode and return the observation log.

    The log has exactly one row per trajectory sample. The measured output
    position is zeroed against the settle-phase mean (encoders are zeroed
    after the dither has spun up, before the trajectory starts).
    """
    if not math.isclose(1.0 / traj.dt, config.rate_motion_hz, rel_tol=1e-6):
        raise ConfigurationError(
            f"trajectory rate {1.0 / traj.dt:.3f} Hz != motion rate {config.rate_motion_hz} Hz"
        )
    if not 0.0 <= vib_freq_hz <= 100.0:
        raise ConfigurationError(f"vib_freq_hz must be in [0, 100], got {vib_freq_hz}")
    mg, vg = config.motion_pid, config.vib_pid
    (status, bad_step, q_d, x_in, p_raw, t_in, t_out, v_ref, v_act,
     dissipation, p_offset) = _kernels.run_episode_kernel(
        np.ascontiguousarray(traj.values),
        config.rate_motion_hz, config.rate_control_hz, config.lpf_window,
        mg.kp, mg.ki, mg.kd, vg.kp, vg.ki, vg.kd,
        float(vib_freq_hz),
        config.tau_act_s, config.v_limit_mm_s, config.omega_limit_rad_s,
        *plant_params.kernel_args(),
        config.settle_s,
    )
    if status != 0:
        raise SimulationDivergedError(int(bad_step))
    return ObservationLog(
        t=traj.t, q_ref=traj.values.copy(), q_d=q_d, p_meas=p_raw - p_offset,
        t_in=t_in, t_out=t_out, x_in=x_in, v_ref=v_ref, v_act=v_act,
        dissipation_j=float(dissipation), vib_freq_hz=float(vib_freq_hz),
    )
