"""Tendon-sheath transmission with LuGre friction and a crank-slider dither.

Model sketch: a motor-driven carriage at position x_in pulls a tendon of
stiffness k_t (damping c_t) routed through a sheath. A crank-slider between
carriage and tendon adds the longitudinal vibration displacement
x_vib = crank(theta) - l (peak-to-peak about 2 r). The distal end drives an
output body of mass m_out against a preloaded extension spring
(F_init + k_s * x_out, capped) while LuGre friction (sigma0, sigma1, sigma2,
F_c, F_s, v_s) acts between tendon and sheath. Transmitted tension can never
be negative: the sheath only pulls.

The default numbers are frozen from a one-time tuning pass whose goal was an
uncompensated tracking MAE between 0.8 and 2.0 mm on the benchmark random
trajectory, with a clearly resolvable dither benefit across 10..100 Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import _kernels
from .errors import ConfigurationError, SimulationDivergedError
from .signals import TimeSeries


def crank_displacement(r: float, l: float, theta: float) -> float:
    """Slider position x = r cos(theta) + sqrt(l^2 - r^2 sin^2(theta)).

    r is the crank radius and l the connecting-rod length, both mm. The
    vibration displacement fed to the tendon is x - l, zero-mean to first
    order in r/l with peak-to-peak close to 2 r.
    """
    if not 0.0 < r < l:
        raise ConfigurationError(f"need 0 < r < l, got r={r}, l={l}")
    return float(_kernels.crank_disp(r, l, theta))


@dataclass(frozen=True)
class CrankSlider:
    r_mm: float = 0.27
    l_mm: float = 7.2

    def displacement(self, theta: float) -> float:
        return crank_displacement(self.r_mm, self.l_mm, theta)


@dataclass(frozen=True)
class LugreParams:
    sigma0: float = 300.0   # N/mm  bristle stiffness
    sigma1: float = 0.15    # N*s/mm bristle damping
    sigma2: float = 0.22    # N*s/mm viscous term
    f_c: float = 5.25       # N Coulomb level
    f_s: float = 12.5       # N static (breakaway) level
    v_s: float = 0.8        # mm/s Stribeck velocity


@dataclass(frozen=True)
class PlantParams:
    crank: CrankSlider = field(default_factory=CrankSlider)
    lugre: LugreParams = field(default_factory=LugreParams)
    k_t: float = 15.5        # N/mm tendon stiffness
    c_t: float = 0.09        # N*s/mm tendon damping
    k_s: float = 1.08        # N/mm output spring rate
    f_init: float = 8.5      # N preload tension
    spring_cap: float = 30.0  # N maximum spring force
    m_out: float = 0.01      # kg output body mass
    dt_sim: float = 1e-4     # s integrator step

    def __post_init__(self):
        if self.dt_sim <= 0.0 or self.dt_sim > 1e-4 + 1e-12:
            raise ConfigurationError(f"dt_sim must be in (0, 1e-4], got {self.dt_sim}")
        if min(self.k_t, self.k_s, self.f_init, self.m_out) <= 0.0:
            raise ConfigurationError("k_t, k_s, f_init, m_out must be positive")
        if not self.crank.l_mm > self.crank.r_mm > 0.0:
            raise ConfigurationError(
                f"crank needs l > r > 0, got l={self.crank.l_mm}, r={self.crank.r_mm}")
        if self.lugre.f_s < self.lugre.f_c or self.lugre.f_c <= 0.0:
            raise ConfigurationError("friction levels need f_s >= f_c > 0")
        if self.lugre.v_s <= 0.0 or self.lugre.sigma0 <= 0.0:
            raise ConfigurationError("lugre needs positive v_s and sigma0")

    @property
    def m_eff(self) -> float:
        # kg -> N*s^2/mm so forces in N move positions in mm
        return self.m_out * 1e-3

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(d: dict) -> "PlantParams":
        d = dict(d)
        crank = CrankSlider(**d.pop("crank"))
        lugre = LugreParams(**d.pop("lugre"))
        return PlantParams(crank=crank, lugre=lugre, **d)

    def kernel_args(self) -> tuple:
        lg = self.lugre
        return (
            self.crank.r_mm, self.crank.l_mm, self.k_t, self.c_t, self.k_s,
            self.f_init, self.spring_cap, self.m_eff,
            lg.sigma0, lg.sigma1, lg.sigma2, lg.f_c, lg.f_s, lg.v_s,
            self.dt_sim,
        )


@dataclass
class PlantState:
    x_in: float = 0.0     # mm carriage position
    theta: float = 0.0    # rad crank angle
    x_vib: float = 0.0    # mm vibration displacement (derived)
    x_out: float = 0.0    # mm output position
    v_out: float = 0.0    # mm/s output velocity
    z: float = 0.0        # mm bristle deflection
    t_in: float = 0.0     # N transmitted tension
    t_out: float = 0.0    # N output-side tension


def equilibrium_state(params: PlantParams, theta: float = 0.0) -> PlantState:
    """Rest state with the crank parked: tendon and spring forces balance."""
    x_vib = params.crank.displacement(theta) - params.crank.l_mm
    x_out = params.k_t * x_vib / (params.k_t + params.k_s)
    t = params.f_init + params.k_s * x_out
    return PlantState(
        x_in=0.0, theta=theta, x_vib=x_vib, x_out=x_out,
        v_out=0.0, z=0.0, t_in=t, t_out=t,
    )


def step(state: PlantState, params: PlantParams, u_in_velocity: float,
         vib_omega: float) -> PlantState:
    """Advance one integrator step of params.dt_sim.

    u_in_velocity drives the carriage (mm/s) and vib_omega spins the crank
    (rad/s); both are held over the step.
    """
    (x_in, theta, x_out, v_out, z, t_in, t_out, _f) = _kernels.plant_substep(
        state.x_in, state.theta, state.x_out, state.v_out, state.z,
        float(u_in_velocity), float(vib_omega), *params.kernel_args(),
    )
    if not (math.isfinite(x_out) and abs(x_out) < 1e5):
        raise SimulationDivergedError(0, "state left the trusted range in one step")
    x_vib = crank_displacement(params.crank.r_mm, params.crank.l_mm, theta) - params.crank.l_mm
    return PlantState(x_in=x_in, theta=theta, x_vib=x_vib, x_out=x_out,
                      v_out=v_out, z=z, t_in=t_in, t_out=t_out)


def run_episode(traj_cmd: TimeSeries, params: PlantParams, vib_freq_hz: float,
                control_config=None):
    """Closed-loop episode tracking traj_cmd under the given dither frequency.

    Returns (p_meas, (t_in, t_out)) as TimeSeries aligned with traj_cmd.
    Delegates to the control module, which owns the loop rates.
    """
    from .control import ControlConfig, run_control_loop

    if not 0.0 <= vib_freq_hz <= 100.0:
        raise ConfigurationError(f"vib_freq_hz must be in [0, 100], got {vib_freq_hz}")
    cfg = control_config if control_config is not None else ControlConfig()
    log = run_control_loop(traj_cmd, params, cfg, vib_freq_hz)
    p = TimeSeries(t0=traj_cmd.t0, dt=traj_cmd.dt, values=log.p_meas, unit="mm")
    t_in = TimeSeries(t0=traj_cmd.t0, dt=traj_cmd.dt, values=log.t_in, unit="N")
    t_out = TimeSeries(t0=traj_cmd.t0, dt=traj_cmd.dt, values=log.t_out, unit="N")
    return p, (t_in, t_out)


def dead_band_width(params: PlantParams, vib_freq_hz: float, u: float = 0.15,
                    timeout_s: float = 40.0) -> float:
    """Input displacement consumed before static friction breaks on a slow ramp.

    Breakaway is read from the bristle state: the band ends once |z| first
    carries 90% of the Coulomb level. Under dither the bristle is re-broken
    every revolution, so the width is floored at one dither period of
    commanded travel; that makes the width exactly u/f deep in the
    saturated regime and keeps the measurement free of phase jitter.
    Returns NaN if friction never breaks within timeout_s.
    """
    st = equilibrium_state(params, 0.0)
    omega = 2.0 * math.pi * vib_freq_hz
    z_break = 0.9 * params.lugre.f_c / params.lugre.sigma0
    t = 0.0
    while t < timeout_s:
        st = step(st, params, u, omega)
        t += params.dt_sim
        if abs(st.z) >= z_break:
            floor = 1.0 / vib_freq_hz if vib_freq_hz > 0.0 else 0.0
            return u * max(t, floor)
    return float("nan")


def episode_to_csv(path, traj_cmd: TimeSeries, p_meas: TimeSeries,
                   t_in: TimeSeries, t_out: TimeSeries) -> None:
    """Plant-level episode export: t_s,p_cmd_mm,p_meas_mm,T_in_N,T_out_N."""
    t = traj_cmd.t
    lines = ["t_s,p_cmd_mm,p_meas_mm,T_in_N,T_out_N"]
    for i in range(traj_cmd.n):
        lines.append(
            f"{t[i]:.12g},{traj_cmd.values[i]:.12g},{p_meas.values[i]:.12g},"
            f"{t_in.values[i]:.12g},{t_out.values[i]:.12g}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
