"""Compiled inner loops for the plant integrator and the multi-rate episode.

Everything here is scalar float64 math under numba so that a 272 s episode at
a 1e-4 s integrator step stays in the tens of milliseconds. The Python-facing
modules wrap these kernels; the math lives only here so the single-step API
and the episode runner cannot drift apart.

Integrator notes. The output body obeys

    m * a = T - F_spring - F_friction

with LuGre friction F = sigma0*z + sigma1*zdot + sigma2*v. The damping terms
are far stiffer than the 1e-4 s step allows explicitly, so the velocity
update is semi-implicit: the parts of the friction linear in the new velocity
(sigma1*zdot's v term and sigma2*v) move to the left-hand side, with the
bristle decay coefficient frozen at the old velocity. The bristle state then
advances by the exact exponential solution of zdot = v - z/tau holding v at
its new value. Positions update with the new velocity (symplectic ordering).
Masses are given in kg while forces are N and lengths mm, hence the 1e-3
conversion to N*s^2/mm inside the wrappers (m_eff).
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

# loop priorities at equal timestamps: motion < control < observation
# (encoded by statement order inside the substep loop below)


@njit(cache=True)
def crank_disp(r, l, theta):
    s = math.sin(theta)
    return r * math.cos(theta) + math.sqrt(l * l - r * r * s * s)


@njit(cache=True)
def crank_dvel(r, l, theta, omega):
    # d/dt of crank_disp: chain rule through theta
    s = math.sin(theta)
    c = math.cos(theta)
    root = math.sqrt(l * l - r * r * s * s)
    return (-r * s - (r * r * s * c) / root) * omega


@njit(cache=True)
def plant_substep(
    x_in, theta, x_out, v_out, z,
    u, omega,
    r, l, k_t, c_t, k_s, f_init, spring_cap, m_eff,
    s0, s1, s2, f_c, f_s, v_s, dt,
):
    """One integrator step. Returns the new state and the step's forces.

    (x_in, theta, x_out, v_out, z, T_in, T_out, F_fric)
    """
    x_in = x_in + u * dt
    theta = theta + omega * dt
    s_th = math.sin(theta)
    c_th = math.cos(theta)
    root = math.sqrt(l * l - r * r * s_th * s_th)
    x_vib = r * c_th + root - l
    dx_vib = (-r * s_th - (r * r * s_th * c_th) / root) * omega

    stretch = x_in + x_vib - x_out
    # tension without the -c_t*v_out part, which joins the implicit solve
    t_free = f_init + k_t * stretch + c_t * (u + dx_vib)

    f_spring = f_init + k_s * x_out
    if f_spring > spring_cap:
        f_spring = spring_cap
    if f_spring < 0.0:
        f_spring = 0.0

    g = f_c + (f_s - f_c) * math.exp(-(v_out / v_s) * (v_out / v_s))
    decay = s0 * abs(v_out) / g
    rhs0 = m_eff * v_out / dt - f_spring - s0 * z + s1 * decay * z
    v_new = (rhs0 + t_free) / (m_eff / dt + s1 + s2 + c_t)
    t_in = t_free - c_t * v_new
    if t_in < 0.0:
        # slack tendon: the sheath cannot push, redo the solve with T = 0
        t_in = 0.0
        v_new = rhs0 / (m_eff / dt + s1 + s2)
    f_fric = s0 * z + s1 * (v_new - decay * z) + s2 * v_new

    g2 = f_c + (f_s - f_c) * math.exp(-(v_new / v_s) * (v_new / v_s))
    av = abs(v_new)
    if av > 1e-12:
        tau = g2 / (s0 * av)
        z_ss = v_new * tau
        z = z_ss + (z - z_ss) * math.exp(-dt / tau)
    else:
        z = z + v_new * dt

    x_out = x_out + v_new * dt
    t_out = f_init + k_s * x_out
    if t_out > spring_cap:
        t_out = spring_cap
    if t_out < 0.0:
        t_out = 0.0
    return x_in, theta, x_out, v_new, z, t_in, t_out, f_fric


@njit(cache=True)
def pid_tick(e, integral, prev_e, kp, ki, kd, dt, out_limit):
    """One PID update with a clamped integral. Returns (command, integral, e)."""
    integral = integral + e * dt
    if ki > 0.0:
        bound = out_limit / ki
        if integral > bound:
            integral = bound
        elif integral < -bound:
            integral = -bound
    u = kp * e + ki * integral + kd * (e - prev_e) / dt
    if u > out_limit:
        u = out_limit
    elif u < -out_limit:
        u = -out_limit
    return u, integral, e


@njit(cache=True)
def run_episode_kernel(
    q_ref,
    # rates and filter
    rate_motion, rate_control, lpf_window,
    # motion PID, vibration PID
    kp_m, ki_m, kd_m, kp_v, ki_v, kd_v,
    vib_freq_hz,
    # actuator model
    tau_act, v_limit, omega_limit,
    # plant parameters
    r, l, k_t, c_t, k_s, f_init, spring_cap, m_eff,
    s0, s1, s2, f_c, f_s, v_s, dt,
    settle_s,
):
    """Full multi-rate episode: settle phase, then the commanded trajectory.

    The motion loop ticks at rate_motion (pushing q_ref samples through a
    moving-average filter and differentiating), the two PID velocity loops at
    rate_control, and observation rows are written at rate_motion aligned
    with the command samples. Ticks landing on the same integrator substep
    execute motion first, then control, then observation.

    Returns (status, bad_step, q_d, x_in, p_meas_raw, t_in, t_out, v_ref_log,
    v_act_log, dissipation, p_offset). status != 0 flags divergence at
    bad_step. p_meas_raw is the un-zeroed output position; subtract p_offset
    (the mean output over the settle tail, i.e. the encoder zeroing done
    after vibration spin-up) to get the reported measurement.
    """
    n = q_ref.shape[0]
    q_d_log = np.zeros(n)
    x_in_log = np.zeros(n)
    p_raw_log = np.zeros(n)
    t_in_log = np.zeros(n)
    t_out_log = np.zeros(n)
    v_ref_log = np.zeros(n)
    v_act_log = np.zeros(n)

    # plant state
    x_in = 0.0
    theta = 0.0
    x_out = 0.0
    v_out = 0.0
    z = 0.0
    t_in = f_init
    t_out = f_init
    dissipation = 0.0

    # start on the tendon/spring equilibrium for the parked crank so the
    # settle phase only has to absorb the vibration spin-up
    x_vib0 = crank_disp(r, l, 0.0) - l
    x_out = k_t * x_vib0 / (k_t + k_s)

    # control state
    dt_c = 1.0 / rate_control
    alpha = 1.0 - math.exp(-dt_c / tau_act)
    v_act = 0.0
    omega_act = 0.0
    i_m = 0.0
    pe_m = 0.0
    i_v = 0.0
    pe_v = 0.0
    omega_ref = 2.0 * math.pi * vib_freq_hz

    # moving-average window, pre-filled with the first command
    win = np.full(lpf_window, q_ref[0])
    win_pos = 0
    win_sum = q_ref[0] * lpf_window
    q_d = q_ref[0]
    q_d_prev = q_ref[0]
    v_ref = 0.0

    # ---- settle phase: hold q_ref[0], spin the crank up, then zero ----
    settle_steps = int(round(settle_s / dt))
    tail = max(1, settle_steps // 5)
    acc = 0.0
    acc_n = 0
    next_ctrl = 0
    k_ctrl = 0
    for s in range(settle_steps):
        if s == next_ctrl:
            e_v = omega_ref - omega_act
            u_v, i_v, pe_v = pid_tick(e_v, i_v, pe_v, kp_v, ki_v, kd_v, dt_c, omega_limit)
            omega_act = omega_act + (u_v - omega_act) * alpha
            e_m = 0.0 - v_act
            u_m, i_m, pe_m = pid_tick(e_m, i_m, pe_m, kp_m, ki_m, kd_m, dt_c, v_limit)
            v_act = v_act + (u_m - v_act) * alpha
            k_ctrl += 1
            next_ctrl = int(round(k_ctrl * rate_control ** -1 / dt))
        x_in, theta, x_out, v_out, z, t_in, t_out, ffr = plant_substep(
            x_in, theta, x_out, v_out, z, v_act, omega_act,
            r, l, k_t, c_t, k_s, f_init, spring_cap, m_eff,
            s0, s1, s2, f_c, f_s, v_s, dt,
        )
        dissipation += ffr * v_out * dt
        if s >= settle_steps - tail:
            acc += x_out
            acc_n += 1
    p_offset = acc / acc_n if acc_n > 0 else 0.0
    x_in_offset = x_in  # carriage may creep during settle; re-zero command frame

    # ---- main phase ----
    steps_per_motion = 1.0 / (rate_motion * dt)
    total = int(round((n - 1) * steps_per_motion)) + 1
    k_mot = 0
    next_mot = 0
    k_obs = 0
    next_obs = 0
    k_ctrl = 0
    next_ctrl = 0
    status = 0
    bad_step = -1
    for s in range(total):
        if k_mot < n and s == next_mot:
            # motion tick: filter the next command sample, differentiate
            win_sum -= win[win_pos]
            win[win_pos] = q_ref[k_mot]
            win_sum += q_ref[k_mot]
            win_pos = (win_pos + 1) % lpf_window
            q_d_prev = q_d
            q_d = win_sum / lpf_window
            v_ref = (q_d - q_d_prev) * rate_motion
            k_mot += 1
            next_mot = int(round(k_mot * steps_per_motion))
        if s == next_ctrl:
            e_v = omega_ref - omega_act
            u_v, i_v, pe_v = pid_tick(e_v, i_v, pe_v, kp_v, ki_v, kd_v, dt_c, omega_limit)
            omega_act = omega_act + (u_v - omega_act) * alpha
            e_m = v_ref - v_act
            u_m, i_m, pe_m = pid_tick(e_m, i_m, pe_m, kp_m, ki_m, kd_m, dt_c, v_limit)
            v_act = v_act + (u_m - v_act) * alpha
            k_ctrl += 1
            next_ctrl = int(round(k_ctrl / (rate_control * dt)))
        if k_obs < n and s == next_obs:
            q_d_log[k_obs] = q_d
            x_in_log[k_obs] = x_in - x_in_offset
            p_raw_log[k_obs] = x_out
            t_in_log[k_obs] = t_in
            t_out_log[k_obs] = t_out
            v_ref_log[k_obs] = v_ref
            v_act_log[k_obs] = v_act
            if not math.isfinite(x_out) or abs(x_out) > 1e5:
                status = 1
                bad_step = k_obs
                break
            k_obs += 1
            next_obs = int(round(k_obs * steps_per_motion))
        x_in, theta, x_out, v_out, z, t_in, t_out, ffr = plant_substep(
            x_in, theta, x_out, v_out, z, v_act, omega_act,
            r, l, k_t, c_t, k_s, f_init, spring_cap, m_eff,
            s0, s1, s2, f_c, f_s, v_s, dt,
        )
        dissipation += ffr * v_out * dt

    return (
        status, bad_step, q_d_log, x_in_log, p_raw_log, t_in_log, t_out_log,
        v_ref_log, v_act_log, dissipation, p_offset,
    )
