"""Numba kernels for the per-sample recurrences (delay-line loop, SL
integrator, closed PLL loops).  Pure-array in/out; wrapped by tdo.py and
pll.py.  No RNG inside: noise sequences are precomputed by the caller."""

import numpy as np
from numba import njit

TWO_PI = 2.0 * np.pi


@njit(cache=True, inline="always")
def abs2(z):
    return z.real * z.real + z.imag * z.imag


@njit(cache=True)
def sl_run_split(z0, v, dt, tau, mu, out):
    z = z0
    e = np.exp(-2.0 * mu * dt / tau)
    for i in range(v.shape[0]):
        ang = v[i] * dt / tau
        z = z * complex(np.cos(ang), np.sin(ang))
        r2 = z.real * z.real + z.imag * z.imag
        z = z * (1.0 / np.sqrt(r2 + (1.0 - r2) * e))
        out[i] = z
    return z


@njit(cache=True)
def sl_run_real(x0, y0, v, dt, tau, mu, out_x, out_y):
    x = x0
    y = y0
    e = np.exp(-2.0 * mu * dt / tau)
    for i in range(v.shape[0]):
        ang = v[i] * dt / tau
        c = np.cos(ang)
        s = np.sin(ang)
        xr = x * c - y * s
        yr = x * s + y * c
        r2 = xr * xr + yr * yr
        g = 1.0 / np.sqrt(r2 + (1.0 - r2) * e)
        x = xr * g
        y = yr * g
        out_x[i] = x
        out_y[i] = y


@njit(cache=True)
def sl_run_rk4(z0, v, dt, tau, mu, out):
    z = z0
    for i in range(v.shape[0]):
        vi = v[i]
        k1 = (mu * (1.0 - abs2(z)) * z + 1j * vi * z) / tau
        z2 = z + 0.5 * dt * k1
        k2 = (mu * (1.0 - abs2(z2)) * z2 + 1j * vi * z2) / tau
        z3 = z + 0.5 * dt * k2
        k3 = (mu * (1.0 - abs2(z3)) * z3 + 1j * vi * z3) / tau
        z4 = z + dt * k3
        k4 = (mu * (1.0 - abs2(z4)) * z4 + 1j * vi * z4) / tau
        z = z + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i] = z


# Tuning drive modes for the open-loop kernel.
TUNE_STATIC = 0
TUNE_THETA_TRAJ = 1
TUNE_SL_SWEEP = 2


@njit(cache=True)
def tdo_open_loop(n, dt, buf, w0, res0, a_res, g0, psat,
                  mode, z_static, theta_traj,
                  sw_a, sw_om, sl_tau, sl_mu, zsl0,
                  drift_rate, dphi, out):
    """Open-loop delay-line oscillator run.

    Loop order per sample: pop -> resonator -> amp (output tap) -> tuning ->
    drift/noise phase -> push.  Returns (status, w, res_state, zsl); status
    is -1 on success or the sample index where |x| exceeded the divergence
    guard.
    """
    L = buf.shape[0]
    w = w0
    yres = res0
    zsl = zsl0
    e_sl = np.exp(-2.0 * sl_mu * dt / sl_tau)
    have_noise = dphi.shape[0] > 0
    for i in range(n):
        x = buf[w]
        yres = a_res * yres + (1.0 - a_res) * x
        y = yres * (g0 / np.sqrt(1.0 + abs2(yres) / psat))
        out[i] = y

        if mode == TUNE_STATIC:
            zt = z_static
        elif mode == TUNE_THETA_TRAJ:
            th = theta_traj[i]
            zt = complex(np.cos(th), np.sin(th))
        else:
            v = sw_a * np.cos(sw_om * (i * dt))
            ang = v * dt / sl_tau
            zsl = zsl * complex(np.cos(ang), np.sin(ang))
            r2 = abs2(zsl)
            zsl = zsl * (1.0 / np.sqrt(r2 + (1.0 - r2) * e_sl))
            zt = zsl

        ph = drift_rate * (i * dt)
        if have_noise:
            ph += dphi[i]
        y = y * zt * complex(np.cos(ph), np.sin(ph))
        if abs2(y) > 1.0e4:
            return i, w, yres, zsl
        buf[w] = y
        w += 1
        if w == L:
            w = 0
    return -1, w, yres, zsl


PLL_SCALAR = 0
PLL_VECTOR = 1

PLL_OK = -1
PLL_DIVERGED = 1
PLL_RESTORATION_FAILED = 2


@njit(cache=True)
def pll_closed_loop(mode, n, dt, buf, w0, res0, a_res, g0, psat,
                    drift_rate, dphi, phi_ref,
                    n_div, clamp, kp_set, ti_set, sl_tau, sl_mu,
                    avg_len, pole_alphas,
                    decim,
                    eps_out, ctrl_out, env_out, zx_out, zy_out, wind_out):
    """Closed-loop PLL around the delay-line oscillator.

    mode 0 (scalar): bounded phase shifter driven by a PI controller;
    ctrl_out carries the unclamped commanded phase.  mode 1 (vector):
    the PI integral path is realised by the Stuart-Landau integrator whose
    state drives the vector modulator; the proportional phase is applied as
    an extra Cartesian rotation of the modulator control; ctrl_out carries
    the SL drive v.  The clamped detector output is averaged over avg_len
    samples (one round trip nulls comb-beat components exactly) before the
    controller; eps_out records that averaged error.

    zx/zy/wind are written every ``decim`` samples (vector mode).
    Returns (status, index): status PLL_OK, PLL_DIVERGED, or
    PLL_RESTORATION_FAILED.
    """
    L = buf.shape[0]
    w = w0
    yres = res0
    prev = buf[(w - 1) % L]
    phi_osc = np.arctan2(prev.imag, prev.real)
    integ = 0.0
    zsl = 1.0 + 0.0j
    cum_wind = 0.0
    e_sl = np.exp(-2.0 * sl_mu * dt / sl_tau)
    # round-trip boxcar on the clamped detector output
    ehist = np.zeros(avg_len)
    esum = 0.0
    ei = 0
    eps_f = 0.0
    n_pole = pole_alphas.shape[0]
    pstate = np.zeros(4)
    have_noise = dphi.shape[0] > 0
    j = 0
    for i in range(n):
        if mode == PLL_SCALAR:
            p_cmd = -(kp_set * eps_f + integ)
            p = min(max(p_cmd, -np.pi), np.pi)
            zt = complex(np.cos(p), np.sin(p))
            ctrl_out[i] = p_cmd
        else:
            v = -eps_f * (sl_tau / ti_set)
            ang = v * dt / sl_tau
            zsl = zsl * complex(np.cos(ang), np.sin(ang))
            r2 = abs2(zsl)
            zsl = zsl * (1.0 / np.sqrt(r2 + (1.0 - r2) * e_sl))
            if r2 < 0.25 or r2 > 2.25:
                return PLL_RESTORATION_FAILED, i
            cum_wind += ang
            pp = -kp_set * eps_f
            zt = zsl * complex(np.cos(pp), np.sin(pp))
            ctrl_out[i] = v
            if i % decim == 0:
                zx_out[j] = zsl.real
                zy_out[j] = zsl.imag
                wind_out[j] = cum_wind / TWO_PI
                j += 1

        x = buf[w]
        yres = a_res * yres + (1.0 - a_res) * x
        y = yres * (g0 / np.sqrt(1.0 + abs2(yres) / psat))
        env = y
        ph = drift_rate * (i * dt)
        if have_noise:
            ph += dphi[i]
        y = y * zt * complex(np.cos(ph), np.sin(ph))
        if abs2(y) > 1.0e4:
            return PLL_DIVERGED, i
        buf[w] = y
        w += 1
        if w == L:
            w = 0

        d = env * np.conj(prev)
        phi_osc += np.arctan2(d.imag, d.real)
        prev = env
        eps = (phi_osc - phi_ref[i]) / n_div
        if eps > clamp:
            eps = clamp
        elif eps < -clamp:
            eps = -clamp
        if avg_len > 1:
            esum += eps - ehist[ei]
            ehist[ei] = eps
            ei += 1
            if ei == avg_len:
                ei = 0
            eps_f = esum / avg_len
        else:
            eps_f = eps
        for k in range(n_pole):
            pstate[k] = pole_alphas[k] * pstate[k] \
                + (1.0 - pole_alphas[k]) * eps_f
            eps_f = pstate[k]
        if mode == PLL_SCALAR:
            integ += eps_f * dt / ti_set
        eps_out[i] = eps_f
        env_out[i] = env
    return PLL_OK, n
