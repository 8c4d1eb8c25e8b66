"""Compiled scalar kernels: pulse shapes and the DOP853 propagator.

Pulse parameters travel through the kernels as one flat float64 vector laid out
by the ``P_*`` indices below, so a batch of pulses is a 2-D array with one row
per pulse. The Butcher tableau and dense-output coefficients are scipy's
DOP853 tables; only the stepping loop lives here.
"""

import math

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

P_T = 0
P_OMEGA0 = 1
P_N = 2
P_SHAPE = 3
P_K = 4  # k1..k5 occupy 4..8
P_GAMMA = 9  # gamma1, gamma2 occupy 9..10
P_DELTA = 11
P_EC = 12
P_RATIO = 13
P_SIGN = 14
P_ENV_KIND = 15
P_DET_KIND = 16
P_ENV_NORM = 17  # 1 - e^beta or 1 - sech(epsilon), cached by the packer
N_PARAMS = 18

ENV_SUPER_GAUSSIAN = 0
ENV_SECH = 1

DET_LINEAR = 0
DET_QUINTIC = 1
DET_TANH = 2
DET_TANH_SECH = 3

STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1
STATUS_MAX_STEPS = 2

TWO_PI = 2.0 * math.pi

_NS = _dop.N_STAGES
_A = np.ascontiguousarray(_dop.A[:_NS, :_NS])
_B = np.ascontiguousarray(_dop.B)
_C = np.ascontiguousarray(_dop.C[:_NS])
_E3 = np.ascontiguousarray(_dop.E3)
_E5 = np.ascontiguousarray(_dop.E5)
_D = np.ascontiguousarray(_dop.D)
_A_EXTRA = np.ascontiguousarray(_dop.A[_NS + 1 :])
_C_EXTRA = np.ascontiguousarray(_dop.C[_NS + 1 :])
_NS_EXT = _dop.N_STAGES_EXTENDED

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_ERR_EXP = -1.0 / 8.0


@njit(cache=True)
def _one_minus_sech(y):
    # cancellation-free for small y
    if y < 0.5:
        s = math.sinh(0.5 * y)
        return 2.0 * s * s / math.cosh(y)
    return 1.0 - 1.0 / math.cosh(y)


@njit(cache=True)
def envelope_norm(kind, shape):
    if kind == ENV_SUPER_GAUSSIAN:
        return -math.expm1(shape)
    return _one_minus_sech(shape)


@njit(cache=True)
def envelope(p, t):
    x = abs(2.0 * t / p[P_T])
    u = x ** p[P_N] if x > 0.0 else 0.0
    shape = p[P_SHAPE]
    if int(p[P_ENV_KIND]) == ENV_SUPER_GAUSSIAN:
        # (e^{bu} - e^b)/(1 - e^b) == 1 + expm1(bu)/(1 - e^b)
        return p[P_OMEGA0] * (1.0 + math.expm1(shape * u) / p[P_ENV_NORM])
    return p[P_OMEGA0] * (1.0 - _one_minus_sech(shape * u) / p[P_ENV_NORM])


@njit(cache=True)
def detuning(p, t):
    x = 2.0 * t / p[P_T]
    kind = int(p[P_DET_KIND])
    if kind == DET_LINEAR:
        val = p[P_K] * x
    elif kind == DET_QUINTIC:
        val = 0.0
        for j in range(4, -1, -1):
            val = (val + p[P_K + j]) * x
    elif kind == DET_TANH:
        val = p[P_K] * math.tanh(p[P_GAMMA] * x)
    else:
        val = p[P_K] * math.tanh(p[P_GAMMA] * x) + p[P_K + 1] * (
            1.0 / math.cosh(p[P_GAMMA + 1] * x) - 1.0
        )
    return val + p[P_DELTA]


@njit(cache=True)
def detuning_rate(p, t):
    """Analytic time derivative of the detuning, GHz/ns."""
    T = p[P_T]
    x = 2.0 * t / T
    kind = int(p[P_DET_KIND])
    if kind == DET_LINEAR:
        dx = p[P_K]
    elif kind == DET_QUINTIC:
        dx = 0.0
        for j in range(4, -1, -1):
            dx = dx * x + (j + 1) * p[P_K + j]
    else:
        g1 = p[P_GAMMA]
        s1 = 1.0 / math.cosh(g1 * x)
        dx = p[P_K] * g1 * s1 * s1
        if kind == DET_TANH_SECH:
            g2 = p[P_GAMMA + 1]
            dx -= p[P_K + 1] * g2 * math.tanh(g2 * x) / math.cosh(g2 * x)
    return 2.0 * dx / T


@njit(cache=True)
def _rhs(p, t, y, out):
    om = envelope(p, t)
    d = p[P_SIGN] * detuning(p, t)
    h01 = 0.5 * om
    h12 = 0.5 * p[P_RATIO] * om
    w = -1j * TWO_PI
    y0 = y[0]
    y1 = y[1]
    y2 = y[2]
    out[0] = w * (-d * y0 + h01 * y1)
    out[1] = w * (h01 * y0 + h12 * y2)
    out[2] = w * (h12 * y1 + (d - p[P_EC]) * y2)


@njit(cache=True)
def _scaled_norm(v, scale):
    acc = 0.0
    for i in range(v.shape[0]):
        a = abs(v[i]) / scale[i]
        acc += a * a
    return math.sqrt(acc / v.shape[0])


@njit(cache=True)
def _initial_step(p, t0, t1, y0, f0, rtol, atol):
    n = y0.shape[0]
    scale = np.empty(n)
    for i in range(n):
        scale[i] = atol + abs(y0[i]) * rtol
    d0 = _scaled_norm(y0, scale)
    d1 = _scaled_norm(f0, scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, abs(t1 - t0))
    y1 = y0 + h0 * f0
    f1 = np.empty(n, dtype=np.complex128)
    _rhs(p, t0 + h0, y1, f1)
    d2 = _scaled_norm(f1 - f0, scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1, abs(t1 - t0))


@njit(cache=True)
def _integrate(p, t0, t1, y0, rtol, atol, t_out, y_out, out_start, max_steps):
    """Advance y0 from t0 to t1 (t1 > t0), filling y_out rows for t_out in (t0, t1].

    Returns (y_final, status, t_at_exit, n_rhs, next_out_index).
    """
    n = 3
    K = np.empty((_NS_EXT, n), dtype=np.complex128)
    y = y0.copy()
    f = np.empty(n, dtype=np.complex128)
    _rhs(p, t0, y, f)
    nfev = 1
    h_abs = _initial_step(p, t0, t1, y, f, rtol, atol)
    nfev += 1
    t = t0
    k_out = out_start
    n_out = t_out.shape[0]
    y_new = np.empty(n, dtype=np.complex128)
    f_new = np.empty(n, dtype=np.complex128)
    ytmp = np.empty(n, dtype=np.complex128)
    scale = np.empty(n)
    F = np.empty((7, n), dtype=np.complex128)
    steps = 0
    while t < t1:
        if steps >= max_steps:
            return y, STATUS_MAX_STEPS, t, nfev, k_out
        min_step = 10.0 * abs(np.nextafter(t, np.inf) - t)
        if h_abs < min_step:
            h_abs = min_step
        accepted = False
        rejected = False
        h = 0.0
        t_new = t
        while not accepted:
            if h_abs < min_step:
                return y, STATUS_STEP_UNDERFLOW, t, nfev, k_out
            t_new = t + h_abs
            if t_new > t1:
                t_new = t1
            h = t_new - t
            h_abs = h
            for j in range(n):
                K[0, j] = f[j]
            for s in range(1, _NS):
                for j in range(n):
                    acc = 0j
                    for q in range(s):
                        acc += K[q, j] * _A[s, q]
                    ytmp[j] = y[j] + h * acc
                _rhs(p, t + _C[s] * h, ytmp, K[s])
            for j in range(n):
                acc = 0j
                for q in range(_NS):
                    acc += K[q, j] * _B[q]
                y_new[j] = y[j] + h * acc
            _rhs(p, t + h, y_new, f_new)
            nfev += _NS
            for j in range(n):
                K[_NS, j] = f_new[j]
                scale[j] = atol + max(abs(y[j]), abs(y_new[j])) * rtol
            e5 = 0.0
            e3 = 0.0
            for j in range(n):
                a5 = 0j
                a3 = 0j
                for q in range(_NS + 1):
                    a5 += K[q, j] * _E5[q]
                    a3 += K[q, j] * _E3[q]
                r5 = abs(a5) / scale[j]
                r3 = abs(a3) / scale[j]
                e5 += r5 * r5
                e3 += r3 * r3
            if e5 == 0.0 and e3 == 0.0:
                err = 0.0
            else:
                err = h * e5 / math.sqrt((e5 + 0.01 * e3) * n)
            if err < 1.0:
                if err == 0.0:
                    factor = _MAX_FACTOR
                else:
                    factor = min(_MAX_FACTOR, _SAFETY * err**_ERR_EXP)
                if rejected:
                    factor = min(1.0, factor)
                h_abs *= factor
                accepted = True
            else:
                h_abs *= max(_MIN_FACTOR, _SAFETY * err**_ERR_EXP)
                rejected = True
        steps += 1
        if k_out < n_out and t_out[k_out] <= t_new:
            # dense output on (t, t_new]
            for s in range(_NS + 1, _NS_EXT):
                a = _A_EXTRA[s - _NS - 1]
                for j in range(n):
                    acc = 0j
                    for q in range(s):
                        acc += K[q, j] * a[q]
                    ytmp[j] = y[j] + h * acc
                _rhs(p, t + _C_EXTRA[s - _NS - 1] * h, ytmp, K[s])
            nfev += _NS_EXT - _NS - 1
            for j in range(n):
                dy = y_new[j] - y[j]
                F[0, j] = dy
                F[1, j] = h * f[j] - dy
                F[2, j] = 2.0 * dy - h * (f_new[j] + f[j])
                for r in range(4):
                    acc = 0j
                    for q in range(_NS_EXT):
                        acc += _D[r, q] * K[q, j]
                    F[3 + r, j] = h * acc
            while k_out < n_out and t_out[k_out] <= t_new:
                x = (t_out[k_out] - t) / h
                for j in range(n):
                    acc = 0j
                    for r in range(6, -1, -1):
                        acc += F[r, j]
                        if (6 - r) % 2 == 0:
                            acc *= x
                        else:
                            acc *= 1.0 - x
                    y_out[k_out, j] = y[j] + acc
                k_out += 1
        for j in range(n):
            y[j] = y_new[j]
            f[j] = f_new[j]
        t = t_new
    return y, STATUS_OK, t, nfev, k_out


@njit(cache=True, nogil=True)
def propagate(p, y0, rtol, atol, t_out, y_out, max_steps):
    """Integrate over [-T/2, T/2], restarting at t = 0 where |2t/T|^n may have a cusp.

    ``t_out`` must be ascending within the pulse window. Returns
    (y_final, status, t_fail, n_rhs).
    """
    half = 0.5 * p[P_T]
    k = 0
    n_out = t_out.shape[0]
    while k < n_out and t_out[k] <= -half:
        for j in range(3):
            y_out[k, j] = y0[j]
        k += 1
    y_mid, status, t_end, nf1, k = _integrate(
        p, -half, 0.0, y0, rtol, atol, t_out, y_out, k, max_steps
    )
    if status != STATUS_OK:
        return y_mid, status, t_end, nf1
    y_fin, status, t_end, nf2, k = _integrate(
        p, 0.0, half, y_mid, rtol, atol, t_out, y_out, k, max_steps
    )
    return y_fin, status, t_end, nf1 + nf2


@njit(cache=True, nogil=True)
def final_populations(pbatch, rtol, atol, max_steps, pops, status, t_fail):
    """Propagate |g> under every row of ``pbatch``; write end-of-pulse populations."""
    y0 = np.zeros(3, dtype=np.complex128)
    y0[0] = 1.0
    t_out = np.empty(0)
    y_out = np.empty((0, 3), dtype=np.complex128)
    for i in range(pbatch.shape[0]):
        y, st, tf, _ = propagate(pbatch[i], y0, rtol, atol, t_out, y_out, max_steps)
        status[i] = st
        t_fail[i] = tf
        for j in range(3):
            pops[i, j] = y[j].real ** 2 + y[j].imag ** 2


@njit(cache=True)
def envelope_array(p, t):
    out = np.empty(t.shape[0])
    for i in range(t.shape[0]):
        out[i] = envelope(p, t[i])
    return out


@njit(cache=True)
def detuning_array(p, t):
    out = np.empty(t.shape[0])
    for i in range(t.shape[0]):
        out[i] = detuning(p, t[i])
    return out


@njit(cache=True)
def detuning_rate_array(p, t):
    out = np.empty(t.shape[0])
    for i in range(t.shape[0]):
        out[i] = detuning_rate(p, t[i])
    return out
