"""Cylindrical Bessel and Hankel functions of integer order.

Orders 0 and 1 are evaluated directly in three regimes: the ascending
power series for ``x <= 8``, Neumann series built from a Miller backward
recurrence for ``8 < x <= 20``, and the Hankel asymptotic expansion above.
The middle regime exists because the power series loses about three digits
to cancellation near ``x = 12`` while the asymptotic expansion is not yet
converged there.  Higher orders use forward recurrence for ``Y_n`` and
Miller's backward recurrence for ``J_n``.

The scalar kernels are compiled with numba so the boundary-integral assembly
in :mod:`phaseless_bayes.forward` can call them from inside its own loops.
"""

from __future__ import annotations

import math

import numba
import numpy as np

SERIES_SWITCH = 8.0
ASYMPTOTIC_SWITCH = 20.0
X_MAX = 1.0e4
Y_MIN_ARG = 1.0e-8
MAX_ORDER = 60

_EULER_GAMMA = 0.57721566490153286061
_TWO_OVER_PI = 2.0 / math.pi


class BesselDomainError(ValueError):
    """Argument or order outside the supported range."""


@numba.njit(cache=True, fastmath=False)
def _series01(x):
    # J0, J1, Y0, Y1 from the ascending series; accurate for 0 < x <= 8.
    q = 0.25 * x * x
    half = 0.5 * x
    # k = 0 terms
    t0 = 1.0          # (-q)^k / (k!)^2
    t1 = 1.0          # (-q)^k / (k! (k+1)!)
    j0 = 1.0
    j1s = 1.0
    harm = 0.0        # H_k
    y0s = 0.0
    y1s = -2.0 * _EULER_GAMMA + 1.0  # psi(1) + psi(2) at k = 0, times t1
    k = 0
    while True:
        k += 1
        t0 *= -q / (k * k)
        t1 *= -q / (k * (k + 1.0))
        harm += 1.0 / k
        j0 += t0
        j1s += t1
        y0s -= harm * t0
        y1s += (-2.0 * _EULER_GAMMA + harm + harm + 1.0 / (k + 1.0)) * t1
        if k > half and abs(t0) * (1.0 + harm) < 1e-17 and abs(t1) * (2.0 + harm) < 1e-17:
            break
        if k > 200:
            break
    j1 = half * j1s
    lg = math.log(half)
    y0 = _TWO_OVER_PI * ((lg + _EULER_GAMMA) * j0 + y0s)
    y1 = _TWO_OVER_PI * lg * j1 - _TWO_OVER_PI / x - half * y1s / math.pi
    return j0, j1, y0, y1


@numba.njit(cache=True)
def _asymptotic_pq(n, x):
    mu = 4.0 * n * n
    p = 1.0
    q = 0.0
    a = 1.0
    prev = 1.0
    k = 1
    while k < 80:
        a = a * (mu - (2.0 * k - 1.0) ** 2) / (k * 8.0 * x)
        mag = abs(a)
        if mag > prev:
            break
        r = k % 4
        if r == 1:
            q += a
        elif r == 2:
            p -= a
        elif r == 3:
            q -= a
        else:
            p += a
        if mag < 1e-17:
            break
        prev = mag
        k += 1
    return p, q


@numba.njit(cache=True)
def _asymptotic01(x):
    amp = math.sqrt(_TWO_OVER_PI / x)
    p0, q0 = _asymptotic_pq(0, x)
    p1, q1 = _asymptotic_pq(1, x)
    c0 = x - 0.25 * math.pi
    c1 = x - 0.75 * math.pi
    s0, co0 = math.sin(c0), math.cos(c0)
    s1, co1 = math.sin(c1), math.cos(c1)
    j0 = amp * (p0 * co0 - q0 * s0)
    y0 = amp * (p0 * s0 + q0 * co0)
    j1 = amp * (p1 * co1 - q1 * s1)
    y1 = amp * (p1 * s1 + q1 * co1)
    return j0, j1, y0, y1


@numba.njit(cache=True)
def _neumann01(x):
    # Miller recurrence for J_m, m <= top, then
    #   Y0 = (2/pi)(ln(x/2) + gamma) J0 - (4/pi) sum_k (-1)^k J_2k / k
    #   Y1 = -Y0' = (2/pi)((ln(x/2) + gamma) J1 - J0 / x)
    #        + (2/pi) sum_k (-1)^k (J_2k-1 - J_2k+1) / k
    top = int(x) + 20 + int(math.sqrt(40.0 * x))
    if top % 2:
        top += 1
    jp1 = 0.0
    j = 1.0e-30
    norm = 0.0
    s0 = 0.0
    s1 = 0.0
    j_odd_above = 0.0   # J_{2k+1} for the pending even index 2k
    for m in range(top, 0, -1):
        jm1 = 2.0 * m / x * j - jp1
        jp1 = j
        j = jm1
        i = m - 1
        if i > 0 and i % 2 == 0:
            kk = i // 2
            sign = 1.0 if kk % 2 == 0 else -1.0
            norm += 2.0 * j
            s0 += sign * j / kk
            # J_{2k+1} is jp1 here; J_{2k-1} arrives next step
            j_odd_above = jp1
        elif i % 2 == 1:
            kk = (i + 1) // 2
            sign = 1.0 if kk % 2 == 0 else -1.0
            s1 += sign * (j - j_odd_above) / kk
    norm += j
    j0 = j / norm
    j1 = jp1 / norm
    s0 /= norm
    s1 /= norm
    lg = math.log(0.5 * x) + _EULER_GAMMA
    y0 = _TWO_OVER_PI * (lg * j0 - 2.0 * s0)
    y1 = _TWO_OVER_PI * (lg * j1 - j0 / x + s1)
    return j0, j1, y0, y1


@numba.njit(cache=True)
def bessel01(x):
    """Return ``(J0, J1, Y0, Y1)`` at ``x > 0`` (no argument checking)."""
    if x <= SERIES_SWITCH:
        return _series01(x)
    if x <= ASYMPTOTIC_SWITCH:
        return _neumann01(x)
    return _asymptotic01(x)


@numba.njit(cache=True)
def _jn_miller(n, x):
    # Backward recurrence from an even start order, normalised with
    # 1 = J0 + 2 * sum_k J_2k.
    if n == 0:
        return bessel01(x)[0]
    if n == 1:
        return bessel01(x)[1]
    top = max(n, int(x)) + 20 + int(math.sqrt(40.0 * max(n, x)))
    if top % 2:
        top += 1
    jp1 = 0.0
    j = 1.0e-30
    result = 0.0
    norm = 0.0
    for m in range(top, 0, -1):
        jm1 = 2.0 * m / x * j - jp1
        jp1 = j
        j = jm1
        if abs(j) > 1.0e200:
            j *= 1.0e-200
            jp1 *= 1.0e-200
            result *= 1.0e-200
            norm *= 1.0e-200
        if m - 1 == n:
            result = j
        if (m - 1) % 2 == 0 and m - 1 > 0:
            norm += 2.0 * j
    # j now holds the unnormalised J_0
    norm += j
    return result / norm


@numba.njit(cache=True)
def _yn_forward(n, x):
    _, _, y0, y1 = bessel01(x)
    if n == 0:
        return y0
    ym, y = y0, y1
    for m in range(1, n):
        ym, y = y, 2.0 * m / x * y - ym
    return y


def _check(n, x, y_kind):
    n = int(n)
    if n < 0 or n > MAX_ORDER:
        raise BesselDomainError(f"order {n} outside [0, {MAX_ORDER}]")
    arr = np.asarray(x, dtype=float)
    bad_low = np.any(arr < Y_MIN_ARG) if y_kind else np.any(arr <= 0.0)
    if np.any(~np.isfinite(arr)) or bad_low or np.any(arr > X_MAX):
        lo = f"[{Y_MIN_ARG:g}" if y_kind else "(0"
        raise BesselDomainError(f"argument outside {lo}, {X_MAX:g}]")
    return n, arr


@numba.njit(cache=True)
def _vec_j(n, xs):
    out = np.empty(xs.size)
    for i in range(xs.size):
        out[i] = _jn_miller(n, xs[i])
    return out


@numba.njit(cache=True)
def _vec_y(n, xs):
    out = np.empty(xs.size)
    for i in range(xs.size):
        out[i] = _yn_forward(n, xs[i])
    return out


def _wrap(values, arr):
    values = values.reshape(arr.shape)
    return float(values) if arr.ndim == 0 else values


def bessel_j(n, x):
    """Bessel function of the first kind ``J_n(x)`` for integer ``0 <= n <= 60``.

    ``x`` may be a scalar or an array; the result has the same shape.
    """
    n, arr = _check(n, x, False)
    return _wrap(_vec_j(n, arr.ravel()), arr)


def bessel_y(n, x):
    """Bessel function of the second kind ``Y_n(x)``; requires ``x >= 1e-8``."""
    n, arr = _check(n, x, True)
    return _wrap(_vec_y(n, arr.ravel()), arr)


def hankel1(n, x):
    """Hankel function of the first kind ``H_n^(1)(x) = J_n(x) + i Y_n(x)``."""
    n, arr = _check(n, x, True)
    flat = arr.ravel()
    values = _vec_j(n, flat) + 1j * _vec_y(n, flat)
    values = values.reshape(arr.shape)
    return complex(values) if arr.ndim == 0 else values
