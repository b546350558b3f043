"""Numba kernels shared by the sinogram, reconstruction and diagnostics paths.

Everything here works on plain arrays so that the Python-level objects can stay
immutable dataclasses.  Parallel loops only ever write disjoint outputs and each
output is accumulated sequentially, so results do not depend on the schedule.
"""
import math

import numpy as np
from numba import njit

# Gauss-Legendre 4 on [0, 1]; exact for the degree-6 pieces met in the layer integrals
_GL4_X = np.array([0.0694318442029737, 0.3300094782075719, 0.6699905217924281, 0.9305681557970263])
_GL4_W = np.array([0.1739274225687269, 0.3260725774312731, 0.3260725774312731, 0.1739274225687269])


@njit(cache=True)
def two_sum(s, c, x):
    """Neumaier step: add ``x`` to the running pair ``(s, c)``."""
    t = s + x
    if abs(s) >= abs(x):
        c += (s - t) + x
    else:
        c += (x - t) + s
    return t, c


@njit(cache=True)
def bspline(coef, x):
    """Centered B-spline from its piece table ``coef[i, p]`` (see ``_bspline.piece_coefficients``)."""
    npieces = coef.shape[0]
    r = 0.5 * npieces
    y = x + r
    i = int(math.floor(y))
    if i < 0 or i >= npieces:
        return 0.0
    v = y - i
    acc = 0.0
    for p in range(coef.shape[1] - 1, -1, -1):
        acc = acc * v + coef[i, p]
    return acc


@njit(cache=True)
def hilbert_closed(s, n, m, binom, scale):
    """Closed-form ``H[B_n^{(n-m)}](s)``; ``binom[i] = (-1)^i C(n+1, i)``, ``scale = -1/(pi m!)``."""
    half = 0.5 * (n + 1)
    acc = 0.0
    for i in range(n + 2):
        sig = s + half - i
        a = abs(sig)
        if a > 0.0:
            acc += binom[i] * sig**m * math.log(a)
    return scale * acc


@njit(cache=True)
def hilbert_eval(s, n, m, binom, scale, tail, switch):
    if abs(s) < switch:
        return hilbert_closed(s, n, m, binom, scale)
    inv = 1.0 / s
    acc = 0.0
    for l in range(tail.size - 1, -1, -1):
        acc = acc * inv + tail[l]
    return acc * inv


@njit(cache=True)
def hermite(values, derivs, x0, dx, x):
    """Cubic Hermite interpolation on a uniform grid; zero outside the table."""
    y = (x - x0) / dx
    i = int(math.floor(y))
    n = values.size
    if i < 0 or i >= n - 1:
        if i == n - 1 and y - i == 0.0:
            return values[n - 1]
        return 0.0
    u = y - i
    u2 = u * u
    u3 = u2 * u
    h00 = 2 * u3 - 3 * u2 + 1
    h10 = u3 - 2 * u2 + u
    h01 = -2 * u3 + 3 * u2
    h11 = u3 - u2
    return (h00 * values[i] + h10 * dx * derivs[i]
            + h01 * values[i + 1] + h11 * dx * derivs[i + 1])


@njit(cache=True)
def hermite_complex(values, derivs, x0, dx, x):
    y = (x - x0) / dx
    i = int(math.floor(y))
    n = values.size
    if i < 0 or i >= n - 1:
        return 0.0 + 0.0j
    u = y - i
    u2 = u * u
    u3 = u2 * u
    h00 = 2 * u3 - 3 * u2 + 1
    h10 = u3 - 2 * u2 + u
    h01 = -2 * u3 + 3 * u2
    h11 = u3 - u2
    return (h00 * values[i] + h10 * dx * derivs[i]
            + h01 * values[i + 1] + h11 * dx * derivs[i + 1])


@njit(cache=True)
def _gl4_piece(wcoef, a, b, R, t0, t1):
    L = t1 - t0
    acc = 0.0
    for g in range(4):
        t = t0 + L * _GL4_X[g]
        acc += _GL4_W[g] * bspline(wcoef, a - b * t) * (R - t)
    return acc * L


@njit(cache=True)
def layer_aperture_integral(wcoef, a, b, H, R):
    """``int_0^H w(a - b t) (R - t) dt`` (signed when ``H < 0``), exact up to rounding.

    The t-range is split where ``a - b t`` crosses a knot of ``w`` so every piece is a
    polynomial of degree <= 6 and four Gauss points integrate it exactly.  Knots are
    visited in t-order, so no sorting or scratch storage is needed.
    """
    if H == 0.0:
        return 0.0
    sign = 1.0
    lo, hi = 0.0, H
    if H < 0.0:
        sign = -1.0
        lo, hi = H, 0.0
    r = 0.5 * wcoef.shape[0]
    ua = a - b * lo
    ub = a - b * hi
    if b == 0.0:
        if abs(a) >= r:
            return 0.0
        return sign * _gl4_piece(wcoef, a, b, R, lo, hi)
    if max(ua, ub) <= -r or min(ua, ub) >= r:
        return 0.0
    total = 0.0
    t0 = lo
    if b > 0.0:
        # u decreases with t: knots k - r from just below ua down to just above ub
        kk = int(math.ceil(ua + r)) - 1
        kend = int(math.floor(ub + r)) + 1
        step = -1
    else:
        kk = int(math.floor(ua + r)) + 1
        kend = int(math.ceil(ub + r)) - 1
        step = 1
    while (step < 0 and kk >= kend) or (step > 0 and kk <= kend):
        if 0 <= kk <= wcoef.shape[0]:
            tk = (a - (kk - r)) / b
            if lo < tk < hi and tk > t0:
                total += _gl4_piece(wcoef, a, b, R, t0, tk)
                t0 = tk
        kk += step
    if hi > t0:
        total += _gl4_piece(wcoef, a, b, R, t0, hi)
    return sign * total
