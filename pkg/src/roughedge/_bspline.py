"""Centered cardinal B-splines and the closed-form Hilbert transform of their derivatives.

The centered B-spline of degree ``n`` is the (n+1)-fold convolution of the unit box.
On ``[c_i, c_{i+1}]`` with ``c_i = i - (n+1)/2`` it equals the truncated-power sum

    B_n(x) = 1/n! * sum_{l<=i} (-1)^l C(n+1, l) (x - c_l)^n

which gives exact rational piece coefficients.  The same representation yields the
Hilbert transform in closed form: the polynomial parts cancel under the (n+1)-th
difference and only the ``sigma^p log|sigma|`` terms survive.

Hilbert convention used throughout the package::

    (H h)(s) = 1/pi * p.v. int h(u) / (u - s) du

With this sign the reconstruction ``-dalpha/(2 pi) sum H(phi')(...)`` inverts the Radon
transform and the far field of ``H(phi')`` is ``+1/(pi s^2)``.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np


def support_radius(n: int) -> float:
    return (n + 1) / 2.0


@lru_cache(maxsize=None)
def piece_coefficients(n: int, deriv: int = 0) -> np.ndarray:
    """Return ``coef[i, p]``: piece ``i`` of ``B_n^{(deriv)}`` as ``sum_p coef[i,p] v^p``.

    ``v = x - c_i`` is the local coordinate on ``[c_i, c_i + 1]``.
    """
    if deriv > n:
        return np.zeros((n + 1, 1))
    m = n - deriv
    half = Fraction(n + 1, 2)
    cs = [Fraction(l) - half for l in range(n + 2)]
    coef = np.zeros((n + 1, m + 1))
    for i in range(n + 1):
        acc = [Fraction(0)] * (m + 1)
        for l in range(i + 1):
            sgn = -1 if l % 2 else 1
            scale = Fraction(sgn * math.comb(n + 1, l), math.factorial(m))
            shift = cs[i] - cs[l]
            # (v + shift)^m
            for p in range(m + 1):
                acc[p] += scale * math.comb(m, p) * shift ** (m - p)
        coef[i] = [float(a) for a in acc]
    return coef


def evaluate(n: int, x, deriv: int = 0) -> np.ndarray:
    """Evaluate ``B_n^{(deriv)}`` at ``x`` (vectorised, exact piecewise Horner)."""
    x = np.asarray(x, dtype=float)
    coef = piece_coefficients(n, deriv)
    r = support_radius(n)
    idx = np.floor(x + r).astype(np.int64)
    inside = (idx >= 0) & (idx <= n)
    idx_c = np.clip(idx, 0, n)
    v = x + r - idx_c
    out = np.zeros_like(x)
    for p in range(coef.shape[1] - 1, -1, -1):
        out = out * v + coef[idx_c, p]
    return np.where(inside, out, 0.0)


@lru_cache(maxsize=None)
def moments(n: int, count: int) -> tuple[Fraction, ...]:
    """Exact moments ``int u^l B_n(u) du`` for ``l < count``.

    ``B_n`` is the density of a sum of ``n+1`` independent U(-1/2, 1/2) variables, so
    the moments follow from repeated binomial convolution.
    """
    unif = [Fraction(0)] * count
    for l in range(0, count, 2):
        unif[l] = Fraction(1, (l + 1) * 2**l)
    mom = [Fraction(1)] + [Fraction(0)] * (count - 1)
    for _ in range(n + 1):
        new = [Fraction(0)] * count
        for l in range(count):
            new[l] = sum(math.comb(l, i) * mom[i] * unif[l - i] for i in range(l + 1))
        mom = new
    return tuple(mom)


@lru_cache(maxsize=None)
def hilbert_tail_coefficients(n: int, deriv: int, terms: int = 64) -> np.ndarray:
    """Coefficients ``a_l`` with ``H[B_n^{(deriv)}](s) = sum_l a_l s^{-(l+1)}`` for large ``|s|``.

    Expanding ``1/(u - s) = -sum_l u^l / s^{l+1}`` gives ``a_l = -M_l / pi`` where
    ``M_l = int u^l B_n^{(deriv)}`` and, by parts, ``M_l = (-1)^k l!/(l-k)! int u^{l-k} B_n``.
    """
    base = moments(n, terms)
    a = np.zeros(terms)
    for l in range(terms):
        if l < deriv:
            continue
        ml = (-1) ** deriv * math.perm(l, deriv) * base[l - deriv]
        a[l] = -float(ml) / math.pi
    return a


def _hilbert_closed(n: int, deriv: int, s, dtype=np.longdouble) -> np.ndarray:
    m = n - deriv
    s = np.asarray(s, dtype=dtype)
    out = np.zeros(s.shape, dtype=dtype)
    half = dtype(n + 1) / dtype(2)
    for i in range(n + 2):
        sig = s + half - dtype(i)
        a = np.abs(sig)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(a > 0, sig**m * np.log(np.where(a > 0, a, 1)), 0)
        if m == 0:
            term = np.where(a > 0, np.log(np.where(a > 0, a, 1)), 0)
        out += dtype((-1) ** i * math.comb(n + 1, i)) * term
    return -out / dtype(math.pi * math.factorial(m))


def tail_switch(n: int) -> float:
    # series ratio (r/s) <= 1/3 beyond this point
    return 3.0 * support_radius(n)


def hilbert(n: int, s, deriv: int = 1) -> np.ndarray:
    """``H[B_n^{(deriv)}](s)``: closed form near the support, moment series in the far field."""
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    switch = tail_switch(n)
    near = np.abs(s) < switch
    if np.any(near):
        out[near] = _hilbert_closed(n, deriv, s[near]).astype(float)
    far = ~near
    if np.any(far):
        a = hilbert_tail_coefficients(n, deriv)
        inv = 1.0 / s[far]
        acc = np.zeros_like(inv)
        for l in range(a.size - 1, -1, -1):
            acc = acc * inv + a[l]
        out[far] = acc * inv
    return out
