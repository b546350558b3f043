"""Convex boundary arcs in normal parametrization.

A curve is described by its support function ``p`` in the direction ``-vec(theta)``
(``vec(theta)`` points towards the centre of curvature).  Then

    y(theta)  = -p vec(theta) - p' vec(theta)^perp
    y'(theta) = -(p + p'') vec(theta)^perp
    R(theta)  = vec(theta) . y''(theta) = p + p''

A circle of radius ``R0`` centred at ``c`` has ``p = R0 - c . vec(theta)`` and
``y(theta) = c - R0 vec(theta)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq


class CurveDomainError(ValueError):
    pass


class NonConvexCurveError(ValueError):
    pass


class OutOfChartError(ValueError):
    pass


class ConvergenceError(ArithmeticError):
    pass


def unit(theta):
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def unit_perp(theta):
    theta = np.asarray(theta, dtype=float)
    return np.stack([-np.sin(theta), np.cos(theta)], axis=-1)


@dataclass(frozen=True)
class BoundaryCurve:
    """Arc ``theta in [theta_mid - a, theta_mid + a]`` of a convex C^4 curve.

    ``coeffs`` holds the support function as a trigonometric polynomial:
    ``p(theta) = sum_k cos_k[k] cos(k theta) + sin_k[k] sin(k theta)``.
    """
    kind: str
    cos_k: tuple
    sin_k: tuple
    a: float = 0.5
    theta_mid: float = 0.0
    center: tuple | None = None
    radius: float | None = None
    _rmin: float = field(default=0.0, repr=False, compare=False)

    def __post_init__(self):
        if not self.a > 0:
            raise CurveDomainError("half-extent a must be positive")
        th = np.linspace(self.theta_lo, self.theta_hi, 2001)
        R = self._support(th, 0) + self._support(th, 2)
        if np.any(R <= 0):
            raise NonConvexCurveError(f"radius of curvature <= 0 (min {R.min():.3e})")
        object.__setattr__(self, "_rmin", float(R.min()))

    # -- construction
    @classmethod
    def circle(cls, center=(1.0, 0.0), radius=1.0, a=0.5, theta_mid=0.0) -> "BoundaryCurve":
        if radius <= 0:
            raise NonConvexCurveError("radius must be positive")
        c = (float(center[0]), float(center[1]))
        return cls("circle", (radius, -c[0]), (0.0, -c[1]), a, theta_mid, c, float(radius))

    @classmethod
    def from_support(cls, cos_k, sin_k=(), a=0.5, theta_mid=0.0) -> "BoundaryCurve":
        cos_k = tuple(float(v) for v in cos_k)
        sin_k = tuple(float(v) for v in sin_k) + (0.0,) * max(0, len(cos_k) - len(sin_k))
        cos_k = cos_k + (0.0,) * max(0, len(sin_k) - len(cos_k))
        return cls("support", cos_k, sin_k, a, theta_mid)

    # -- support function
    def _support(self, theta, deriv=0):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        for k, (ck, sk) in enumerate(zip(self.cos_k, self.sin_k)):
            if ck == 0.0 and sk == 0.0:
                continue
            # d^n/dθ^n [cos kθ, sin kθ] = k^n [cos, sin](kθ + nπ/2)
            ph = k * theta + deriv * np.pi / 2
            out = out + (k**deriv if deriv else 1.0) * (ck * np.cos(ph) + sk * np.sin(ph))
        return out

    @property
    def theta_lo(self) -> float:
        return self.theta_mid - self.a

    @property
    def theta_hi(self) -> float:
        return self.theta_mid + self.a

    @property
    def min_radius(self) -> float:
        return self._rmin

    @property
    def scale(self) -> float:
        return self.radius if self.radius is not None else float(self._support(self.theta_mid) + self._support(self.theta_mid, 2))

    def _check(self, theta):
        theta = np.asarray(theta, dtype=float)
        tol = 1e-12 * max(1.0, self.a)
        if np.any(theta < self.theta_lo - tol) or np.any(theta > self.theta_hi + tol):
            raise CurveDomainError(f"theta outside [{self.theta_lo}, {self.theta_hi}]")
        return theta

    def point(self, theta, check=True):
        """``y(theta)``."""
        theta = self._check(theta) if check else np.asarray(theta, float)
        if self.kind == "circle":
            return np.asarray(self.center) - self.radius * unit(theta)
        p = self._support(theta)
        dp = self._support(theta, 1)
        return -p[..., None] * unit(theta) - dp[..., None] * unit_perp(theta)

    def tangent(self, theta, check=True):
        """``y'(theta) = -R(theta) vec(theta)^perp``."""
        theta = self._check(theta) if check else np.asarray(theta, float)
        return -self.curvature_radius(theta, check=False)[..., None] * unit_perp(theta)

    def second_derivative(self, theta, check=True):
        theta = self._check(theta) if check else np.asarray(theta, float)
        R = self.curvature_radius(theta, check=False)
        dR = self._support(theta, 1) + self._support(theta, 3)
        return R[..., None] * unit(theta) - dR[..., None] * unit_perp(theta)

    def curvature_radius(self, theta, check=True):
        theta = self._check(theta) if check else np.asarray(theta, float)
        if self.kind == "circle":
            return np.full(np.shape(theta), self.radius)
        return self._support(theta) + self._support(theta, 2)

    def rotated(self, phi: float) -> "BoundaryCurve":
        """The same arc rotated by ``phi`` about the origin (theta labels shift by ``phi``)."""
        if self.kind == "circle":
            c = np.asarray(self.center)
            rc = (np.cos(phi) * c[0] - np.sin(phi) * c[1], np.sin(phi) * c[0] + np.cos(phi) * c[1])
            return BoundaryCurve.circle(rc, self.radius, self.a, self.theta_mid + phi)
        # p_rot(theta) = p(theta - phi)
        ck, sk = [], []
        for k, (c, s) in enumerate(zip(self.cos_k, self.sin_k)):
            ck.append(c * np.cos(k * phi) - s * np.sin(k * phi))
            sk.append(s * np.cos(k * phi) + c * np.sin(k * phi))
        return BoundaryCurve("support", tuple(ck), tuple(sk), self.a, self.theta_mid + phi)

    def to_config(self) -> dict:
        if self.kind == "circle":
            return dict(kind="circle", center=list(self.center), radius=self.radius, a=self.a)
        return dict(kind="support", cos=list(self.cos_k), sin=list(self.sin_k), a=self.a)


@dataclass(frozen=True)
class NormalCoords:
    theta: float
    t: float


def to_normal_coords(curve: BoundaryCurve, x, tube: float = 0.9) -> NormalCoords:
    """Solve ``x = y(theta) + t vec(theta)``.

    The tangency function ``vec(theta)^perp . (x - y(theta))`` has derivative
    ``R(theta) - t > 0`` inside the tube, so a sign change on the arc brackets the
    unique root.
    """
    x = np.asarray(x, dtype=float)
    lo, hi = curve.theta_lo, curve.theta_hi

    def f(th):
        return float(unit_perp(th) @ (x - curve.point(th, check=False)))

    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        th = lo
    elif fhi == 0.0:
        th = hi
    elif flo * fhi > 0:
        raise OutOfChartError(f"{x} is outside the normal chart of the arc")
    else:
        # bisection-safe root polish; xtol near machine precision in theta
        th, info = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                          maxiter=100, full_output=True, disp=False)
        if not info.converged:
            raise ConvergenceError(f"normal-coordinate solve did not converge for {x}")
    t = float(unit(th) @ (x - curve.point(th, check=False)))
    if abs(t) >= tube * curve.min_radius:
        raise OutOfChartError(f"{x} lies outside the tube |t| < {tube} min R")
    return NormalCoords(float(th), t)


def to_normal_coords_array(curve: BoundaryCurve, x, tube: float = 0.9):
    """Vectorised chart map; returns ``(theta, t, inside)``.

    Circles use the closed form; general arcs use safeguarded Newton on the bracket.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    x = x.reshape(-1, 2)
    if curve.kind == "circle":
        d = np.asarray(curve.center) - x
        rho = np.hypot(d[:, 0], d[:, 1])
        th = np.arctan2(d[:, 1], d[:, 0])
        # keep theta continuous around theta_mid
        th = curve.theta_mid + np.angle(np.exp(1j * (th - curve.theta_mid)))
        t = curve.radius - rho
    else:
        lo = np.full(len(x), curve.theta_lo)
        hi = np.full(len(x), curve.theta_hi)

        def f(th):
            return np.einsum("ij,ij->i", unit_perp(th), x - curve.point(th, check=False))

        flo, fhi = f(lo), f(hi)
        ok = flo * fhi <= 0
        th = np.where(ok, 0.5 * (lo + hi), curve.theta_mid)
        swap = flo > 0
        lo, hi = np.where(swap, hi, lo), np.where(swap, lo, hi)
        for _ in range(100):
            val = f(th)
            neg = val < 0
            lo = np.where(neg, th, lo)
            hi = np.where(neg, hi, th)
            tt = np.einsum("ij,ij->i", unit(th), x - curve.point(th, check=False))
            deriv = curve.curvature_radius(th, check=False) - tt
            step = np.where(deriv > 0, val / np.where(deriv > 0, deriv, 1), np.inf)
            newton = th - step
            inside_br = (newton - np.minimum(lo, hi)) * (newton - np.maximum(lo, hi)) <= 0
            th_new = np.where(inside_br, newton, 0.5 * (lo + hi))
            if np.all(np.abs(th_new - th) <= 1e-15 * np.maximum(1.0, np.abs(th))):
                th = th_new
                break
            th = th_new
        else:
            if np.any(ok):
                raise ConvergenceError("normal-coordinate Newton iteration did not converge")
        t = np.einsum("ij,ij->i", unit(th), x - curve.point(th, check=False))
        th = np.where(ok, th, np.nan)
    inside = (np.abs(t) < tube * curve.min_radius) & (th >= curve.theta_lo) & (th <= curve.theta_hi)
    return th.reshape(shape), t.reshape(shape), inside.reshape(shape)


def from_normal_coords(curve: BoundaryCurve, theta, t):
    theta = np.asarray(theta, dtype=float)
    return curve.point(theta) + np.asarray(t, float)[..., None] * unit(theta)


class Case(str, Enum):
    A = "A"  # on the curve
    B = "B"  # off the curve, some tangent line passes through the point
    C = "C"  # no tangent line through the point


@dataclass(frozen=True)
class PointCase:
    case: Case
    tangency_angles: tuple = ()
    distance: float = float("nan")


def tangency_function(curve: BoundaryCurve, x0, theta):
    """``vec(theta) . (y(theta) - x0)``: zero iff the tangent at ``y(theta)`` passes through ``x0``."""
    return np.einsum("...i,...i->...", unit(theta), curve.point(theta, check=False) - np.asarray(x0, float))


def distance_to_curve(curve: BoundaryCurve, x0, samples: int = 4001) -> float:
    x0 = np.asarray(x0, dtype=float)
    th = np.linspace(curve.theta_lo, curve.theta_hi, samples)
    d = np.hypot(*(curve.point(th, check=False) - x0).T)
    i = int(np.argmin(d))
    lo, hi = th[max(i - 1, 0)], th[min(i + 1, samples - 1)]
    from scipy.optimize import minimize_scalar
    res = minimize_scalar(lambda s: float(np.hypot(*(curve.point(s, check=False) - x0))),
                          bounds=(lo, hi), method="bounded", options={"xatol": 1e-14})
    return float(min(res.fun, d[i]))


def classify_point(curve: BoundaryCurve, x0, samples: int = 4001) -> PointCase:
    x0 = np.asarray(x0, dtype=float)
    dist = distance_to_curve(curve, x0, samples)
    if dist < 1e-12 * curve.scale:
        return PointCase(Case.A, (), dist)
    th = np.linspace(curve.theta_lo, curve.theta_hi, samples)
    g = tangency_function(curve, x0, th)
    roots = []
    for i in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) <= 0)[0]:
        if g[i] == 0.0:
            roots.append(float(th[i]))
            continue
        if g[i + 1] == 0.0:
            continue
        roots.append(float(brentq(lambda s: float(tangency_function(curve, x0, s)), th[i], th[i + 1], xtol=1e-15)))
    if roots:
        return PointCase(Case.B, tuple(roots), dist)
    return PointCase(Case.C, (), dist)
