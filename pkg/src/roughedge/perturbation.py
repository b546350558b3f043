"""Rough-edge perturbations: profiles H0, the scaled displacement H_eps, the thin
field f_eps and the level-set intervals of H0.

All built-in profiles are independent of eps.  Each profile knows its finest length
scale (used to size scanlines and quadrature panels), its breakpoints (where it is
not smooth) and a declared level-set density ``rho`` valid on windows of length at
least ``L0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .geometry import BoundaryCurve, to_normal_coords_array, unit


class H3ViolationError(ValueError):
    """Raised when a level set splits into more intervals than the declared density allows."""

    def __init__(self, count, bound, window, detail=""):
        self.count, self.bound, self.window = count, bound, window
        super().__init__(f"{count} level-set intervals exceed bound {bound:.3f} on {window}{detail}")


def chi(t, r):
    """+1 on 0 < t <= r, -1 on r <= t < 0, 0 otherwise."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    out = np.where((t > 0) & (t <= r), 1.0, 0.0)
    out = np.where((t < 0) & (r <= t), -1.0, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class LevelSetIntervals:
    intervals: np.ndarray  # shape (n, 2)
    window: tuple
    level: float

    def __len__(self):
        return len(self.intervals)

    @property
    def count(self) -> int:
        return len(self.intervals)

    def measure(self) -> float:
        return float(np.sum(self.intervals[:, 1] - self.intervals[:, 0])) if len(self) else 0.0


def _bisect(fun, a, b, fa, xtol):
    """Vectorised bisection of ``fun >= 0`` boundaries; ``fa`` is the sign side of ``a``."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    for _ in range(200):
        if np.all(np.abs(b - a) <= xtol):
            break
        mid = 0.5 * (a + b)
        fm = fun(mid) >= 0
        same = fm == fa
        a = np.where(same, mid, a)
        b = np.where(same, b, mid)
    return a, b


class PerturbationProfile:
    kind = "abstract"
    exact_levels = False
    flat_tails = False  # H0 vanishes identically on open sets (level sets degenerate as t -> 0)

    def __init__(self, bound, rho, L0, scale, params):
        self.bound = float(bound)
        self.rho = float(rho)
        self.L0 = float(L0)
        self.scale = float(scale)
        self.params = dict(params)

    def __call__(self, u):
        raise NotImplementedError

    def derivative(self, u):
        raise NotImplementedError

    def breakpoints(self, lo, hi) -> np.ndarray:
        return np.empty(0)

    def critical_points(self, lo, hi) -> np.ndarray:
        """Local extrema of a smooth profile inside ``(lo, hi)``."""
        h = self.scale / 64
        n = int(math.ceil((hi - lo) / h)) + 1
        u = np.linspace(lo, hi, n)
        d = self.derivative(u)
        idx = np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]
        if idx.size == 0:
            return np.empty(0)
        a, b = _bisect(self.derivative, u[idx], u[idx + 1], d[idx] >= 0, 1e-15 * max(1.0, abs(lo), abs(hi)))
        return 0.5 * (a + b)

    def critical_levels(self, lo, hi) -> np.ndarray:
        """Levels at which the topology of the level sets on ``[lo, hi]`` can change."""
        pts = np.concatenate([[lo, hi], self.critical_points(lo, hi)])
        vals = [self(pts)]
        bp = self.breakpoints(lo, hi)
        if bp.size:
            span = 1e-12 * max(1.0, abs(lo), abs(hi))
            vals += [self(bp - span), self(bp + span), self(bp)]
        return np.unique(np.concatenate(vals))

    def level_set_intervals(self, window, t, xtol=1e-9, resolution=None, check=True,
                            critical=None) -> LevelSetIntervals:
        lo, hi = float(window[0]), float(window[1])
        if t == 0:
            raise ValueError("level t must be nonzero")
        if not hi > lo:
            raise ValueError("empty window")
        out = self._intervals(lo, hi, float(t), xtol, resolution, critical)
        res = LevelSetIntervals(out, (lo, hi), float(t))
        if check and hi - lo >= self.L0:
            bound = self.rho * (hi - lo)
            if res.count > bound:
                raise H3ViolationError(res.count, bound, (lo, hi), self._blowup(res))
        return res

    @staticmethod
    def _blowup(res: LevelSetIntervals) -> str:
        if res.count < 2:
            return ""
        mids = res.intervals.mean(axis=1)
        gaps = np.diff(mids)
        i = int(np.argmin(gaps))
        return f"; intervals accumulate near u={mids[i]:.6g} (spacing {gaps[i]:.3g})"

    def _intervals(self, lo, hi, t, xtol, resolution, critical):
        return self._intervals_many(lo, hi, np.array([t]), xtol, resolution, critical)[0]

    def level_sets(self, window, levels, xtol=1e-9, resolution=None, critical=None) -> list:
        """Interval arrays for many levels at once (no density check)."""
        lo, hi = float(window[0]), float(window[1])
        levels = np.asarray(levels, dtype=float)
        if np.any(levels == 0):
            raise ValueError("level t must be nonzero")
        return self._intervals_many(lo, hi, levels, xtol, resolution, critical)

    def _scan_grid(self, lo, hi, resolution, critical):
        h = resolution or self.scale / 32
        n = int(math.ceil((hi - lo) / h)) + 1
        grid = np.linspace(lo, hi, n)
        if critical is None:
            critical = self.critical_points(lo, hi)
        extra = [critical[(critical > lo) & (critical < hi)]]
        bp = self.breakpoints(lo, hi)
        if bp.size:
            span = 1e-12 * max(1.0, abs(lo), abs(hi))
            extra += [bp - span, bp + span]
        grid = np.unique(np.concatenate([grid] + extra))
        return grid[(grid >= lo) & (grid <= hi)]

    def _intervals_many(self, lo, hi, ts, xtol, resolution, critical):
        """Scanline through the extrema, then bracketed root polish of every sign change.

        Between consecutive scan nodes that include all local extrema the profile is
        monotone, so each sign change brackets exactly one endpoint.
        """
        if type(self)._intervals is not PerturbationProfile._intervals:
            return [self._intervals(lo, hi, float(t), xtol, resolution, critical) for t in ts]
        grid = self._scan_grid(lo, hi, resolution, critical)
        vg = self(grid)
        out = []
        chunk = max(1, 2**21 // grid.size)
        for c0 in range(0, ts.size, chunk):
            t = ts[c0:c0 + chunk].copy()
            sg = np.where(t > 0, 1.0, -1.0)
            V = sg[:, None] * (vg[None, :] - t[:, None])
            bad = np.any(V == 0.0, axis=1)
            if np.any(bad):
                # an endpoint sits exactly on a scan node: nudge the level off it
                t[bad] += 1e-7 * sg[bad] * np.maximum(1.0, np.abs(t[bad]))
                V[bad] = sg[bad, None] * (vg[None, :] - t[bad, None])
            mask = V >= 0
            d = np.diff(mask.astype(np.int8), axis=1)
            ends = []
            for flag, side in ((1, False), (-1, True)):
                r, i = np.nonzero(d == flag)
                if r.size == 0:
                    ends.append((r, np.empty(0)))
                    continue
                tr, sr = t[r], sg[r]
                x = _polish(lambda u: sr * (self(u) - tr), lambda u: sr * self.derivative(u),
                            grid[i], grid[i + 1], np.full(r.size, side), xtol, self.scale)
                ends.append((r, x))
            (ru, xu), (rd, xd) = ends
            for k in range(t.size):
                st = xu[ru == k]
                en = xd[rd == k]
                if mask[k, 0]:
                    st = np.concatenate([[grid[0]], st])
                if mask[k, -1]:
                    en = np.concatenate([en, [grid[-1]]])
                out.append(np.stack([st, en], axis=1))
        return out


def _polish(f, df, a, b, fa, xtol, scale):
    """Locate the sign change of ``f >= 0`` in ``[a, b]``; ``fa`` is the state at ``a``.

    Bisection down to a small fraction of the bracket, then Newton steps kept inside
    the bracket when a derivative is available.
    """
    coarse = xtol if df is None else max(xtol, 1e-3 * scale)
    a, b = _bisect(f, a, b, fa, coarse)
    if df is None:
        return np.where(fa, a, b)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    x = 0.5 * (lo + hi)
    sg = np.where(fa, -1.0, 1.0)  # f increases through the crossing when a is outside
    for _ in range(12):
        fx = f(x)
        d = df(x)
        ok = d * sg > 0
        step = np.where(ok, fx / np.where(ok, d, 1.0), 0.0)
        xn = np.clip(x - step, lo, hi)
        done = np.all(np.abs(xn - x) <= xtol)
        x = xn
        if done:
            break
    return x


def _runs(grid, mask, f, xtol, df=None, scale=1.0):
    if not np.any(mask):
        return np.empty((0, 2))
    m = mask.astype(np.int8)
    d = np.diff(m)
    ups = np.nonzero(d == 1)[0]    # grid[i] out, grid[i+1] in
    downs = np.nonzero(d == -1)[0]  # grid[i] in, grid[i+1] out
    starts = _polish(f, df, grid[ups], grid[ups + 1], np.zeros(ups.size, bool), xtol, scale) if ups.size else np.empty(0)
    ends = _polish(f, df, grid[downs], grid[downs + 1], np.ones(downs.size, bool), xtol, scale) if downs.size else np.empty(0)
    if mask[0]:
        starts = np.concatenate([[grid[0]], starts])
    if mask[-1]:
        ends = np.concatenate([ends, [grid[-1]]])
    return np.stack([starts, ends], axis=1)


class ZeroProfile(PerturbationProfile):
    kind = "zero"
    exact_levels = True

    def __init__(self):
        super().__init__(0.0, 1.0, 1.0, 1.0, {})

    def __call__(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    def derivative(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    def critical_points(self, lo, hi):
        return np.empty(0)

    def _intervals(self, lo, hi, t, xtol, resolution, critical):
        return np.empty((0, 2))


class ConstantProfile(PerturbationProfile):
    kind = "constant"
    exact_levels = True

    def __init__(self, c=1.0):
        super().__init__(abs(c), 1.0, 1.0, 1.0, {"c": float(c)})
        self.c = float(c)

    def __call__(self, u):
        return np.full(np.shape(u), self.c)

    def derivative(self, u):
        return np.zeros(np.shape(u))

    def critical_points(self, lo, hi):
        return np.empty(0)

    def _intervals(self, lo, hi, t, xtol, resolution, critical):
        inside = (t > 0 and self.c >= t) or (t < 0 and self.c <= t)
        return np.array([[lo, hi]]) if inside else np.empty((0, 2))


class BumpProfile(PerturbationProfile):
    """``c exp(1 - 1/(1 - (u/width)^2))`` on ``|u| < width``."""
    kind = "single-bump"
    flat_tails = True

    def __init__(self, c=1.0, width=1.0):
        super().__init__(abs(c), 1.0 / width, width, width / 4, {"c": float(c), "width": float(width)})
        self.c, self.width = float(c), float(width)

    def __call__(self, u):
        s = np.asarray(u, dtype=float) / self.width
        inside = np.abs(s) < 1
        q = np.where(inside, 1 - s * s, 1.0)
        return np.where(inside, self.c * np.exp(1 - 1 / q), 0.0)

    def derivative(self, u):
        s = np.asarray(u, dtype=float) / self.width
        inside = np.abs(s) < 1
        q = np.where(inside, 1 - s * s, 1.0)
        return np.where(inside, self.c * np.exp(1 - 1 / q) * (-2 * s / q**2) / self.width, 0.0)

    def critical_points(self, lo, hi):
        return np.array([0.0]) if lo < 0 < hi else np.empty(0)

    def breakpoints(self, lo, hi):
        b = np.array([-self.width, self.width])
        return b[(b > lo) & (b < hi)]


class SineProfile(PerturbationProfile):
    kind = "sine"

    def __init__(self, c=1.0, frequency=1.0, phase=0.0):
        super().__init__(abs(c), frequency / math.pi, 2 * math.pi / frequency, 2 * math.pi / frequency,
                         {"c": float(c), "frequency": float(frequency), "phase": float(phase)})
        self.c, self.freq, self.phase = float(c), float(frequency), float(phase)

    def __call__(self, u):
        return self.c * np.sin(self.freq * np.asarray(u, dtype=float) + self.phase)

    def derivative(self, u):
        return self.c * self.freq * np.cos(self.freq * np.asarray(u, dtype=float) + self.phase)

    def critical_points(self, lo, hi):
        # sin' = 0 at freq u + phase = pi/2 + n pi
        n0 = math.ceil((self.freq * lo + self.phase - math.pi / 2) / math.pi)
        n1 = math.floor((self.freq * hi + self.phase - math.pi / 2) / math.pi)
        pts = (np.arange(n0, n1 + 1) * math.pi + math.pi / 2 - self.phase) / self.freq
        return pts[(pts > lo) & (pts < hi)]


class StepTrainProfile(PerturbationProfile):
    """Periodic piecewise-constant profile: step ``i`` covers ``[i w, (i+1) w)``."""
    kind = "step-train"
    exact_levels = True

    def __init__(self, levels=(0.5, -0.5, 1.0, 0.0, -1.0, 0.25), width=0.5):
        levels = tuple(float(v) for v in levels)
        super().__init__(max(abs(v) for v in levels), 1.0 / width, 2.0 * width, width,
                         {"levels": list(levels), "width": float(width)})
        self.levels = np.asarray(levels)
        self.width = float(width)

    def _index(self, u):
        return np.floor(np.asarray(u, dtype=float) / self.width).astype(np.int64)

    def __call__(self, u):
        return self.levels[np.mod(self._index(u), self.levels.size)]

    def derivative(self, u):
        return np.zeros(np.shape(u))

    def breakpoints(self, lo, hi):
        i0 = math.floor(lo / self.width) + 1
        i1 = math.ceil(hi / self.width) - 1
        return np.arange(i0, i1 + 1) * self.width

    def critical_points(self, lo, hi):
        return np.empty(0)

    def critical_levels(self, lo, hi):
        return np.unique(self.levels)

    def _intervals(self, lo, hi, t, xtol, resolution, critical):
        i0 = math.floor(lo / self.width)
        i1 = math.ceil(hi / self.width)
        idx = np.arange(i0, i1)
        vals = self.levels[np.mod(idx, self.levels.size)]
        on = (vals - t >= 0) if t > 0 else (vals - t <= 0)
        out = []
        start = None
        for i, flag in zip(idx, on):
            if flag and start is None:
                start = max(lo, i * self.width)
            elif not flag and start is not None:
                out.append((start, min(hi, i * self.width)))
                start = None
        if start is not None:
            out.append((start, hi))
        out = [(a, b) for a, b in out if b > a]
        return np.array(out, dtype=float).reshape(-1, 2)


class PiecewiseLinearProfile(PerturbationProfile):
    """Periodic piecewise-linear profile through seeded values at knots ``i * spacing``."""
    kind = "random-piecewise-linear"
    exact_levels = True

    def __init__(self, c=1.0, spacing=0.25, knots=64, seed=0):
        rng = np.random.default_rng(seed)
        vals = rng.uniform(-c, c, int(knots))
        super().__init__(abs(c), 1.0 / spacing, 4.0 * spacing, spacing,
                         {"c": float(c), "spacing": float(spacing), "knots": int(knots), "seed": int(seed)})
        self.values = vals
        self.spacing = float(spacing)

    def _knot(self, i):
        return self.values[np.mod(i, self.values.size)]

    def __call__(self, u):
        s = np.asarray(u, dtype=float) / self.spacing
        i = np.floor(s).astype(np.int64)
        f = s - i
        return (1 - f) * self._knot(i) + f * self._knot(i + 1)

    def derivative(self, u):
        i = np.floor(np.asarray(u, dtype=float) / self.spacing).astype(np.int64)
        return (self._knot(i + 1) - self._knot(i)) / self.spacing

    def breakpoints(self, lo, hi):
        i0 = math.floor(lo / self.spacing) + 1
        i1 = math.ceil(hi / self.spacing) - 1
        return np.arange(i0, i1 + 1) * self.spacing

    def critical_points(self, lo, hi):
        return np.empty(0)

    def critical_levels(self, lo, hi):
        return np.unique(np.concatenate([self.values, self([lo, hi])]))

    def _intervals(self, lo, hi, t, xtol, resolution, critical):
        pts = np.concatenate([[lo], self.breakpoints(lo, hi), [hi]])
        v = self(pts)
        # exact endpoints at knots (the formula above blends to the same value)
        v[1:-1] = self._knot(np.rint(pts[1:-1] / self.spacing).astype(np.int64))
        sg = 1.0 if t > 0 else -1.0
        g = sg * (v - t)
        out = []
        start = pts[0] if g[0] >= 0 else None
        for i in range(len(pts) - 1):
            g0, g1 = g[i], g[i + 1]
            if g0 >= 0 and g1 < 0:
                cross = pts[i] + (pts[i + 1] - pts[i]) * g0 / (g0 - g1)
                out.append((start, cross))
                start = None
            elif g0 < 0 and g1 >= 0:
                start = pts[i] + (pts[i + 1] - pts[i]) * g0 / (g0 - g1)
        if start is not None:
            out.append((start, pts[-1]))
        return np.array(out, dtype=float).reshape(-1, 2)


class WeierstrassProfile(PerturbationProfile):
    """``c / S * sum_{k<=K} b^{-gamma k} cos(b^k u + phase_k)`` with ``S = sum b^{-gamma k}``."""
    kind = "truncated-weierstrass"

    def __init__(self, gamma=0.5, c=1.0, K=8, seed=0, base=2):
        rng = np.random.default_rng(seed)
        self.phases = rng.uniform(0.0, 2 * math.pi, K + 1)
        self.freqs = float(base) ** np.arange(K + 1)
        amps = self.freqs ** (-gamma)
        self.amps = c * amps / amps.sum()
        super().__init__(abs(c), float(base) ** max(K, 1) / math.pi, 2 * math.pi,
                         2 * math.pi / self.freqs[-1],
                         {"gamma": float(gamma), "c": float(c), "K": int(K), "seed": int(seed), "base": int(base)})
        self.gamma, self.K, self.base = float(gamma), int(K), int(base)
        self.measured_rho = float("nan")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for a, f, p in zip(self.amps, self.freqs, self.phases):
            out = out + a * np.cos(f * u + p)
        return out

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for a, f, p in zip(self.amps, self.freqs, self.phases):
            out = out - a * f * np.sin(f * u + p)
        return out

    def holder_bound(self) -> float:
        """Constant ``C`` with ``|H0(u) - H0(v)| <= C |u - v|^gamma`` for ``|u - v| <= 1``."""
        b, g = float(self.base), self.gamma
        S = np.sum(self.freqs ** (-g))
        return (b ** (1 - g) / (b ** (1 - g) - 1) + 2 / (1 - b ** (-g))) * self.bound / S


class ChirpProfile(PerturbationProfile):
    """``c sin(1/u)``: infinitely many oscillations at 0, so it must fail the density check."""
    kind = "chirp"

    def __init__(self, c=1.0, scale=1e-3):
        super().__init__(abs(c), 1.0, 1.0, scale, {"c": float(c), "scale": float(scale)})
        self.c = float(c)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        safe = np.where(u == 0, 1.0, u)
        return np.where(u == 0, 0.0, self.c * np.sin(1 / safe))

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        safe = np.where(u == 0, 1.0, u)
        return np.where(u == 0, 0.0, -self.c * np.cos(1 / safe) / safe**2)


def h3_probes(profile: PerturbationProfile, n_probes=32, seed=0, span=None, resolution=None):
    """Run ``n_probes`` random (level, window) probes; returns rows (t, lo, hi, count, bound).

    Levels are drawn from a Chebyshev grid of ``[-c, c]`` without zero; windows have
    length ``max(L0, span)``.  Raises ``H3ViolationError`` on the first violation.
    """
    rng = np.random.default_rng(seed)
    c = profile.bound if profile.bound > 0 else 1.0
    cheb = c * np.cos(np.pi * (np.arange(2 * n_probes) + 0.5) / (2 * n_probes))
    cheb = cheb[np.abs(cheb) > 1e-12]
    length = max(profile.L0, span or 0.0)
    rows = []
    for i in range(n_probes):
        t = float(cheb[rng.integers(cheb.size)])
        lo = float(rng.uniform(-4 * length, 4 * length))
        res = profile.level_set_intervals((lo, lo + length), t, resolution=resolution)
        rows.append((t, lo, lo + length, res.count, profile.rho * length))
    return rows


def make_weierstrass_profile(gamma, c, K, seed, base=2, probes=32) -> WeierstrassProfile:
    if not 0 < gamma < 1:
        raise ValueError("Hoelder exponent must lie in (0, 1)")
    if K > 24 or K < 0:
        raise ValueError("truncation level K must be in [0, 24]")
    if base < 2:
        raise ValueError("frequency base must be >= 2")
    prof = WeierstrassProfile(gamma, c, K, seed, base)
    # scanline resolution is capped so the probe stays affordable at large K
    res = max(prof.scale / 32, prof.L0 / 2**22)
    rows = h3_probes(prof, probes, seed, resolution=res)
    prof.measured_rho = max(r[3] / (r[2] - r[1]) for r in rows)
    return prof


PROFILE_KINDS = {
    "zero": ZeroProfile,
    "constant": ConstantProfile,
    "single-bump": BumpProfile,
    "sine": SineProfile,
    "step-train": StepTrainProfile,
    "random-piecewise-linear": PiecewiseLinearProfile,
    "truncated-weierstrass": None,
    "chirp": ChirpProfile,
}


def make_profile(kind: str, **params) -> PerturbationProfile:
    if kind not in PROFILE_KINDS:
        raise ValueError(f"unknown profile kind {kind!r}")
    if kind == "truncated-weierstrass":
        return make_weierstrass_profile(params.pop("gamma", 0.5), params.pop("c", 1.0),
                                        params.pop("K", 8), params.pop("seed", 0), **params)
    return PROFILE_KINDS[kind](**params)


def h_eps(profile: PerturbationProfile, theta, eps: float):
    """``eps * H0(theta / sqrt(eps))``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return eps * profile(np.asarray(theta, dtype=float) / math.sqrt(eps))


def _smoothstep(x):
    """C-infinity transition from 0 (x <= 0) to 1 (x >= 1)."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    e0 = np.where(x > 0, np.exp(-1 / np.where(x > 0, x, 1)), 0.0)
    e1 = np.where(x < 1, np.exp(-1 / np.where(x < 1, 1 - x, 1)), 0.0)
    return e0 / (e0 + e1)


@dataclass(frozen=True)
class JumpField:
    """Jump ``f_+ - f_-`` across the arc, a smooth taper in theta.

    Equal to ``amplitude`` for ``|theta - theta_mid| <= inner * a`` and identically zero
    beyond ``outer * a``; independent of t.
    """
    curve: BoundaryCurve
    amplitude: float = 1.0
    inner: float = 0.6
    outer: float = 0.9

    def __post_init__(self):
        if not 0 < self.inner < self.outer < 1:
            raise ValueError("taper needs 0 < inner < outer < 1")

    def delta_f(self, theta):
        d = np.abs(np.asarray(theta, dtype=float) - self.curve.theta_mid) / self.curve.a
        return self.amplitude * (1 - _smoothstep((d - self.inner) / (self.outer - self.inner)))

    def scaled(self, factor: float) -> "JumpField":
        return JumpField(self.curve, self.amplitude * factor, self.inner, self.outer)

    @property
    def theta_support(self) -> tuple:
        return (self.curve.theta_mid - self.outer * self.curve.a, self.curve.theta_mid + self.outer * self.curve.a)


def f_eps_eval(field: JumpField, profile: PerturbationProfile, x, eps: float):
    """``Delta f(theta) chi(t, H_eps(theta))`` at ``x``; zero outside the chart."""
    x = np.asarray(x, dtype=float)
    th, t, inside = to_normal_coords_array(field.curve, x)
    th_safe = np.where(inside, th, field.curve.theta_mid)
    H = h_eps(profile, th_safe - field.curve.theta_mid, eps)
    val = np.where(inside, field.delta_f(th_safe) * chi(t, H), 0.0)
    return val if val.ndim else float(val)


@dataclass(frozen=True)
class LayerNodes:
    """Quadrature nodes in theta for integrals over the perturbation layer."""
    theta: np.ndarray
    weight: np.ndarray   # quadrature weight times Delta f
    point: np.ndarray    # y(theta), shape (n, 2)
    radius: np.ndarray   # R(theta)
    height: np.ndarray   # H_eps(theta)
    eps: float
    panel: float

    @property
    def direction(self) -> np.ndarray:
        return unit(self.theta)

    def __len__(self):
        return self.theta.size

    def scaled(self, factor: float) -> "LayerNodes":
        return LayerNodes(self.theta, self.weight * factor, self.point, self.radius, self.height,
                          self.eps, self.panel)


def panel_edges(lo, hi, width, breaks=()):
    """Edges of panels of at most ``width`` covering ``[lo, hi]`` and honouring ``breaks``."""
    cuts = np.unique(np.concatenate([[lo, hi], np.asarray(breaks, float)]))
    cuts = cuts[(cuts >= lo) & (cuts <= hi)]
    edges = [np.array([lo])]
    for a, b in zip(cuts[:-1], cuts[1:]):
        n = max(1, int(math.ceil((b - a) / width)))
        edges.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(edges)


def gauss_panels(edges, order):
    x, w = leggauss(order)
    a = edges[:-1, None]
    h = np.diff(edges)[:, None]
    nodes = a + 0.5 * h * (x + 1)
    weights = 0.5 * h * w
    return nodes.ravel(), np.broadcast_to(weights, nodes.shape).ravel().copy()


def layer_nodes(field: JumpField, profile: PerturbationProfile, eps: float, order: int = 4,
                panel: float | None = None, window=None) -> LayerNodes:
    """Composite Gauss-Legendre nodes over the theta-support of the jump.

    Panels are at most ``min(eps/4, sqrt(eps) * scale / 4)`` wide and are split at
    the profile's breakpoints so every panel sees a smooth displacement.  ``window``
    restricts the nodes to a theta sub-interval (used for local evaluations).
    """
    curve = field.curve
    lo, hi = field.theta_support
    if window is not None:
        lo, hi = max(lo, window[0]), min(hi, window[1])
    if panel is None:
        panel = min(eps / 4, math.sqrt(eps) * profile.scale / 4)
    if hi <= lo:
        empty = np.empty(0)
        return LayerNodes(empty, empty, np.empty((0, 2)), empty, empty, eps, panel)
    se = math.sqrt(eps)
    mid = curve.theta_mid
    breaks = mid + se * profile.breakpoints((lo - mid) / se, (hi - mid) / se)
    theta, w = gauss_panels(panel_edges(lo, hi, panel, breaks), order)
    height = h_eps(profile, theta - mid, eps)
    weight = w * field.delta_f(theta)
    keep = (height != 0.0) & (weight != 0.0)
    theta, weight, height = theta[keep], weight[keep], height[keep]
    return LayerNodes(theta, weight, curve.point(theta), curve.curvature_radius(theta), height, eps, panel)


def layer_identity(profile: PerturbationProfile, window, integrands, order: int = 16, tol: float = 1e-11):
    """Both sides of the layer switch for ``g(t, u) = exp(a t) cos(b u + c)``.

    Returns ``(direct, via_levels)`` arrays over the integrands ``(a, b, c)``:

    * direct: ``int_I int chi(t, H0(u)) g dt du`` with the t-integral exact;
    * via levels: ``int sgn(t) sum_n int_{U_n(t)} g du dt`` with the u-integral exact and
      t integrated between consecutive critical levels (cosine substitution so the
      square-root behaviour at extrema is integrated accurately).
    """
    lo, hi = float(window[0]), float(window[1])
    integ = np.asarray(integrands, dtype=float).reshape(-1, 3)
    A, B, C = integ[:, 0], integ[:, 1], integ[:, 2]

    # direct side
    edges = panel_edges(lo, hi, profile.scale / 16, profile.breakpoints(lo, hi))
    u, wu = gauss_panels(edges, 8)
    Hu = profile(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        tint = np.where(A[:, None] != 0, np.expm1(A[:, None] * Hu) / np.where(A[:, None] != 0, A[:, None], 1), Hu)
    direct = np.sum(wu * tint * np.cos(B[:, None] * u + C[:, None]), axis=1)

    # level side
    crit = profile.critical_points(lo, hi) if not profile.exact_levels else None
    levels = np.unique(np.concatenate([profile.critical_levels(lo, hi), [0.0]]))
    if profile.flat_tails:
        # interval endpoints move like 1/log(1/t) near 0: grade the mesh geometrically
        near = [lv * 2.0 ** -np.arange(1, 48) for lv in (levels[levels > 0].min(initial=np.inf),
                                                         levels[levels < 0].max(initial=-np.inf))
                if np.isfinite(lv)]
        levels = np.unique(np.concatenate([levels] + near))
    res = None if profile.exact_levels else hi - lo
    x, wx = leggauss(order)
    s = 0.5 * (x + 1)

    def pieces(ta, tb):
        # t = ta + (tb - ta)(1 - cos(pi s))/2 on every piece, vectorised over pieces
        L = (tb - ta)[:, None]
        tn = ta[:, None] + L * 0.5 * (1 - np.cos(np.pi * s))
        jac = L * 0.5 * np.pi * np.sin(np.pi * s) * 0.5 * wx
        flat = tn.ravel()
        vals = np.zeros((flat.size, len(integ)))
        nz = flat != 0.0
        sets = profile.level_sets((lo, hi), flat[nz], xtol=1e-14, resolution=res, critical=crit)
        rows = np.nonzero(nz)[0]
        for r, ivs in zip(rows, sets):
            if not len(ivs):
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                ui = np.where(B[:, None] != 0,
                              (np.sin(B[:, None] * ivs[:, 1] + C[:, None]) - np.sin(B[:, None] * ivs[:, 0] + C[:, None]))
                              / np.where(B[:, None] != 0, B[:, None], 1),
                              np.cos(C[:, None]) * (ivs[:, 1] - ivs[:, 0]))
            vals[r] = math.copysign(1.0, flat[r]) * np.exp(A * flat[r]) * ui.sum(axis=1)
        return np.einsum("pn,pni->pi", jac, vals.reshape(len(ta), order, len(integ)))

    # adaptive refinement: accept a piece when its two halves reproduce it
    ta, tb = levels[:-1], levels[1:]
    keep = tb > ta
    ta, tb = ta[keep], tb[keep]
    whole = pieces(ta, tb)
    via = np.zeros(len(integ))
    for _ in range(30):
        if ta.size == 0:
            break
        mid = 0.5 * (ta + tb)
        left, right = pieces(ta, mid), pieces(mid, tb)
        halves = left + right
        err = np.abs(halves - whole).max(axis=1)
        done = err <= tol
        via += halves[done].sum(axis=0)
        todo = ~done
        ta, tb = np.concatenate([ta[todo], mid[todo]]), np.concatenate([mid[todo], tb[todo]])
        whole = np.concatenate([left[todo], right[todo]])
    else:
        via += whole.sum(axis=0)
    return direct, via
