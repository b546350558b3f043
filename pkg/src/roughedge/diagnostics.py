"""Generic-point checks, irrational-type evidence and oscillatory-sum probes.

The reconstruction error splits into Fourier modes of the detector phase.  Mode m at
the point x = x0 + eps*xc is

    E_m(x) = -(d_alpha / 2 pi) sum_k e(-m (alpha_k . x - pbar) / eps) g_m(alpha_k),
    g_m(alpha) = eps^-2 int psi~_m(alpha . (y - x) / eps) f_eps(y) dy,

m = 0 being the DTB term.  ``exp_sum_W`` reports eps |sum_k ...| over an angle window,
which is the quantity whose cancellation drives the error bound; everything is built
from the same kernel tables and layer nodes as the reconstruction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np
from numba import njit, prange

from . import _bspline, _jit
from .geometry import BoundaryCurve, Case, classify_point, to_normal_coords, unit_perp
from .kernels import KernelTables, TableRangeError
from .perturbation import JumpField, LayerNodes, PerturbationProfile, layer_nodes
from .sinogram import DEFAULT_ABAR, DEFAULT_PBAR, SinogramGrid

DIGITS = 60
# consecutive best approximations below this denominator are dominated by small-integer effects
TYPE_BURN_IN = 8
RATIONAL_TOL = 1e-14


class RationalInputError(ValueError):
    def __init__(self, m: int, value):
        super().__init__(f"input looks rational: <{m} s> = 0 to working precision (s = {value})")
        self.m = m


class KusminLandauError(ValueError):
    pass


# ---------------------------------------------------------------- number theory

def frac_dist(s):
    """Distance to the nearest integer."""
    s = np.asarray(s, dtype=float)
    out = np.abs(s - np.round(s))
    return float(out) if out.ndim == 0 else out


def exact_constant(name: str, digits: int = DIGITS) -> Decimal:
    """``golden``, ``silver``, ``sqrt:N`` or a decimal literal, to ``digits`` significant digits."""
    with localcontext() as ctx:
        ctx.prec = digits + 5
        key = name.strip().lower()
        if key == "golden":
            v = (1 + Decimal(5).sqrt()) / 2
        elif key == "silver":
            v = 1 + Decimal(2).sqrt()
        elif key.startswith("sqrt:"):
            v = Decimal(key[5:]).sqrt()
        else:
            v = Decimal(name)
        ctx.prec = digits
        return +v


def continued_fraction(value, terms: int = 40) -> list[int]:
    """Partial quotients of ``value`` (float, Decimal, Fraction or string).

    Floats are expanded only while the convergent denominators stay below 2**26, beyond
    which the quotients describe rounding error rather than the number."""
    limit = None
    if isinstance(value, float):
        limit = 2 ** 26
    elif isinstance(value, Decimal):
        limit = 10 ** (len(value.as_tuple().digits) // 2 - 1)
    x = value if isinstance(value, Fraction) else Fraction(value)
    out = []
    q_prev, q = 1, 0
    while len(out) < terms:
        a = math.floor(x)
        out.append(int(a))
        q_prev, q = q, a * q + q_prev
        frac = x - a
        if frac == 0 or (limit is not None and q > limit):
            break
        x = 1 / frac
    return out


def convergents(quotients) -> list[tuple[int, int]]:
    p_prev, p = 1, quotients[0]
    q_prev, q = 0, 1
    out = [(p, q)]
    for a in quotients[1:]:
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        out.append((p, q))
    return out


def _best_approximations_float(s: float, M: int):
    m = np.arange(1, M + 1, dtype=float)
    d = frac_dist(m * s)
    zero = np.nonzero(d < RATIONAL_TOL)[0]
    if zero.size:
        raise RationalInputError(int(zero[0]) + 1, s)
    running = np.minimum.accumulate(d)
    rec = np.nonzero(np.concatenate([[True], running[1:] < running[:-1]]))[0]
    return (rec + 1).astype(float), d[rec]


def _best_approximations_exact(s: Fraction, M: int):
    terms = continued_fraction(s, terms=200)
    qs, ds = [], []
    for p, q in convergents(terms):
        if q > M:
            break
        d = abs(q * s - p)
        if d == 0 or float(d) < RATIONAL_TOL:
            raise RationalInputError(q, float(s))
        if qs and q == qs[-1]:
            continue
        qs.append(q)
        ds.append(float(d))
    return np.array(qs, float), np.array(ds)


def estimate_type(s, M: int = 10 ** 5) -> float:
    """Evidence for the type of ``s`` from its best approximations with denominators <= M.

    If ``<q s> ~ C q^-eta`` along the best approximations q_i, the slope
    ``log(d_i / d_j) / log(q_j / q_i)`` between two of them is ``eta`` with the constant C
    cancelled.  The estimate is the largest slope over pairs with ``8 <= q_i`` and
    ``q_j >= q_i^2`` (well separated on a log scale, so one large partial quotient cannot
    dominate), clipped below at 1 since every irrational has type >= 1.  Enlarging M only
    adds pairs, so the estimate is nondecreasing in M.

    Floats are scanned directly over m = 1..M; Decimal, Fraction and string input go
    through exact continued fractions.
    """
    if not 1 <= M <= 10 ** 6:
        raise ValueError("probe bound M must lie in [1, 1e6]")
    if isinstance(s, (float, int, np.floating, np.integer)):
        q, d = _best_approximations_float(float(s), int(M))
    else:
        q, d = _best_approximations_exact(Fraction(s), int(M))
    eta = 1.0
    for i in range(len(q)):
        if q[i] < TYPE_BURN_IN:
            continue
        for j in range(i + 1, len(q)):
            if q[j] >= q[i] ** 2:
                eta = max(eta, math.log(d[i] / d[j]) / math.log(q[j] / q[i]))
    return eta


# ---------------------------------------------------------------- named points

def named_point(name: str, radius: float = 1.0, a: float = 0.125):
    """Circle and point for the shipped constructions.

    ``golden-on-curve``: |x0| = golden ratio, theta0-perp . x0 = sqrt 2 - 1, x0 on the circle
    with outward normal direction at theta = 0.  ``resonant-on-curve``: x0 = (3/4, 1), so
    |x0| = 5/4 and theta0-perp . x0 = 1.  ``case-c``: the golden circle with a point 0.3
    inside the disk, where no line through x0 is tangent to S.

    The default half-extent keeps the jump support clear of the arc point whose normal
    passes through the origin (theta ~ 0.16 for the golden circle), where the phases
    alpha . y / eps are stationary and p-sampling aliases along that point's tangent.

    Returns ``(curve, x0, exact)`` with ``exact`` holding 60-digit values of |x0| and
    theta0-perp . x0 where known.
    """
    name = name.lower()
    if name in ("golden-on-curve", "case-c"):
        golden = exact_constant("golden")
        perp = exact_constant("sqrt:2") - 1
        with localcontext() as ctx:
            ctx.prec = DIGITS
            along = (golden * golden - perp * perp).sqrt()
        x0 = np.array([float(along), float(perp)])
        exact = dict(norm=golden, perp=perp)
    elif name == "resonant-on-curve":
        x0 = np.array([0.75, 1.0])
        exact = dict(norm=Decimal("1.25"), perp=Decimal(1))
    else:
        raise ValueError(f"unknown named point {name!r}")
    curve = BoundaryCurve.circle(center=(x0[0] + radius, x0[1]), radius=radius, a=a, theta_mid=0.0)
    if name == "case-c":
        return curve, x0 + np.array([0.3, 0.0]), {}
    return curve, x0, exact


# ---------------------------------------------------------------- P1-P4

@dataclass
class GenericityReport:
    x0: tuple
    kappa: float
    case: str
    kappa_norm: float                 # kappa |x0|
    kappa_perp: float | None          # kappa theta0-perp . x0 (case A)
    quotients_norm: list = field(default_factory=list)
    quotients_perp: list = field(default_factory=list)
    eta_norm: float | None = None
    eta_perp: float | None = None
    P1: bool = True
    P2: bool = True
    P3: bool = False
    P4: bool | None = None
    eta0: float | None = None
    probe_bound: int = 10 ** 5
    notes: list = field(default_factory=list)

    @property
    def mu(self):
        return None if self.kappa_perp is None else -self.kappa_perp

    @property
    def generic(self) -> bool:
        return self.P1 and self.P2 and self.P3 and self.P4 is not False

    def to_text(self) -> str:
        lines = [f"x0 = ({self.x0[0]:.15g}, {self.x0[1]:.15g}), kappa = {self.kappa:g}, case {self.case}",
                 f"kappa |x0| = {self.kappa_norm:.15g}; partial quotients {self.quotients_norm}",
                 f"  type estimate (best approximations up to {self.probe_bound}): {self.eta_norm}"]
        if self.kappa_perp is not None:
            lines += [f"kappa theta0perp . x0 = {self.kappa_perp:.15g} (mu = {self.mu:.15g}); "
                      f"partial quotients {self.quotients_perp}",
                      f"  type estimate: {self.eta_perp}"]
        lines += [f"P1 {self.P1}  P2 {self.P2}  P3 {self.P3}  P4 {self.P4}  eta0 {self.eta0}"]
        lines += [f"note: {n}" for n in self.notes]
        lines.append("type values are numerical evidence from finitely many quotients, not proofs")
        return "\n".join(lines)


def _number_evidence(value, exact, M):
    """(quotients, eta or None, rational flag)."""
    src = exact if exact is not None else float(value)
    quotients = continued_fraction(src, 40)
    try:
        eta = estimate_type(src, M)
    except RationalInputError:
        return quotients, None, True
    return quotients, eta, False


def check_point_conditions(curve: BoundaryCurve, x0, kappa: float = 1.0, exact: dict | None = None,
                           M: int = 10 ** 5, eta_cap: float = 4.0) -> GenericityReport:
    """Report on the generic-point conditions; failures are fields, never exceptions.

    ``exact`` may carry Decimal values ``norm`` (|x0|) and ``perp`` (theta0-perp . x0) so
    that the quotients come from 60-digit arithmetic instead of the float.
    """
    x0 = np.asarray(x0, dtype=float)
    exact = exact or {}
    pc = classify_point(curve, x0)
    norm = float(np.hypot(*x0))
    rep = GenericityReport(tuple(x0), kappa, pc.case.value, kappa * norm, None, probe_bound=M)
    kap = Decimal(kappa)

    if norm == 0.0:
        rep.P3, rep.P4 = False, False
        rep.notes.append("x0 = 0 is excluded: the perpendicular and radial products vanish")
        return rep

    # P1: tangency only at points of nonzero curvature; the curve class is strictly convex
    rep.P1 = bool(np.all(np.isfinite(curve.curvature_radius(np.linspace(curve.theta_lo, curve.theta_hi, 257)))))
    if curve.kind == "circle":
        rep.notes.append("P1 is automatic on a circle")

    # P2: the line through 0 and x0 is not tangent to S
    normal = np.array([-x0[1], x0[0]]) / norm
    rep.P2 = True
    for sgn in (1.0, -1.0):
        th = math.atan2(sgn * normal[1], sgn * normal[0])
        for shift in (-2 * math.pi, 0.0, 2 * math.pi):
            t = th + shift
            if curve.theta_lo <= t <= curve.theta_hi:
                gap = abs(float(normal @ curve.point(t)))
                if gap <= 1e-9 * curve.scale:
                    rep.P2 = False
                    rep.notes.append(f"line through 0 and x0 touches S at theta = {t:.6g}")

    en = exact.get("norm")
    rep.quotients_norm, rep.eta_norm, rational = _number_evidence(
        kappa * norm, None if en is None else kap * Decimal(en), M)
    rep.P3 = (not rational) and rep.eta_norm < eta_cap
    types = [rep.eta_norm] if rep.eta_norm is not None else []

    if pc.case == Case.A:
        theta0 = to_normal_coords(curve, x0).theta
        perp = float(unit_perp(theta0) @ x0)
        rep.kappa_perp = kappa * perp
        ep = exact.get("perp")
        rep.quotients_perp, rep.eta_perp, rational = _number_evidence(
            kappa * perp, None if ep is None else kap * Decimal(ep), M)
        rep.P4 = (not rational) and rep.eta_perp < eta_cap
        if rep.eta_perp is not None:
            types.append(rep.eta_perp)
    rep.eta0 = max(types) if types else None
    return rep


# ---------------------------------------------------------------- Kusmin-Landau

@dataclass(frozen=True)
class KusminLandau:
    lam: float
    c: float
    envelope: float
    direct: float

    @property
    def holds(self) -> bool:
        return self.direct <= self.envelope


def weighted_exp_sum(phase, weights=None) -> complex:
    """``sum_n weights_n e(phase_n)`` with compensated accumulation of both parts."""
    phase = np.asarray(phase, dtype=float)
    z = np.exp(2j * np.pi * np.mod(phase, 1.0))
    if weights is not None:
        z = z * np.asarray(weights)
    return complex(math.fsum(z.real), math.fsum(z.imag))


def kusmin_landau_bound(derivative, lam: float | None = None, c: float = 3.0, phase=None) -> KusminLandau:
    """Envelope ``c / lam`` for ``|sum e(theta(n))|`` when theta' stays ``lam`` away from
    the integers and is monotone; also returns the directly summed value.

    ``derivative`` holds theta'(n) at the summation points; ``phase`` holds theta(n) and
    defaults to the cumulative sum of the derivative.
    """
    d = np.asarray(derivative, dtype=float)
    if d.size == 0:
        raise KusminLandauError("empty sum")
    steps = np.diff(d)
    scale = max(1.0, float(np.abs(d).max())) * 1e-13
    if not (np.all(steps >= -scale) or np.all(steps <= scale)):
        raise KusminLandauError("phase derivative is not monotone")
    if np.floor(d.min()) != np.floor(d.max()) or np.any(frac_dist(d) == 0.0):
        raise KusminLandauError(f"phase derivative crosses an integer in [{d.min():.6g}, {d.max():.6g}]")
    gap = float(np.min(frac_dist(d)))
    lam = gap if lam is None else float(lam)
    if not 0 < lam <= gap + 1e-15:
        raise KusminLandauError(f"distance to the integers {gap:.3g} is below lambda = {lam:.3g}")
    if phase is None:
        phase = np.concatenate([[0.0], np.cumsum(d[:-1])])
    direct = abs(weighted_exp_sum(phase))
    return KusminLandau(lam, c, c / lam, direct)


# ---------------------------------------------------------------- mode amplitudes g_m

_GLT = np.polynomial.legendre.leggauss(8)
_GLT_X = 0.5 * (_GLT[0] + 1)
_GLT_W = 0.5 * _GLT[1]


def _tail_params(tables: KernelTables):
    """Even inverse-power series of H(b') used for |t| beyond the table (m = 0 only)."""
    nb = tables.d_w + tables.d_phi + 1
    tail = _bspline.hilbert_tail_coefficients(nb, 1)
    return np.ascontiguousarray(tail[1::2][:20])


@njit(cache=True)
def _modes_one(ca, sa, ms, y1, y2, cth, sth, R, H, wt, x1, x2, eps, chi, dchi, tmax, dt, odd, gx, gw, out):
    nm = ms.size
    need_tail = False
    for mi in range(nm):
        if ms[mi] == 0:
            need_tail = True
    for mi in range(nm):
        out[mi] = 0.0
    for i in range(y1.size):
        a0 = (ca * (y1[i] - x1) + sa * (y2[i] - x2)) / eps
        slope = (ca * cth[i] + sa * sth[i]) / eps
        a1 = a0 + H[i] * slope
        lo = min(a0, a1)
        hi = max(a0, a1)
        near = not (lo >= tmax or hi <= -tmax)
        if not near and not need_tail:
            continue
        for g in range(gx.size):
            t = H[i] * gx[g]
            arg = a0 + t * slope
            jac = gw[g] * H[i] * (R[i] - t) * wt[i]
            inside = abs(arg) < tmax
            for mi in range(nm):
                m = ms[mi]
                if m == 0:
                    if inside:
                        v = _jit.hermite_complex(chi[0], dchi[0], -tmax, dt, arg).real
                    else:
                        inv2 = 1.0 / (arg * arg)
                        acc = 0.0
                        for l in range(odd.size - 1, -1, -1):
                            acc = acc * inv2 + odd[l]
                        v = acc * inv2
                    out[mi] += jac * v
                elif inside:
                    z = _jit.hermite_complex(chi[m], dchi[m], -tmax, dt, arg)
                    ph = -2.0 * math.pi * m * arg
                    out[mi] += jac * z * complex(math.cos(ph), math.sin(ph))
    for mi in range(nm):
        out[mi] /= eps * eps


@njit(parallel=True, cache=True)
def _modes(alphas, ms, y1, y2, cth, sth, R, H, wt, x1, x2, eps, chi, dchi, tmax, dt, odd, gx, gw, out):
    for a in prange(alphas.size):
        _modes_one(math.cos(alphas[a]), math.sin(alphas[a]), ms, y1, y2, cth, sth, R, H, wt, x1, x2, eps,
                   chi, dchi, tmax, dt, odd, gx, gw, out[a])


def probe_nodes(field: JumpField, profile: PerturbationProfile, eps: float, m_max: int = 8) -> LayerNodes:
    """Layer nodes fine enough that psi~_m(alpha.(y-x)/eps) e(-m .) is resolved for |m| <= m_max."""
    panel = min(eps / (8 * max(1, m_max)), math.sqrt(eps) * profile.scale / 16)
    return layer_nodes(field, profile, eps, order=6, panel=panel)


def mode_amplitudes(tables: KernelTables, nodes: LayerNodes, ms, alphas, x) -> np.ndarray:
    """``g_m(alpha)`` for every alpha (rows) and m >= 0 (columns)."""
    ms = np.asarray(ms, dtype=np.int64).ravel()
    if ms.size and (ms.min() < 0 or ms.max() > tables.m_max):
        raise TableRangeError(f"modes must lie in 0..{tables.m_max}")
    alphas = np.ascontiguousarray(np.asarray(alphas, dtype=float).ravel())
    out = np.zeros((alphas.size, ms.size), complex)
    if len(nodes) and alphas.size:
        x = np.asarray(x, float)
        _modes(alphas, ms, np.ascontiguousarray(nodes.point[:, 0]), np.ascontiguousarray(nodes.point[:, 1]),
               np.cos(nodes.theta), np.sin(nodes.theta), nodes.radius, nodes.height, nodes.weight,
               float(x[0]), float(x[1]), nodes.eps, tables.chi, tables.dchi, tables.t_max, tables.dt,
               _tail_params(tables), _GLT_X, _GLT_W, out)
    return out


# ---------------------------------------------------------------- W_m probes

@dataclass(frozen=True)
class ExpSumProbe:
    m: int
    eps: float
    interval: tuple
    W: float
    envelope: float
    lam: float
    terms: int

    def row(self) -> dict:
        return dict(m=self.m, eps=self.eps, W=self.W, envelope=self.envelope)


def _window(grid: SinogramGrid, interval):
    a = grid.alpha
    sel = (a >= interval[0]) & (a <= interval[1])
    return a[sel]


def default_interval(curve: BoundaryCurve, x0, half_width: float = 0.2) -> tuple:
    x0 = np.asarray(x0, float)
    pc = classify_point(curve, x0)
    if pc.case == Case.A:
        th = to_normal_coords(curve, x0).theta
    elif pc.tangency_angles:
        th = pc.tangency_angles[0]
    else:
        raise ValueError("exponential-sum probes need a point on S or on a tangent line of S")
    th = math.remainder(th, math.pi)
    return (max(-math.pi / 2, th - half_width), min(math.pi / 2, th + half_width))


def exp_sum_probes(tables: KernelTables, field: JumpField, profile: PerturbationProfile, ms, eps: float,
                   x0, x_check=(0.0, 0.0), interval=None, kappa: float = 1.0, pbar: float = DEFAULT_PBAR,
                   abar: float = DEFAULT_ABAR, nodes: LayerNodes | None = None, amplitude=None,
                   c: float = 3.0) -> list[ExpSumProbe]:
    """``W_m = eps |sum_{alpha_k in I} e(-m (alpha_k . x - pbar)/eps) g_m(alpha_k)|`` for each m.

    ``amplitude`` (callable of alpha and m) replaces g_m, which makes the bare phase sum
    available for checks.  The envelope is the partial-summation form of the
    Kusmin-Landau bound, ``eps (|g|_max + TV(g)) c / lambda``, and is infinite when the
    step phase crosses an integer on the window.
    """
    ms = [int(m) for m in np.atleast_1d(ms)]
    if any(m < 0 for m in ms):
        raise ValueError("use m >= 0; W_-m equals W_m")
    x0 = np.asarray(x0, float)
    x = x0 + eps * np.asarray(x_check, float)
    interval = tuple(interval) if interval is not None else default_interval(field.curve, x0)
    grid = SinogramGrid(eps, kappa, pbar, abar)
    alphas = _window(grid, interval)
    if amplitude is None:
        if nodes is None:
            nodes = probe_nodes(field, profile, eps, max(ms + [1]))
        g = mode_amplitudes(tables, nodes, ms, alphas, x)
    else:
        g = np.stack([np.asarray(amplitude(alphas, m), complex) * np.ones(alphas.size) for m in ms], axis=1)
    proj = np.cos(alphas) * x[0] + np.sin(alphas) * x[1]
    step = -kappa * (-np.sin(alphas) * x[0] + np.cos(alphas) * x[1])
    out = []
    for col, m in enumerate(ms):
        gm = g[:, col]
        W = eps * abs(weighted_exp_sum(-m * (proj - pbar) / eps, gm)) if alphas.size else 0.0
        lam, env = 0.0, math.inf
        if m == 0 or not alphas.size:
            env = math.inf
        else:
            try:
                kl = kusmin_landau_bound(m * step, c=c)
                lam = kl.lam
                amp = float(np.abs(gm).max()) + float(np.abs(np.diff(gm)).sum())
                env = eps * amp * kl.envelope
            except KusminLandauError:
                pass
        out.append(ExpSumProbe(m, eps, interval, float(W), float(env), float(lam), int(alphas.size)))
    return out


def exp_sum_W(tables, field, profile, m: int, eps: float, x0, x_check=(0.0, 0.0), interval=None,
              **kw) -> ExpSumProbe:
    return exp_sum_probes(tables, field, profile, [m], eps, x0, x_check, interval, **kw)[0]


def mode_decomposition(tables: KernelTables, field: JumpField, profile: PerturbationProfile, eps: float, x,
                       m_max: int, kappa: float = 1.0, pbar: float = DEFAULT_PBAR, abar: float = DEFAULT_ABAR,
                       nodes: LayerNodes | None = None) -> np.ndarray:
    """Real contributions ``E_0..E_m_max`` of each mode pair +-m to ``f_rec(x)`` over all angles."""
    x = np.asarray(x, float)
    grid = SinogramGrid(eps, kappa, pbar, abar)
    alphas = grid.alpha
    ms = np.arange(m_max + 1)
    if nodes is None:
        nodes = probe_nodes(field, profile, eps, max(1, m_max))
    g = mode_amplitudes(tables, nodes, ms, alphas, x)
    q = (np.cos(alphas) * x[0] + np.sin(alphas) * x[1] - pbar) / eps
    out = np.empty(ms.size)
    for m in ms:
        s = weighted_exp_sum(-m * q, g[:, m])
        out[m] = -grid.d_alpha / (2 * math.pi) * (s.real if m == 0 else 2 * s.real)
    return out


# ---------------------------------------------------------------- m = 0 Riemann sum

@dataclass(frozen=True)
class RiemannDiscrepancy:
    eps: float
    interval: tuple
    J: float
    integral: float
    riemann: float


def riemann_discrepancy(tables: KernelTables, field: JumpField, profile: PerturbationProfile, eps: float,
                        x0, x_check=(0.0, 0.0), interval=None, kappa: float = 1.0, abar: float = DEFAULT_ABAR,
                        sub: int = 2, order: int = 8, nodes: LayerNodes | None = None) -> RiemannDiscrepancy:
    """``J = sum_k int_{alpha_k +- d_alpha/2} |A0(alpha) - A0(alpha_k)| d alpha`` over the
    angles in ``interval``, with ``A0 = g_0`` the DTB-side amplitude.

    Each half cell is split into ``sub`` Gauss-Legendre panels of ``order`` points.
    """
    x = np.asarray(x0, float) + eps * np.asarray(x_check, float)
    interval = tuple(interval) if interval is not None else default_interval(field.curve, x0, 0.25)
    grid = SinogramGrid(eps, kappa, abar=abar)
    centres = _window(grid, interval)
    h = grid.d_alpha / 2
    gx, gw = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-h, h, 2 * sub + 1)
    offs, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        offs.append(0.5 * (a + b) + 0.5 * (b - a) * gx)
        wts.append(0.5 * (b - a) * gw)
    offs, wts = np.concatenate(offs), np.concatenate(wts)
    if nodes is None:
        nodes = layer_nodes(field, profile, eps, order=4)
    pts = (centres[:, None] + offs[None, :]).ravel()
    a_pts = mode_amplitudes(tables, nodes, [0], pts, x)[:, 0].real.reshape(centres.size, offs.size)
    a_ctr = mode_amplitudes(tables, nodes, [0], centres, x)[:, 0].real
    J = float(np.sum(np.abs(a_pts - a_ctr[:, None]) @ wts))
    integral = float(np.sum(a_pts @ wts))
    return RiemannDiscrepancy(eps, interval, J, integral, float(grid.d_alpha * a_ctr.sum()))
