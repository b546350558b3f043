"""Aperture, interpolation kernel, and the derived kernel tables.

``w`` is the unit-mass centered B-spline of degree ``d_w`` and ``phi`` the centered
B-spline of degree ``d_phi``.  Their convolution ``b = phi * w`` is again a centered
B-spline (degree ``d_phi + d_w + 1``), which gives closed forms for ``psi~_0`` and for
the radial DTB kernel ``K``.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from . import _bspline, _jit


class TableBuildError(RuntimeError):
    """A build-time self-check on the kernel tables failed."""

    def __init__(self, check: str, detail: str):
        super().__init__(f"{check}: {detail}")
        self.check = check


class TableRangeError(ValueError):
    pass


@dataclass(frozen=True)
class ApertureFunction:
    degree: int = 5

    @property
    def support_radius(self) -> float:
        return _bspline.support_radius(self.degree)

    @property
    def beta(self) -> int:
        # w is C^{d-1} with a bounded d-th derivative
        return self.degree - 1

    def __call__(self, u):
        return _bspline.evaluate(self.degree, u)

    def derivative(self, u, order: int = 1):
        return _bspline.evaluate(self.degree, u, order)

    def integral(self) -> float:
        coef = _bspline.piece_coefficients(self.degree)
        p = np.arange(coef.shape[1])
        return float(np.sum(coef / (p + 1)))

    @property
    def coef(self) -> np.ndarray:
        return _bspline.piece_coefficients(self.degree)


@dataclass(frozen=True)
class InterpKernel:
    degree: int = 4

    @property
    def support_radius(self) -> float:
        return _bspline.support_radius(self.degree)

    def __call__(self, u):
        return _bspline.evaluate(self.degree, u)

    def derivative(self, u, order: int = 1):
        return _bspline.evaluate(self.degree, u, order)

    def exactness_errors(self, u) -> tuple[float, float]:
        """Max deviation of ``sum_j phi(u-j)`` from 1 and ``sum_j j phi(u-j)`` from ``u``."""
        u = np.asarray(u, dtype=float)
        r = self.support_radius
        j = np.arange(math.floor(u.min() - r) - 1, math.ceil(u.max() + r) + 2)
        vals = self(u[:, None] - j[None, :])
        e0 = np.abs(vals.sum(axis=1) - 1.0).max()
        e1 = np.abs((vals * j).sum(axis=1) - u).max()
        return float(e0), float(e1)


def hilbert_deriv(kernel: InterpKernel, s):
    """``H(phi')(s)`` with ``H h(s) = (1/pi) p.v. int h(u)/(u-s) du``.

    Exact log-power closed form near the support, moment series beyond
    ``3 * support_radius``; the two agree to rounding at the switch.
    """
    return _bspline.hilbert(kernel.degree, s, deriv=1)


def profile_hilbert(aperture: ApertureFunction, kernel: InterpKernel, s, deriv: int = 1):
    """``H(b^{(deriv)})(s)`` for ``b = phi * w``, i.e. ``(H phi') * w`` when ``deriv = 1``."""
    return _bspline.hilbert(aperture.degree + kernel.degree + 1, s, deriv=deriv)


@dataclass(frozen=True)
class KernelTables:
    d_w: int
    d_phi: int
    beta: float
    m_max: int
    s_max: float
    ds: float
    t_max: float
    dt: float
    r_step: float
    r_b: float
    hphi_s: np.ndarray = field(repr=False)
    hphi: np.ndarray = field(repr=False)
    chi: np.ndarray = field(repr=False)       # (m_max+1, nt) complex: psi~_m(t) e(mt)
    dchi: np.ndarray = field(repr=False)
    k_r: np.ndarray = field(repr=False)
    k_val: np.ndarray = field(repr=False)
    k_der: np.ndarray = field(repr=False)
    checks: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def aperture(self) -> ApertureFunction:
        return ApertureFunction(self.d_w)

    @property
    def kernel(self) -> InterpKernel:
        return InterpKernel(self.d_phi)

    @property
    def t_grid(self) -> np.ndarray:
        n = self.chi.shape[1]
        return -self.t_max + self.dt * np.arange(n)

    @property
    def params(self) -> dict:
        return dict(d_w=self.d_w, d_phi=self.d_phi, beta=self.beta, m_max=self.m_max,
                    s_max=self.s_max, ds=self.ds, t_max=self.t_max, dt=self.dt,
                    r_step=self.r_step)

    def hphi_args(self):
        """Arguments for ``_jit.hilbert_eval`` evaluating ``H(phi')``."""
        n = self.d_phi
        m = n - 1
        binom = np.array([(-1) ** i * math.comb(n + 1, i) for i in range(n + 2)], dtype=float)
        scale = -1.0 / (math.pi * math.factorial(m))
        tail = _bspline.hilbert_tail_coefficients(n, 1)
        return n, m, binom, scale, tail, _bspline.tail_switch(n)

    def k_args(self):
        return self.k_val, self.k_der, 0.0, self.r_step, self.r_b


def psi(tables: KernelTables, q, t):
    """``psi(q,t) = sum_j H(phi')(q-j) w(j-q-t)``; only the ``w`` support contributes."""
    q, t = np.broadcast_arrays(np.asarray(q, float), np.asarray(t, float))
    r = tables.aperture.support_radius
    out = np.zeros(q.shape)
    base = np.floor(q + t - r)
    for off in range(int(2 * r) + 2):
        j = base + off
        out += hilbert_deriv(tables.kernel, q - j) * tables.aperture(j - q - t)
    return out


def psi_fourier(tables: KernelTables, m: int, t):
    """``psi~_m(t) = int_0^1 psi(q,t) e(mq) dq`` from the tabulated envelope."""
    if abs(m) > tables.m_max:
        raise TableRangeError(f"|m|={abs(m)} exceeds M_max={tables.m_max}")
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    row = abs(m)
    out = np.array([_jit.hermite_complex(tables.chi[row], tables.dchi[row], -tables.t_max,
                                         tables.dt, x) for x in flat])
    out = out * np.exp(-2j * np.pi * row * flat)
    if m < 0:
        out = np.conj(out)
    far = np.abs(flat) >= tables.t_max
    if np.any(far) and m == 0:
        out[far] = profile_hilbert(tables.aperture, tables.kernel, flat[far])
    return out.reshape(t.shape)


def psi_fourier_direct(aperture: ApertureFunction, kernel: InterpKernel, m: int, t: float,
                       panels_per_unit: int = 64, order: int = 8) -> complex:
    """Reference quadrature for ``int H(phi')(q) w(-q-t) e(mq) dq``.

    Breakpoints: knots of ``w(-q-t)`` and of ``phi'`` (where ``H(phi')`` loses smoothness).
    """
    r = aperture.support_radius
    lo, hi = -t - r, -t + r
    kr = kernel.support_radius
    bps = {lo, hi}
    bps.update(-t - r + np.arange(1, int(2 * r)))
    bps.update(b for b in (np.arange(kernel.degree + 2) - kr) if lo < b < hi)
    bps = np.array(sorted(bps))
    x, wts = np.polynomial.legendre.leggauss(order)
    total = 0.0 + 0.0j
    for a, b in zip(bps[:-1], bps[1:]):
        n = max(1, int(math.ceil((b - a) * panels_per_unit)))
        edges = np.linspace(a, b, n + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
        half = 0.5 * (edges[1:] - edges[:-1])[:, None]
        q = (mid + half * x).ravel()
        ww = (half * wts).ravel()
        f = hilbert_deriv(kernel, q) * aperture(-q - t) * np.exp(2j * np.pi * m * q)
        total += np.sum(ww * f)
    return complex(total)


def dtb_kernel(tables: KernelTables, r):
    """Radial DTB kernel ``K(r)``; exactly zero beyond the table range."""
    r = np.abs(np.asarray(r, dtype=float))
    out = np.empty(r.size)
    _hermite_many(tables.k_val, tables.k_der, tables.r_step, np.ascontiguousarray(r.ravel()), out)
    return out.reshape(r.shape)


@njit(cache=True)
def _hermite_many(vals, ders, step, xs, out):
    for i in range(xs.size):
        out[i] = _jit.hermite(vals, ders, 0.0, step, xs[i])


def dtb_kernel_direct(aperture: ApertureFunction, kernel: InterpKernel, r, deriv: int = 0,
                      order: int = 24) -> np.ndarray:
    """``K(r) = -(1/pi) int_0^{pi/2} H(b')(r cos a) da`` (and its r-derivative) by split Gauss rules.

    The integrand is even about ``a = pi/2`` so only the first quarter turn is integrated;
    the interval is split wherever ``r cos a`` hits a knot of ``b``.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    nb = aperture.degree + kernel.degree + 1
    knots = np.arange(nb + 2) - (nb + 1) / 2.0
    x, wts = np.polynomial.legendre.leggauss(order)
    out = np.empty_like(r)
    for i, ri in enumerate(r):
        if ri == 0.0:
            out[i] = -0.5 * _bspline.hilbert(nb, np.array([0.0]), deriv=1)[0] if deriv == 0 else 0.0
            continue
        cuts = [0.0, 0.5 * math.pi]
        cuts += [math.acos(k / ri) for k in knots if 0 < k < ri]
        cuts = np.array(sorted(set(cuts)))
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            al = 0.5 * (a + b) + 0.5 * (b - a) * x
            c = np.cos(al)
            if deriv == 0:
                f = _bspline.hilbert(nb, ri * c, deriv=1)
            else:
                f = _bspline.hilbert(nb, ri * c, deriv=2) * c
            total += 0.5 * (b - a) * np.dot(wts, f)
        out[i] = -total / math.pi
    return out


def kernel_mass(aperture: ApertureFunction, kernel: InterpKernel, order: int = 24) -> float:
    """``2 pi int_0^{r_b} K(r) r dr`` by Gauss rules on half-unit panels."""
    nb = aperture.degree + kernel.degree + 1
    rb = (nb + 1) / 2.0
    edges = np.arange(0.0, rb + 0.25, 0.5)
    x, wts = np.polynomial.legendre.leggauss(order)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        rr = 0.5 * (a + b) + 0.5 * (b - a) * x
        total += 0.5 * (b - a) * np.dot(wts, dtb_kernel_direct(aperture, kernel, rr) * rr)
    return 2 * math.pi * total


def kernel_abel(aperture: ApertureFunction, kernel: InterpKernel, r, order: int = 24) -> np.ndarray:
    """Independent route to ``K``: Abel inversion of the radial profile ``b``.

    A radial function whose line integrals equal ``b(p)`` at every angle is
    ``-(1/pi) int_r^inf b'(p) / sqrt(p^2 - r^2) dp``; substituting ``p = r cosh(v)``
    removes the endpoint singularity.
    """
    nb = aperture.degree + kernel.degree + 1
    rb = (nb + 1) / 2.0
    knots = np.arange(nb + 2) - (nb + 1) / 2.0
    x, wts = np.polynomial.legendre.leggauss(order)
    out = []
    for ri in np.atleast_1d(np.asarray(r, dtype=float)):
        if ri >= rb:
            out.append(0.0)
            continue
        total = 0.0
        if ri == 0.0:
            cuts = [k for k in knots if 0 < k < rb] + [rb]
            cuts = [1e-300] + cuts
            # b'(p)/p is regular at 0
            for a, b in zip(cuts[:-1], cuts[1:]):
                p = 0.5 * (a + b) + 0.5 * (b - a) * x
                total += 0.5 * (b - a) * np.dot(wts, _bspline.evaluate(nb, p, 1) / p)
        else:
            cuts = [ri] + [k for k in knots if ri < k < rb] + [rb]
            v_cuts = np.arccosh(np.array(cuts) / ri)
            for a, b in zip(v_cuts[:-1], v_cuts[1:]):
                v = 0.5 * (a + b) + 0.5 * (b - a) * x
                total += 0.5 * (b - a) * np.dot(wts, _bspline.evaluate(nb, ri * np.cosh(v), 1))
        out.append(-total / math.pi)
    return np.array(out)


@njit(cache=True)
def _envelope_matrix(t, u, n, m, binom, scale, tail, switch):
    out = np.empty((t.size, u.size))
    for i in range(t.size):
        for l in range(u.size):
            out[i, l] = _jit.hilbert_eval(t[i] + u[l], n, m, binom, scale, tail, switch)
    return out


def _envelope_tables(aperture, kernel, hargs, m_max, t_max, dt, order=8):
    """``chi_m(t) = psi~_m(t) e(mt) = int w(u) e(-mu) H(phi')(t+u) du`` and its t-derivative.

    u-panels of width ``dt`` line up with every breakpoint because ``t`` lives on the same
    lattice (the breakpoints are integers and half-integers minus ``t``).
    """
    r = aperture.support_radius
    npan = int(round(2 * r / dt))
    x, wts = np.polynomial.legendre.leggauss(order)
    edges = -r + dt * np.arange(npan + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    u = (mid + 0.5 * dt * x).ravel()
    wu = np.tile(0.5 * dt * wts, npan)
    nt = int(round(2 * t_max / dt)) + 1
    t = -t_max + dt * np.arange(nt)
    ms = np.arange(m_max + 1)
    phase = np.exp(-2j * np.pi * np.outer(u, ms))
    wv = aperture(u)
    wd = aperture.derivative(u)
    right_v = (wu * wv)[:, None] * phase
    right_d = -((wu * wd)[:, None] * phase - right_v * (2j * np.pi * ms))
    # pair real and imaginary parts so the product stays a real GEMM
    rv = np.hstack([right_v.real, right_v.imag])
    rd = np.hstack([right_d.real, right_d.imag])
    chi = np.empty((nt, ms.size), complex)
    dchi = np.empty((nt, ms.size), complex)
    k = ms.size
    for start in range(0, nt, 256):
        sl = slice(start, min(nt, start + 256))
        G = _envelope_matrix(t[sl], u, *hargs)
        a = G @ rv
        b = G @ rd
        chi[sl] = a[:, :k] + 1j * a[:, k:]
        dchi[sl] = b[:, :k] + 1j * b[:, k:]
    return np.ascontiguousarray(chi.T), np.ascontiguousarray(dchi.T)


def build_tables(d_w: int = 5, d_phi: int = 4, beta: float = 3.5, m_max: int = 64,
                 s_max: float = 32.0, ds: float = 1.0 / 64, t_max: float = 32.0,
                 dt: float = 1.0 / 64, r_step: float = 1.0 / 256, seed: int = 12345,
                 verify: bool = True) -> KernelTables:
    """Build and self-check all kernel tables; deterministic in the parameters."""
    aperture = ApertureFunction(d_w)
    kernel = InterpKernel(d_phi)
    rng = np.random.default_rng(seed)
    checks = {}

    u = rng.uniform(-50, 50, 1000)
    e0, e1 = kernel.exactness_errors(u)
    checks["ik2_partition"] = e0
    checks["ik2_first_moment"] = e1
    if e0 > 1e-12:
        raise TableBuildError("IK2 partition of unity", f"max error {e0:.3e}")
    if e1 > 1e-12:
        raise TableBuildError("IK2 first-moment exactness", f"max error {e1:.3e}")
    mass = aperture.integral()
    checks["af2_mass_error"] = abs(mass - 1.0)
    if abs(mass - 1.0) > 1e-12:
        raise TableBuildError("AF2 unit mass", f"int w = {mass!r}")
    if not 3 <= beta <= d_phi:
        raise TableBuildError("smoothness order", f"need 3 <= beta <= d_phi, got beta={beta}, d_phi={d_phi}")
    if d_w < math.ceil(beta) + 1:
        raise TableBuildError("aperture smoothness", f"need d_w >= ceil(beta)+1, got d_w={d_w}")
    if m_max < 0:
        raise TableBuildError("M_max", "must be non-negative")
    if abs(round(1.0 / dt) * dt - 1.0) > 1e-15 or round(1.0 / dt) % 2:
        raise TableBuildError("t-grid", "dt must be 1/(even integer) to align breakpoints")

    hphi_s = -s_max + ds * np.arange(int(round(2 * s_max / ds)) + 1)
    hphi = hilbert_deriv(kernel, hphi_s)

    proto = KernelTables(d_w, d_phi, beta, m_max, s_max, ds, t_max, dt, r_step, 0.0,
                         hphi_s, hphi, np.zeros((1, 1), complex), np.zeros((1, 1), complex),
                         np.zeros(1), np.zeros(1), np.zeros(1))
    chi, dchi = _envelope_tables(aperture, kernel, proto.hphi_args(), m_max, t_max, dt)

    r_b = aperture.support_radius + kernel.support_radius
    r_max = r_b + 1.5
    k_r = r_step * np.arange(int(round(r_max / r_step)) + 1)
    k_val = dtb_kernel_direct(aperture, kernel, k_r)
    k_der = dtb_kernel_direct(aperture, kernel, k_r, deriv=1)
    # beyond r_b K vanishes identically; store exact zeros so interpolation respects support
    outside = k_r > r_b
    checks["k_outside_max"] = float(np.abs(k_val[outside]).max()) if outside.any() else 0.0
    checks["k_max"] = float(np.abs(k_val).max())

    tables = KernelTables(d_w, d_phi, beta, m_max, s_max, ds, t_max, dt, r_step, r_b,
                          hphi_s, hphi, chi, dchi, k_r,
                          np.where(outside, 0.0, k_val), np.where(outside, 0.0, k_der), checks)
    if verify:
        verify_tables(tables, rng)
    return tables


def verify_tables(tables: KernelTables, rng=None) -> dict:
    """Run the build-time invariants; raise ``TableBuildError`` naming the first failure."""
    rng = np.random.default_rng(0) if rng is None else rng
    ap, ker = tables.aperture, tables.kernel
    c = tables.checks

    # psi~_0 from the table against the closed form H(b')(-t)
    t = rng.uniform(-tables.t_max + 1, tables.t_max - 1, 64)
    got = psi_fourier(tables, 0, t).real
    ref = profile_hilbert(ap, ker, -t)
    err = float(np.abs(got - ref).max())
    c["psi0_consistency"] = err
    if err > 1e-8:
        raise TableBuildError("psi~_0 consistency", f"max error {err:.3e}")

    kmax = c["k_max"]
    if c["k_outside_max"] > 1e-6 * kmax:
        raise TableBuildError("K compact support", f"|K| = {c['k_outside_max']:.3e} beyond r_b")
    mass = kernel_mass(ap, ker)
    c["k_mass_error"] = abs(mass - 1.0)
    if abs(mass - 1.0) > 1e-6:
        raise TableBuildError("K unit mass", f"2 pi int K r dr = {mass!r}")

    if tables.m_max > 0:
        q = rng.uniform(0, 1, 100)
        tt = rng.uniform(-20, 20, 100)
        direct = psi(tables, q, tt)
        ms = np.arange(-tables.m_max, tables.m_max + 1)
        synth = np.zeros(q.size, complex)
        for m in ms:
            synth += psi_fourier(tables, int(m), tt) * np.exp(-2j * np.pi * m * q)
        err = float(np.abs(synth.real - direct).max())
        c["resynthesis"] = err
        if err > 1e-6:
            raise TableBuildError("Fourier resynthesis", f"max error {err:.3e}")
    return c


# ---------------------------------------------------------------- cache file

MAGIC = b"RGEDGKT\x00"
VERSION = 1
_ARRAYS = ("hphi_s", "hphi", "chi", "dchi", "k_r", "k_val", "k_der")


def save_tables(tables: KernelTables, path) -> None:
    """Binary cache: magic, uint32 version, uint32 header length, JSON header, then
    little-endian float64 payloads in header order (complex arrays as interleaved re/im)."""
    arrays = {name: getattr(tables, name) for name in _ARRAYS}
    header = dict(params=tables.params, r_b=tables.r_b, checks=tables.checks,
                  arrays=[[n, list(a.shape), bool(np.iscomplexobj(a))] for n, a in arrays.items()])
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for a in arrays.values():
            data = a.view(np.float64) if np.iscomplexobj(a) else a
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def load_tables(path) -> KernelTables:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path}: not a kernel table file")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported table version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays = {}
        for name, shape, cplx in header["arrays"]:
            count = int(np.prod(shape)) * (2 if cplx else 1)
            data = np.frombuffer(fh.read(8 * count), dtype="<f8").astype(np.float64)
            arrays[name] = (data.view(np.complex128) if cplx else data).reshape(shape)
    p = header["params"]
    return KernelTables(p["d_w"], p["d_phi"], p["beta"], p["m_max"], p["s_max"], p["ds"],
                        p["t_max"], p["dt"], p["r_step"], header["r_b"], checks=header["checks"],
                        **arrays)


def load_or_build(path, **params) -> KernelTables:
    """Reuse a cached table file when its parameters match, otherwise rebuild and save."""
    path = Path(path)
    if path.exists():
        try:
            tables = load_tables(path)
        except ValueError:
            tables = None
        if tables is not None:
            defaults = build_defaults()
            defaults.update(params)
            if all(tables.params.get(k) == v for k, v in defaults.items() if k in tables.params):
                return tables
    tables = build_tables(**params)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_tables(tables, path)
    return tables


def build_defaults() -> dict:
    return dict(d_w=5, d_phi=4, beta=3.5, m_max=64, s_max=32.0, ds=1.0 / 64, t_max=32.0,
                dt=1.0 / 64, r_step=1.0 / 256)
