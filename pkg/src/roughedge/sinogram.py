"""Aperture-sampled parallel-beam data

    f_hat(alpha_k, p_j) = 1/eps * int w((p_j - alpha_k . y) / eps) f(y) dy

on the grid ``p_j = pbar + j eps``, ``alpha_k = abar + k kappa eps``, ``|alpha_k| <= pi/2``.

Rows are stored ragged: row ``k`` keeps only the ``j`` whose aperture footprint meets
the object, everything else is an exact zero.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange
from numpy.polynomial.legendre import leggauss

from . import _jit
from .kernels import ApertureFunction
from .perturbation import JumpField, LayerNodes, PerturbationProfile, f_eps_eval, layer_nodes

DEFAULT_PBAR = 0.0417
DEFAULT_ABAR = 0.0831


@dataclass(frozen=True)
class SinogramGrid:
    eps: float
    kappa: float = 1.0
    pbar: float = DEFAULT_PBAR
    abar: float = DEFAULT_ABAR

    def __post_init__(self):
        if not self.eps > 0 or not self.kappa > 0:
            raise ValueError("eps and kappa must be positive")

    @property
    def d_alpha(self) -> float:
        return self.kappa * self.eps

    @property
    def d_p(self) -> float:
        return self.eps

    @property
    def k(self) -> np.ndarray:
        k0 = math.ceil((-math.pi / 2 - self.abar) / self.d_alpha)
        k1 = math.floor((math.pi / 2 - self.abar) / self.d_alpha)
        k = np.arange(k0, k1 + 1)
        a = self.abar + k * self.d_alpha
        return k[np.abs(a) <= math.pi / 2]

    @property
    def alpha(self) -> np.ndarray:
        return self.abar + self.k * self.d_alpha

    def p(self, j) -> np.ndarray:
        return self.pbar + np.asarray(j) * self.eps

    def to_dict(self) -> dict:
        return dict(eps=self.eps, kappa=self.kappa, pbar=self.pbar, abar=self.abar)


@dataclass(frozen=True)
class Sinogram:
    grid: SinogramGrid
    row_start: np.ndarray   # first stored j of every row
    offsets: np.ndarray     # row k occupies data[offsets[k]:offsets[k+1]]
    data: np.ndarray

    @property
    def alpha(self) -> np.ndarray:
        return self.grid.alpha

    def row(self, i: int):
        """``(j, values)`` of the i-th stored angle."""
        a, b = self.offsets[i], self.offsets[i + 1]
        return self.row_start[i] + np.arange(b - a), self.data[a:b]

    def value(self, i: int, j: int) -> float:
        a, b = self.offsets[i], self.offsets[i + 1]
        idx = j - self.row_start[i]
        return float(self.data[a + idx]) if 0 <= idx < b - a else 0.0

    def dense(self):
        """``(j_min, matrix)`` with rows indexed like ``grid.k`` and columns from ``j_min``."""
        lens = np.diff(self.offsets)
        if lens.sum() == 0:
            return 0, np.zeros((len(lens), 0))
        nz = lens > 0
        j0 = int(self.row_start[nz].min())
        j1 = int((self.row_start + lens)[nz].max())
        out = np.zeros((len(lens), j1 - j0))
        for i in np.nonzero(nz)[0]:
            a = self.row_start[i] - j0
            out[i, a:a + lens[i]] = self.data[self.offsets[i]:self.offsets[i + 1]]
        return j0, out

    def scaled(self, factor: float) -> "Sinogram":
        return Sinogram(self.grid, self.row_start, self.offsets, self.data * factor)

    def __add__(self, other: "Sinogram") -> "Sinogram":
        if self.grid != other.grid:
            raise ValueError("sinograms live on different grids")
        lens_a, lens_b = np.diff(self.offsets), np.diff(other.offsets)
        start = np.minimum(np.where(lens_a > 0, self.row_start, np.iinfo(np.int64).max),
                           np.where(lens_b > 0, other.row_start, np.iinfo(np.int64).max))
        stop = np.maximum(np.where(lens_a > 0, self.row_start + lens_a, np.iinfo(np.int64).min),
                          np.where(lens_b > 0, other.row_start + lens_b, np.iinfo(np.int64).min))
        empty = stop < start
        start = np.where(empty, 0, start)
        lens = np.where(empty, 0, stop - start)
        offsets = np.concatenate([[0], np.cumsum(lens)])
        data = np.zeros(offsets[-1])
        for src in (self, other):
            sl = np.diff(src.offsets)
            for i in np.nonzero(sl)[0]:
                a = offsets[i] + src.row_start[i] - start[i]
                data[a:a + sl[i]] += src.data[src.offsets[i]:src.offsets[i + 1]]
        return Sinogram(self.grid, start.astype(np.int64), offsets.astype(np.int64), data)

    # -- files
    def save(self, path) -> None:
        j0, mat = self.dense()
        header = dict(self.grid.to_dict(), k0=int(self.grid.k[0]) if len(self.grid.k) else 0,
                      rows=int(mat.shape[0]), cols=int(mat.shape[1]), j0=int(j0))
        hb = json.dumps(header).encode()
        with open(path, "wb") as fh:
            fh.write(b"RGEDGSN\x00")
            fh.write(len(hb).to_bytes(4, "little"))
            fh.write(hb)
            fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())

    @staticmethod
    def load(path) -> "Sinogram":
        with open(path, "rb") as fh:
            if fh.read(8) != b"RGEDGSN\x00":
                raise ValueError("not a sinogram file")
            n = int.from_bytes(fh.read(4), "little")
            header = json.loads(fh.read(n))
            mat = np.frombuffer(fh.read(), dtype="<f8").reshape(header["rows"], header["cols"])
        grid = SinogramGrid(header["eps"], header["kappa"], header["pbar"], header["abar"])
        return from_dense(grid, header["j0"], mat)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("k,alpha,j,p,value\n")
            for i, (k, a) in enumerate(zip(self.grid.k, self.grid.alpha)):
                js, vals = self.row(i)
                for j, v in zip(js, vals):
                    if v != 0.0:
                        fh.write(f"{k},{a:.17g},{j},{self.grid.p(j):.17g},{v:.17g}\n")


def from_dense(grid: SinogramGrid, j0: int, mat: np.ndarray) -> Sinogram:
    """Ragged sinogram from a dense block, trimming exact zeros at the row ends."""
    starts, lens, chunks = [], [], []
    for row in mat:
        nz = np.nonzero(row)[0]
        if nz.size == 0:
            starts.append(0)
            lens.append(0)
            continue
        starts.append(j0 + nz[0])
        lens.append(nz[-1] - nz[0] + 1)
        chunks.append(row[nz[0]:nz[-1] + 1])
    offsets = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
    data = np.concatenate(chunks) if chunks else np.zeros(0)
    return Sinogram(grid, np.asarray(starts, np.int64), offsets, np.asarray(data, float))


def zero_sinogram(grid: SinogramGrid) -> Sinogram:
    n = len(grid.k)
    return Sinogram(grid, np.zeros(n, np.int64), np.zeros(n + 1, np.int64), np.zeros(0))


# ---------------------------------------------------------------- layer projection

@njit(cache=True)
def _row_extent(cak, sak, y1, y2, cth, sth, H, pbar, eps, rw):
    lo = np.inf
    hi = -np.inf
    for i in range(y1.size):
        P = cak * y1[i] + sak * y2[i]
        Q = P + H[i] * (cak * cth[i] + sak * sth[i])
        lo = min(lo, P, Q)
        hi = max(hi, P, Q)
    if lo > hi:
        return 0, -1
    return int(math.ceil((lo - rw * eps - pbar) / eps)), int(math.floor((hi + rw * eps - pbar) / eps))


@njit(parallel=True, cache=True)
def _layer_extents(ca, sa, y1, y2, cth, sth, H, pbar, eps, rw):
    nk = ca.size
    j0 = np.zeros(nk, np.int64)
    j1 = np.zeros(nk, np.int64)
    for k in prange(nk):
        j0[k], j1[k] = _row_extent(ca[k], sa[k], y1, y2, cth, sth, H, pbar, eps, rw)
    return j0, j1


@njit(cache=True)
def _project_row(cak, sak, y1, y2, cth, sth, R, H, wt, pbar, eps, wcoef, j0, row):
    """Accumulate one sinogram row; per-entry compensated sums, nodes in fixed order."""
    rw = 0.5 * wcoef.shape[0]
    width = row.size
    comp = np.zeros(width)
    for i in range(y1.size):
        P = cak * y1[i] + sak * y2[i]
        c = cak * cth[i] + sak * sth[i]
        Q = P + H[i] * c
        lo = min(P, Q) - rw * eps
        hi = max(P, Q) + rw * eps
        ja = max(int(math.ceil((lo - pbar) / eps)), j0)
        jb = min(int(math.floor((hi - pbar) / eps)), j0 + width - 1)
        for j in range(ja, jb + 1):
            a = (pbar + j * eps - P) / eps
            val = _jit.layer_aperture_integral(wcoef, a, c / eps, H[i], R[i]) * wt[i] / eps
            idx = j - j0
            row[idx], comp[idx] = _jit.two_sum(row[idx], comp[idx], val)
    for idx in range(width):
        row[idx] += comp[idx]


@njit(parallel=True, cache=True)
def _project_layer(ca, sa, y1, y2, cth, sth, R, H, wt, pbar, eps, wcoef, j0, offsets, out):
    for k in prange(ca.size):
        if offsets[k + 1] > offsets[k]:
            _project_row(ca[k], sa[k], y1, y2, cth, sth, R, H, wt, pbar, eps, wcoef, j0[k],
                         out[offsets[k]:offsets[k + 1]])


def project_layer(nodes: LayerNodes, grid: SinogramGrid, aperture: ApertureFunction | None = None) -> Sinogram:
    aperture = aperture or ApertureFunction()
    alpha = grid.alpha
    ca, sa = np.cos(alpha), np.sin(alpha)
    if len(nodes) == 0:
        return zero_sinogram(grid)
    y1 = np.ascontiguousarray(nodes.point[:, 0])
    y2 = np.ascontiguousarray(nodes.point[:, 1])
    cth, sth = np.cos(nodes.theta), np.sin(nodes.theta)
    j0, j1 = _layer_extents(ca, sa, y1, y2, cth, sth, nodes.height, grid.pbar, grid.eps, aperture.support_radius)
    lens = np.maximum(j1 - j0 + 1, 0)
    offsets = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
    out = np.zeros(offsets[-1])
    _project_layer(ca, sa, y1, y2, cth, sth, nodes.radius, nodes.height, nodes.weight,
                   grid.pbar, grid.eps, aperture.coef, j0, offsets, out)
    if not np.all(np.isfinite(out)):
        raise ArithmeticError("non-finite sinogram values")
    return Sinogram(grid, j0.astype(np.int64), offsets, out)


def sample_perturbation(field: JumpField, profile: PerturbationProfile, grid: SinogramGrid,
                        aperture: ApertureFunction | None = None, order: int = 4, panel=None) -> Sinogram:
    """Data of the thin field f_eps; the t-integral is exact, theta uses Gauss panels."""
    nodes = layer_nodes(field, profile, grid.eps, order=order, panel=panel)
    return project_layer(nodes, grid, aperture)


# ---------------------------------------------------------------- smooth phantoms

@dataclass(frozen=True)
class Ellipse:
    center: tuple = (0.0, 0.0)
    axes: tuple = (1.0, 1.0)
    angle: float = 0.0
    value: float = 1.0

    def support_width(self, alpha):
        """Half-width ``rho(alpha)`` of the shadow of the ellipse on direction alpha."""
        A, B = self.axes
        d = np.asarray(alpha) - self.angle
        return np.sqrt((A * np.cos(d)) ** 2 + (B * np.sin(d)) ** 2)

    def radon(self, alpha, s):
        """Line integral along ``{y : alpha . y = s}``."""
        A, B = self.axes
        rho = self.support_width(alpha)
        u = np.asarray(s) - (np.cos(alpha) * self.center[0] + np.sin(alpha) * self.center[1])
        return np.where(np.abs(u) < rho, 2 * self.value * A * B * np.sqrt(np.maximum(rho**2 - u**2, 0)) / rho**2, 0.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float) - np.asarray(self.center)
        c, s = math.cos(self.angle), math.sin(self.angle)
        u = c * x[..., 0] + s * x[..., 1]
        v = -s * x[..., 0] + c * x[..., 1]
        return np.where((u / self.axes[0]) ** 2 + (v / self.axes[1]) ** 2 < 1, self.value, 0.0)

    def area_integral(self) -> float:
        return math.pi * self.axes[0] * self.axes[1] * self.value


def Disk(center=(0.0, 0.0), radius=1.0, value=1.0) -> Ellipse:
    return Ellipse(tuple(center), (radius, radius), 0.0, value)


_GL16 = leggauss(16)


@njit(cache=True)
def _ellipse_entry(wcoef, shift, rho, amp, eps, gx, gw):
    """``int w(u) amp sqrt(rho^2 - (shift - eps u)^2)_+ du``.

    The radicand is ``eps^2 (u - k1)(k2 - u)``.  Each B-spline piece is split at the midpoint of
    the chord and mapped by ``u = k1 + v^2`` (resp. ``k2 - v^2``), so the branch points become
    smooth factors even when they sit just outside a piece.
    """
    rw = 0.5 * wcoef.shape[0]
    k1 = (shift - rho) / eps
    k2 = (shift + rho) / eps
    mid = 0.5 * (k1 + k2)
    total = 0.0
    for i in range(wcoef.shape[0]):
        a = max(i - rw, k1)
        b = min(i + 1 - rw, k2)
        if b <= a:
            continue
        for side in range(2):
            if side == 0:
                lo, hi = a, min(b, mid)
            else:
                lo, hi = max(a, mid), b
            if hi <= lo:
                continue
            if side == 0:
                v0, v1 = math.sqrt(lo - k1), math.sqrt(hi - k1)
            else:
                v0, v1 = math.sqrt(k2 - hi), math.sqrt(k2 - lo)
            acc = 0.0
            for g in range(gx.size):
                v = v0 + (v1 - v0) * 0.5 * (gx[g] + 1.0)
                if side == 0:
                    u = k1 + v * v
                    other = k2 - u
                else:
                    u = k2 - v * v
                    other = u - k1
                acc += gw[g] * 2.0 * v * v * math.sqrt(max(other, 0.0)) * _jit.bspline(wcoef, u)
            total += 0.5 * (v1 - v0) * acc
    return amp * eps * total


@njit(cache=True)
def _ellipse_row(centre_p, rho, amp, pbar, eps, wcoef, j0, row, gx, gw):
    for idx in range(row.size):
        row[idx] = _ellipse_entry(wcoef, pbar + (j0 + idx) * eps - centre_p, rho, amp, eps, gx, gw)


@njit(parallel=True, cache=True)
def _project_ellipse(ca, sa, centre_p, rho, amp, pbar, eps, wcoef, j0, offsets, out, gx, gw):
    for k in prange(ca.size):
        _ellipse_row(centre_p[k], rho[k], amp[k], pbar, eps, wcoef, j0[k], out[offsets[k]:offsets[k + 1]], gx, gw)


def sample_smooth_phantom(phantom: Ellipse, grid: SinogramGrid, aperture: ApertureFunction | None = None) -> Sinogram:
    """Data of a homogeneous ellipse: the aperture convolved with the closed-form line integrals."""
    aperture = aperture or ApertureFunction()
    alpha = grid.alpha
    ca, sa = np.cos(alpha), np.sin(alpha)
    centre_p = ca * phantom.center[0] + sa * phantom.center[1]
    rho = phantom.support_width(alpha)
    A, B = phantom.axes
    amp = 2 * phantom.value * A * B / rho**2
    rw = aperture.support_radius
    j0 = np.ceil((centre_p - rho - rw * grid.eps - grid.pbar) / grid.eps).astype(np.int64)
    j1 = np.floor((centre_p + rho + rw * grid.eps - grid.pbar) / grid.eps).astype(np.int64)
    lens = np.maximum(j1 - j0 + 1, 0)
    offsets = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
    out = np.zeros(offsets[-1])
    _project_ellipse(ca, sa, centre_p, rho, amp, grid.pbar, grid.eps, aperture.coef, j0, offsets, out,
                     _GL16[0], _GL16[1])
    return Sinogram(grid, j0, offsets, out)


# ---------------------------------------------------------------- independent oracles

def monte_carlo_entry(field: JumpField, profile: PerturbationProfile, grid: SinogramGrid, i: int, j: int,
                      samples: int = 10**7, rng=None, chunk: int = 10**6, aperture=None):
    """Monte-Carlo estimate ``(mean, standard error)`` of one sinogram entry.

    With ``y = (p_j - eps u) alpha + v alpha^perp`` the entry is ``int w(u) f_eps(y) du dv``;
    (u, v) is sampled uniformly on ``[-r_w, r_w] x [v_lo, v_hi]`` where the v-range covers
    every layer point inside the strip.
    """
    aperture = aperture or ApertureFunction()
    rng = np.random.default_rng(rng)
    eps = grid.eps
    a = grid.alpha[i]
    dirn = np.array([math.cos(a), math.sin(a)])
    perp = np.array([-math.sin(a), math.cos(a)])
    p = grid.p(j)
    rw = aperture.support_radius
    nodes = layer_nodes(field, profile, eps, order=2)
    pts = np.concatenate([nodes.point, nodes.point + nodes.height[:, None] * nodes.direction])
    proj = pts @ dirn
    near = np.abs(proj - p) <= (rw + 1) * eps + np.abs(np.concatenate([nodes.height, nodes.height]))
    if not np.any(near):
        return 0.0, 0.0
    v = pts[near] @ perp
    pad = 2 * eps * (1 + profile.bound)
    vlo, vhi = v.min() - pad, v.max() + pad
    area = 2 * rw * (vhi - vlo)
    total, total2, n = 0.0, 0.0, 0
    while n < samples:
        m = min(chunk, samples - n)
        u = rng.uniform(-rw, rw, m)
        vv = rng.uniform(vlo, vhi, m)
        y = (p - eps * u)[:, None] * dirn + vv[:, None] * perp
        val = aperture(u) * f_eps_eval(field, profile, y, eps) * area
        total += val.sum()
        total2 += (val * val).sum()
        n += m
    mean = total / n
    var = max(total2 / n - mean * mean, 0.0)
    return mean, math.sqrt(var / n)


def adaptive_entry(field: JumpField, profile: PerturbationProfile, grid: SinogramGrid, i: int, j: int,
                   aperture=None, tol: float = 1e-11) -> float:
    """One sinogram entry by nested adaptive quadrature (independent of the panel rule)."""
    from scipy.integrate import quad

    from .perturbation import h_eps
    aperture = aperture or ApertureFunction()
    eps = grid.eps
    a = grid.alpha[i]
    p = grid.p(j)
    curve = field.curve
    rw = aperture.support_radius

    def inner(th):
        y = curve.point(th, check=False)
        H = float(h_eps(profile, th - curve.theta_mid, eps))
        if H == 0.0:
            return 0.0
        P = math.cos(a) * y[0] + math.sin(a) * y[1]
        c = math.cos(th - a)
        R = float(curve.curvature_radius(th, check=False))
        lo, hi = (0.0, H) if H > 0 else (H, 0.0)
        # knots of w(a - b t) inside the t-range
        pts = [t for t in ((p - P - (kk - rw) * eps) / c for kk in range(int(2 * rw) + 1)) if lo < t < hi] if c else []
        val = quad(lambda t: float(aperture((p - P - t * c) / eps)) * (R - t), lo, hi, points=pts or None,
                   epsabs=tol * eps, epsrel=1e-12, limit=200)[0]
        return math.copysign(val, H) * float(field.delta_f(th)) / eps

    lo, hi = field.theta_support
    nodes = layer_nodes(field, profile, eps, order=1)
    P = nodes.point @ np.array([math.cos(a), math.sin(a)])
    hit = np.abs(P - p) <= (rw + 1) * eps + np.abs(nodes.height)
    if not np.any(hit):
        return 0.0
    span = nodes.panel * 2
    tlo, thi = max(lo, nodes.theta[hit].min() - span), min(hi, nodes.theta[hit].max() + span)
    se = math.sqrt(eps)
    brk = curve.theta_mid + se * profile.breakpoints((tlo - curve.theta_mid) / se, (thi - curve.theta_mid) / se)
    edges = np.unique(np.concatenate([[tlo, thi], brk, np.linspace(tlo, thi, 65)]))
    return float(sum(quad(inner, x0, x1, epsabs=tol, epsrel=1e-12, limit=400)[0]
                     for x0, x1 in zip(edges[:-1], edges[1:])))
