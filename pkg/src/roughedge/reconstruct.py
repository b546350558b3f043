"""Discrete reconstruction from a sinogram, the eps-dependent DTB convolution, and the
local comparison of the two around a point x0.

Reconstruction uses the double-sum form

    f_rec(x) = -(d_alpha / (2 pi eps)) sum_k sum_j H(phi')((alpha_k . x - p_j) / eps) f_hat(alpha_k, p_j)

over every stored ``(k, j)``; no far-field truncation is needed because each row is
finite.  The sum runs in a fixed order (k ascending, then j) with compensated
accumulation so the result does not depend on thread scheduling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from . import _jit, _bspline
from .geometry import BoundaryCurve, classify_point
from .kernels import KernelTables
from .perturbation import JumpField, LayerNodes, PerturbationProfile, layer_nodes
from .sinogram import Sinogram

# far-field switch for H(phi'); beyond it the even moment series converges like 9^-n
_TAIL_TERMS = 20


def _hphi_params(tables: KernelTables):
    n, m, binom, scale, tail, _ = tables.hphi_args()
    switch = _bspline.tail_switch(n)
    # H(phi') has only even inverse powers: sum_l a_{2l+1} s^{-(2l+2)}
    odd = np.ascontiguousarray(tail[1::2][:_TAIL_TERMS])
    return n, m, binom, scale, odd, switch


@njit(cache=True)
def _hphi(s, n, m, binom, scale, odd, switch):
    if abs(s) < switch:
        return _jit.hilbert_closed(s, n, m, binom, scale)
    inv2 = 1.0 / (s * s)
    acc = 0.0
    for l in range(odd.size - 1, -1, -1):
        acc = acc * inv2 + odd[l]
    return acc * inv2


@njit(cache=True)
def _fbp_one(x, y, ca, sa, pbar, eps, row_start, offsets, data, n, m, binom, scale, odd, switch):
    s = 0.0
    c = 0.0
    for k in range(ca.size):
        d = ca[k] * x + sa[k] * y - pbar
        base = offsets[k]
        j0 = row_start[k]
        for idx in range(offsets[k + 1] - base):
            v = data[base + idx]
            if v == 0.0:
                continue
            g = _hphi((d - (j0 + idx) * eps) / eps, n, m, binom, scale, odd, switch)
            s, c = _jit.two_sum(s, c, g * v)
    return s + c


@njit(parallel=True, cache=True)
def _fbp(px, py, ca, sa, pbar, eps, row_start, offsets, data, n, m, binom, scale, odd, switch, out):
    for ip in prange(px.size):
        out[ip] = _fbp_one(px[ip], py[ip], ca, sa, pbar, eps, row_start, offsets, data,
                           n, m, binom, scale, odd, switch)


def fbp_points(sino: Sinogram, tables: KernelTables, x) -> np.ndarray:
    """Reconstruction at an array of points (shape ``(..., 2)``)."""
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    pts = x.reshape(-1, 2)
    grid = sino.grid
    alpha = grid.alpha
    out = np.zeros(len(pts))
    if sino.data.size:
        n, m, binom, scale, odd, switch = _hphi_params(tables)
        _fbp(np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]), np.cos(alpha), np.sin(alpha),
             grid.pbar, grid.eps, sino.row_start, sino.offsets, sino.data, n, m, binom, scale, odd, switch, out)
    out *= -grid.d_alpha / (2 * math.pi * grid.eps)
    return out.reshape(shape)


def fbp_point(sino: Sinogram, tables: KernelTables, x) -> float:
    return float(fbp_points(sino, tables, np.asarray(x, float)[None, :])[0])


# ---------------------------------------------------------------- DTB

_GLT = np.polynomial.legendre.leggauss(8)
_GLT_X = 0.5 * (_GLT[0] + 1)
_GLT_W = 0.5 * _GLT[1]


@njit(cache=True)
def _dtb_one(x, y, y1, y2, cth, sth, R, H, wt, eps, kval, kder, rstep, rb, gx, gw):
    s = 0.0
    c = 0.0
    reach = eps * rb
    for i in range(y1.size):
        dx = x - y1[i]
        dy = y - y2[i]
        if math.sqrt(dx * dx + dy * dy) > reach + abs(H[i]):
            continue
        acc = 0.0
        for g in range(gx.size):
            t = H[i] * gx[g]
            ex = dx - t * cth[i]
            ey = dy - t * sth[i]
            r = math.sqrt(ex * ex + ey * ey) / eps
            if r < rb:
                acc += gw[g] * (R[i] - t) * _jit.hermite(kval, kder, 0.0, rstep, r)
        s, c = _jit.two_sum(s, c, acc * H[i] * wt[i])
    return (s + c) / (eps * eps)


@njit(parallel=True, cache=True)
def _dtb(px, py, y1, y2, cth, sth, R, H, wt, eps, kval, kder, rstep, rb, gx, gw, out):
    for ip in prange(px.size):
        out[ip] = _dtb_one(px[ip], py[ip], y1, y2, cth, sth, R, H, wt, eps, kval, kder, rstep, rb, gx, gw)


def dtb_from_nodes(nodes: LayerNodes, tables: KernelTables, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    pts = x.reshape(-1, 2)
    out = np.zeros(len(pts))
    if len(nodes):
        _dtb(np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]),
             np.ascontiguousarray(nodes.point[:, 0]), np.ascontiguousarray(nodes.point[:, 1]),
             np.cos(nodes.theta), np.sin(nodes.theta), nodes.radius, nodes.height, nodes.weight,
             nodes.eps, tables.k_val, tables.k_der, tables.r_step, tables.r_b, _GLT_X, _GLT_W, out)
    return out.reshape(shape)


def local_nodes(field: JumpField, profile: PerturbationProfile, tables: KernelTables, eps: float, x,
                order: int = 6) -> LayerNodes:
    """Fine layer nodes restricted to the theta-range that can reach the points ``x``."""
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    curve = field.curve
    lo, hi = field.theta_support
    th = np.linspace(lo, hi, 4097)
    y = curve.point(th)
    reach = eps * (tables.r_b + profile.bound) + 2 * (hi - lo) / 4096 * float(curve.curvature_radius(th).max())
    near = np.zeros(th.size, bool)
    for chunk in np.array_split(x, max(1, len(x) // 256)):
        d = np.hypot(y[:, None, 0] - chunk[None, :, 0], y[:, None, 1] - chunk[None, :, 1])
        near |= (d <= reach).any(axis=1)
    if not np.any(near):
        return layer_nodes(field, profile, eps, window=(hi, hi))
    idx = np.nonzero(near)[0]
    step = (hi - lo) / 4096
    window = (th[idx[0]] - step, th[idx[-1]] + step)
    panel = min(eps / 8, math.sqrt(eps) * profile.scale / 16)
    return layer_nodes(field, profile, eps, order=order, panel=panel, window=window)


def dtb_points(field: JumpField, profile: PerturbationProfile, tables: KernelTables, x, eps: float) -> np.ndarray:
    """``(1/eps^2) int K((x - y)/eps) f_eps(y) dy`` in layer coordinates."""
    nodes = local_nodes(field, profile, tables, eps, x)
    return dtb_from_nodes(nodes, tables, x)


def dtb_point(field, profile, tables, x0, offset, eps) -> float:
    x = np.asarray(x0, float) + eps * np.asarray(offset, float)
    return float(dtb_points(field, profile, tables, x[None, :], eps)[0])


# ---------------------------------------------------------------- patches

def patch_offsets(extent: float = 4.0, step: float = 0.25) -> np.ndarray:
    n = int(round(2 * extent / step)) + 1
    g = np.linspace(-extent, extent, n)
    X1, X2 = np.meshgrid(g, g, indexing="ij")
    return np.stack([X1.ravel(), X2.ravel()], axis=1)


@dataclass(frozen=True)
class LocalPatch:
    x0: tuple
    eps: float
    offsets: np.ndarray = field(repr=False)
    f_rec: np.ndarray = field(repr=False)
    dtb: np.ndarray = field(repr=False)
    case: str = ""

    @property
    def error(self) -> np.ndarray:
        return np.abs(self.f_rec - self.dtb)

    @property
    def max_err(self) -> float:
        return float(self.error.max())

    @property
    def mean_err(self) -> float:
        return float(self.error.mean())

    @property
    def argmax(self) -> tuple:
        return tuple(float(v) for v in self.offsets[int(np.argmax(self.error))])

    @property
    def max_rec(self) -> float:
        return float(np.abs(self.f_rec).max())

    def summary(self) -> dict:
        return dict(eps=self.eps, case=self.case, max_err=self.max_err, mean_err=self.mean_err,
                    argmax=list(self.argmax), max_abs_frec=self.max_rec)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("x1,x2,f_rec,dtb,abs_err\n")
            for (a, b), f, d, e in zip(self.offsets, self.f_rec, self.dtb, self.error):
                fh.write(f"{a:.17g},{b:.17g},{f:.17g},{d:.17g},{e:.17g}\n")


def compare_patch(sino: Sinogram, field: JumpField, profile: PerturbationProfile, tables: KernelTables,
                  x0, eps: float, offsets=None, case: str | None = None) -> LocalPatch:
    if abs(sino.grid.eps - eps) > 1e-15 * eps:
        raise ValueError("sinogram eps differs from the requested eps")
    offsets = patch_offsets() if offsets is None else np.asarray(offsets, float)
    x0 = np.asarray(x0, float)
    pts = x0 + eps * offsets
    rec = fbp_points(sino, tables, pts)
    dtb = dtb_points(field, profile, tables, pts, eps)
    if not (np.all(np.isfinite(rec)) and np.all(np.isfinite(dtb))):
        raise ArithmeticError("non-finite values in patch comparison")
    if case is None:
        case = classify_point(field.curve, x0).case.value
    return LocalPatch(tuple(float(v) for v in x0), eps, offsets, rec, dtb, case)
