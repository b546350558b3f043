"""Convergence sweeps, rate fits and the per-subcommand drivers.

Every driver takes a validated :class:`ExperimentConfig`, writes CSV (and SVG where a
picture helps) into the output directory and returns an in-memory report.  CSV files
contain no timings or paths so that identical configurations give identical bytes.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import diagnostics, kernels
from .config import ExperimentConfig
from .geometry import classify_point, unit
from .perturbation import H3ViolationError, h_eps
from .reconstruct import compare_patch, patch_offsets
from .sinogram import SinogramGrid, sample_perturbation

log = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-13
MIN_FIT_ROWS = 4


class InsufficientDataError(ValueError):
    pass


class StageError(RuntimeError):
    """A sweep stage failed; carries the stage name and the parameters it ran with."""

    def __init__(self, stage: str, params: dict, cause: Exception):
        self.stage, self.params, self.cause = stage, params, cause
        detail = ", ".join(f"{k}={v}" for k, v in params.items())
        super().__init__(f"stage {stage!r} failed ({detail}): {type(cause).__name__}: {cause}")


# ---------------------------------------------------------------- rate fit

class RateFit(NamedTuple):
    q: float
    C: float
    residual: float


def model(eps) -> np.ndarray:
    """The theorem's error scale ``eps^(1/2) ln(1/eps)``."""
    eps = np.asarray(eps, float)
    return np.sqrt(eps) * np.log(1 / eps)


def fit_rate(rows) -> RateFit:
    """Least squares of ``log(err / ln(1/eps)) = log C + q log eps``.

    ``rows`` holds ``(eps, err)`` pairs or mappings with ``eps`` and ``err`` keys.
    Rows with nonpositive or non-finite errors, or ``eps`` outside (0, 1), are unusable.
    """
    pts = []
    for r in rows:
        e, v = (r["eps"], r["err"]) if isinstance(r, dict) else (r[0], r[1])
        e, v = float(e), float(v)
        if 0 < e < 1 and v > 0 and math.isfinite(v):
            pts.append((e, v))
    if len(pts) < MIN_FIT_ROWS:
        raise InsufficientDataError(f"need at least {MIN_FIT_ROWS} usable rows, got {len(pts)}")
    e, v = np.array(pts).T
    x = np.log(e)
    y = np.log(v / np.log(1 / e))
    A = np.stack([np.ones_like(x), x], axis=1)
    (logC, q), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ np.array([logC, q]) - y) ** 2)))
    return RateFit(float(q), float(math.exp(logC)), res)


# ---------------------------------------------------------------- convergence

@dataclass
class ConvergenceRow:
    exponent: int
    eps: float
    max_err: float
    mean_err: float
    max_abs_frec: float
    argmax: tuple
    entries: int
    target: float
    model: float

    @property
    def ratio(self) -> float:
        return self.target / self.model


@dataclass
class ConvergenceReport:
    case: str
    target: str                     # "error" (f_rec - DTB) or "frec" (|f_rec| itself)
    rows: list = field(default_factory=list)
    fit: RateFit | None = None
    degenerate: bool = False
    band: tuple = (0.4, 0.7)
    note: str = ""

    @property
    def ratio_spread(self) -> float:
        r = [row.ratio for row in self.rows if row.ratio > 0]
        return max(r) / min(r) if r else math.nan

    @property
    def in_band(self) -> bool:
        return self.fit is not None and self.band[0] <= self.fit.q <= self.band[1]

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["exponent", "eps", "max_err", "mean_err", "max_abs_frec", "argmax_x1", "argmax_x2",
                    "entries", "target", "model", "ratio"])
        for r in self.rows:
            w.writerow([r.exponent, f"{r.eps:.17g}", f"{r.max_err:.17g}", f"{r.mean_err:.17g}",
                        f"{r.max_abs_frec:.17g}", f"{r.argmax[0]:.17g}", f"{r.argmax[1]:.17g}", r.entries,
                        f"{r.target:.17g}", f"{r.model:.17g}", f"{r.ratio:.17g}"])
        return buf.getvalue()

    def summary_text(self) -> str:
        lines = [f"case: {self.case}", f"target: {self.target}", f"levels: {len(self.rows)}"]
        if self.degenerate:
            lines.append("fit: skipped (degenerate: all errors below %.0e)" % DEGENERATE_TOL)
        elif self.fit is None:
            lines.append(f"fit: unavailable ({self.note})")
        else:
            lines += [f"q: {self.fit.q:.6f}", f"C: {self.fit.C:.6e}", f"residual: {self.fit.residual:.6f}",
                      f"band: [{self.band[0]}, {self.band[1]}] -> {'inside' if self.in_band else 'outside'}",
                      f"ratio spread: {self.ratio_spread:.4f}"]
        return "\n".join(lines) + "\n"

    def write(self, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "convergence.csv").write_text(self.csv_text())
        (out / "summary.txt").write_text(self.summary_text())
        if self.rows:
            _plot_convergence(self, out / "convergence.svg")


def load_tables(cfg: ExperimentConfig, out: Path | None = None) -> kernels.KernelTables:
    cache = cfg.kernel.cache
    if cache is None:
        return kernels.build_tables(**cfg.kernel_params())
    path = Path(cache)
    if not path.is_absolute():
        path = (out or cfg.output_dir) / path
    return kernels.load_or_build(path, **cfg.kernel_params())


def run_convergence(cfg: ExperimentConfig, tables=None, out: Path | None = None) -> ConvergenceReport:
    """Sweep eps over the configured dyadic levels and fit the rate."""
    out = Path(out) if out is not None else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "resolved_config.yaml")
    tables = tables if tables is not None else _stage("kernel tables", {}, load_tables, cfg, out)
    profile = cfg.build_profile()
    curve, x0, _ = cfg.build_geometry()
    fld = cfg.build_field(curve)
    case = classify_point(curve, x0).case.value
    target = cfg.fit.target
    if target == "auto":
        target = "frec" if case == "C" else "error"
    offsets = patch_offsets(cfg.patch.extent, cfg.patch.step)
    report = ConvergenceReport(case, target, band=tuple(cfg.fit.band))
    patches = out / "patches"
    patches.mkdir(exist_ok=True)

    for n, eps in zip(cfg.sweep.exponents, cfg.eps_list):
        params = dict(eps=f"2^-{n}", kappa=cfg.grid.kappa)
        t0 = time.perf_counter()
        grid = SinogramGrid(eps, cfg.grid.kappa, cfg.grid.pbar, cfg.grid.abar)
        sino = _stage("sinogram", params, sample_perturbation, fld, profile, grid, tables.aperture)
        patch = _stage("patch comparison", params, compare_patch, sino, fld, profile, tables, x0, eps,
                       offsets, case)
        patch.to_csv(patches / f"patch_eps_2^-{n}.csv")
        tgt = patch.max_rec if target == "frec" else patch.max_err
        report.rows.append(ConvergenceRow(n, eps, patch.max_err, patch.mean_err, patch.max_rec, patch.argmax,
                                          int(sino.data.size), tgt, float(model(eps))))
        log.info("eps=2^-%d max_err=%.3e max|f_rec|=%.3e (%.1fs)", n, patch.max_err, patch.max_rec,
                 time.perf_counter() - t0)

    if all(r.target <= DEGENERATE_TOL for r in report.rows):
        report.degenerate = True
    else:
        try:
            report.fit = fit_rate([(r.eps, r.target) for r in report.rows])
        except InsufficientDataError as exc:
            report.note = str(exc)
    report.write(out)
    return report


def _stage(name, params, fn, *args):
    try:
        return fn(*args)
    except Exception as exc:  # re-raised with context for the CLI
        raise StageError(name, params, exc) from exc


def _plot_convergence(report: ConvergenceReport, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    eps = np.array([r.eps for r in report.rows])
    tgt = np.array([r.target for r in report.rows])
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(eps, np.where(tgt > 0, tgt, np.nan), "o-", label="max |f_rec|" if report.target == "frec" else "max error")
    if report.fit is not None:
        ax.loglog(eps, report.fit.C * eps ** report.fit.q * np.log(1 / eps), "--",
                  label=f"fit q = {report.fit.q:.3f}")
    ref = tgt[0] / model(eps[0]) if tgt[0] > 0 else 1.0
    ax.loglog(eps, ref * model(eps), ":", label="eps^(1/2) ln(1/eps)")
    ax.set_xlabel("eps")
    ax.set_ylabel("max over patch")
    ax.set_title(f"case {report.case}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------- profile validation

@dataclass
class ProfileValidation:
    rows: list
    sup_abs: float
    bound: float
    violation: str = ""

    @property
    def passed(self) -> bool:
        return not self.violation

    @property
    def measured_rho(self) -> float:
        return max(r["count"] / (r["hi"] - r["lo"]) for r in self.rows) if self.rows else 0.0

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "lo", "hi", "count", "bound", "status"])
        for r in self.rows:
            w.writerow([f"{r['level']:.17g}", f"{r['lo']:.17g}", f"{r['hi']:.17g}", r["count"],
                        f"{r['bound']:.17g}", r["status"]])
        return buf.getvalue()


def validate_profile(cfg: ExperimentConfig, out: Path | None = None, n_probes: int = 32) -> ProfileValidation:
    """Sup-norm check plus ``n_probes`` level-set counting probes; writes ``h3_probes.csv``."""
    out = Path(out) if out is not None else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    profile = cfg.build_profile()
    rng = np.random.default_rng(cfg.seed)
    c = profile.bound if profile.bound > 0 else 1.0
    cheb = c * np.cos(np.pi * (np.arange(2 * n_probes) + 0.5) / (2 * n_probes))
    length = profile.L0
    u = np.linspace(-4 * length, 5 * length, 200001)
    sup = float(np.abs(profile(u)).max())
    res = getattr(profile, "probe_resolution", None)
    if profile.kind == "truncated-weierstrass":
        res = max(profile.scale / 32, profile.L0 / 2**22)
    report = ProfileValidation([], sup, profile.bound)
    if sup > profile.bound * (1 + 1e-12):
        report.violation = f"sup |H0| = {sup:.6g} exceeds declared bound {profile.bound:.6g}"
    for _ in range(n_probes):
        t = float(cheb[rng.integers(cheb.size)])
        lo = float(rng.uniform(-4 * length, 4 * length))
        window = (lo, lo + length)
        status = "ok"
        try:
            lv = profile.level_set_intervals(window, t, resolution=res)
            count = lv.count
        except H3ViolationError as exc:
            count, status = exc.count, "violation"
            if not report.violation:
                report.violation = str(exc)
        report.rows.append(dict(level=t, lo=window[0], hi=window[1], count=int(count),
                                bound=profile.rho * length, status=status))
    (out / "h3_probes.csv").write_text(report.csv_text())
    return report


# ---------------------------------------------------------------- previews and probes

def preview_boundary(cfg: ExperimentConfig, exponent: int, out: Path | None = None, samples: int = 2001) -> Path:
    """Polylines of S and S_eps over the jump support; writes CSV and SVG."""
    out = Path(out) if out is not None else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    eps = 2.0 ** -exponent
    profile = cfg.build_profile()
    curve, x0, _ = cfg.build_geometry()
    lo, hi = cfg.build_field(curve).theta_support
    th = np.linspace(lo, hi, samples)
    y = curve.point(th)
    ye = y + h_eps(profile, th - curve.theta_mid, eps)[:, None] * unit(th)
    path = out / f"boundary_eps_2^-{exponent}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "x1", "x2", "x1_eps", "x2_eps"])
        for t, a, b in zip(th, y, ye):
            w.writerow([f"{t:.17g}", f"{a[0]:.17g}", f"{a[1]:.17g}", f"{b[0]:.17g}", f"{b[1]:.17g}"])

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(y[:, 0], y[:, 1], lw=0.8, label="S")
    ax.plot(ye[:, 0], ye[:, 1], lw=0.6, label="S_eps")
    ax.plot([x0[0]], [x0[1]], "k+", label="x0")
    ax.set_aspect("equal")
    ax.legend()
    fig.savefig(path.with_suffix(".svg"), format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def probe_expsum(cfg: ExperimentConfig, tables=None, out: Path | None = None) -> list:
    """``|W_m|`` with its Kusmin-Landau envelope for each configured mode and level."""
    out = Path(out) if out is not None else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    tables = tables if tables is not None else load_tables(cfg, out)
    profile = cfg.build_profile()
    curve, x0, _ = cfg.build_geometry()
    fld = cfg.build_field(curve)
    rows = []
    for n in cfg.probe.exponents:
        eps = 2.0 ** -n
        probes = diagnostics.exp_sum_probes(tables, fld, profile, cfg.probe.modes, eps, x0,
                                            interval=cfg.probe.interval, kappa=cfg.grid.kappa,
                                            pbar=cfg.grid.pbar, abar=cfg.grid.abar)
        rows += probes
    with open(out / "expsum.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "eps", "W", "envelope", "lambda", "terms"])
        for p in rows:
            w.writerow([p.m, f"{p.eps:.17g}", f"{p.W:.17g}", f"{p.envelope:.17g}", f"{p.lam:.17g}", p.terms])
    return rows


def genericity_report(cfg: ExperimentConfig, out: Path | None = None) -> diagnostics.GenericityReport:
    out = Path(out) if out is not None else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    curve, x0, exact = cfg.build_geometry()
    rep = diagnostics.check_point_conditions(curve, x0, cfg.grid.kappa, exact or None, M=cfg.probe.probe_bound)
    (out / "genericity.txt").write_text(rep.to_text())
    return rep
