"""Experiment configuration: a YAML file mapped onto dataclasses.

Every block is optional; unknown keys are rejected, and ``resolved()`` returns the full
configuration with all defaults spelled out so a run can be reproduced from it.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import diagnostics
from .geometry import BoundaryCurve, CurveDomainError, NonConvexCurveError
from .perturbation import PROFILE_KINDS, JumpField, make_profile
from .sinogram import DEFAULT_ABAR, DEFAULT_PBAR


class ConfigError(ValueError):
    pass


@dataclass
class CurveConfig:
    kind: str = "circle"              # circle | support
    radius: float = 1.0
    center: list | None = None        # filled from the named point when omitted
    a: float = 0.125
    theta_mid: float = 0.0
    cos: list | None = None           # support-function coefficients for kind=support
    sin: list | None = None


@dataclass
class ProfileConfig:
    kind: str = "truncated-weierstrass"
    params: dict | None = None          # kind-specific; the Weierstrass defaults apply when omitted

    def __post_init__(self):
        if self.params is None:
            self.params = dict(gamma=0.5, c=1.0, K=8, seed=1) if self.kind == "truncated-weierstrass" else {}


@dataclass
class JumpConfig:
    amplitude: float = 1.0
    inner: float = 0.6
    outer: float = 0.9


@dataclass
class KernelConfig:
    d_w: int = 5
    d_phi: int = 4
    beta: float = 3.5
    m_max: int = 64
    cache: str | None = "kernel_tables.bin"   # relative paths live in the output directory


@dataclass
class GridConfig:
    kappa: float = 1.0
    pbar: float = DEFAULT_PBAR
    abar: float = DEFAULT_ABAR


@dataclass
class PointConfig:
    named: str | None = "golden-on-curve"
    x0: list | None = None


@dataclass
class SweepConfig:
    exponents: list = field(default_factory=lambda: [5, 6, 7, 8, 9, 10, 11])   # eps = 2^-n


@dataclass
class PatchConfig:
    extent: float = 4.0
    step: float = 0.25


@dataclass
class FitConfig:
    band: list = field(default_factory=lambda: [0.4, 0.7])
    strict: bool = False
    target: str = "auto"              # auto | error | frec


@dataclass
class ProbeConfig:
    modes: list = field(default_factory=lambda: [1, 2, 3, 4])
    exponents: list = field(default_factory=lambda: [6, 8, 10])
    interval: list | None = None
    probe_bound: int = 100000


@dataclass
class ExperimentConfig:
    curve: CurveConfig = field(default_factory=CurveConfig)
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    jump: JumpConfig = field(default_factory=JumpConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    point: PointConfig = field(default_factory=PointConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    patch: PatchConfig = field(default_factory=PatchConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    output: str = "run"
    seed: int = 0

    # ------------------------------------------------------------ io

    @classmethod
    def from_dict(cls, data: dict | None) -> "ExperimentConfig":
        cfg = _build(cls, data or {}, "config")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data)

    def resolved(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.resolved(), fh, sort_keys=False)

    # ------------------------------------------------------------ checks

    def validate(self) -> None:
        if self.curve.kind not in ("circle", "support"):
            raise ConfigError("curve.kind must be 'circle' or 'support'")
        if not self.curve.radius > 0 or not 0 < self.curve.a < math.pi / 2:
            raise ConfigError("curve.radius must be positive and 0 < curve.a < pi/2")
        if self.profile.kind not in PROFILE_KINDS:
            raise ConfigError(f"profile.kind must be one of {sorted(PROFILE_KINDS)}")
        if not 0 < self.jump.inner < self.jump.outer < 1:
            raise ConfigError("jump needs 0 < inner < outer < 1")
        if self.grid.kappa <= 0:
            raise ConfigError("grid.kappa must be positive")
        if (self.point.named is None) == (self.point.x0 is None):
            raise ConfigError("give exactly one of point.named and point.x0")
        if self.point.named is not None and self.point.named not in ("golden-on-curve", "resonant-on-curve", "case-c"):
            raise ConfigError(f"unknown named point {self.point.named!r}")
        if self.point.x0 is not None and len(self.point.x0) != 2:
            raise ConfigError("point.x0 must have two coordinates")
        ex = list(self.sweep.exponents)
        if not ex or any(not isinstance(n, int) for n in ex) or any(b <= a for a, b in zip(ex, ex[1:])):
            raise ConfigError("sweep.exponents must be strictly increasing integers (eps = 2^-n)")
        if self.patch.step <= 0 or self.patch.extent < 0:
            raise ConfigError("patch.step must be positive and patch.extent nonnegative")
        if len(self.fit.band) != 2 or self.fit.band[0] >= self.fit.band[1]:
            raise ConfigError("fit.band must be [low, high]")
        if self.fit.target not in ("auto", "error", "frec"):
            raise ConfigError("fit.target must be auto, error or frec")
        if any(int(m) < 0 or int(m) > self.kernel.m_max for m in self.probe.modes):
            raise ConfigError("probe.modes must lie in 0..kernel.m_max")
        try:
            self.build_profile()
            self.build_geometry()
        except (TypeError, ValueError, CurveDomainError, NonConvexCurveError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    # ------------------------------------------------------------ builders

    @property
    def eps_list(self) -> list[float]:
        return [2.0 ** -n for n in self.sweep.exponents]

    @property
    def output_dir(self) -> Path:
        return Path(self.output)

    def kernel_params(self) -> dict:
        return dict(d_w=self.kernel.d_w, d_phi=self.kernel.d_phi, beta=self.kernel.beta, m_max=self.kernel.m_max)

    def build_profile(self):
        return make_profile(self.profile.kind, **(self.profile.params or {}))

    def build_geometry(self):
        """``(curve, x0, exact)`` with ``exact`` the 60-digit values for named points."""
        c = self.curve
        if self.point.named is not None:
            if c.kind != "circle":
                raise ConfigError("named points are built on a circle")
            curve, x0, exact = diagnostics.named_point(self.point.named, radius=c.radius, a=c.a)
            if c.center is not None and not np.allclose(c.center, curve.center):
                raise ConfigError("curve.center conflicts with the named point construction")
            return curve, x0, exact
        x0 = np.asarray(self.point.x0, float)
        if c.kind == "circle":
            if c.center is None:
                raise ConfigError("curve.center is required with an explicit x0")
            curve = BoundaryCurve.circle(center=tuple(c.center), radius=c.radius, a=c.a, theta_mid=c.theta_mid)
        else:
            if c.cos is None:
                raise ConfigError("curve.cos is required for kind=support")
            curve = BoundaryCurve.from_support(c.cos, c.sin or [0.0] * len(c.cos), a=c.a, theta_mid=c.theta_mid)
        return curve, x0, {}

    def build_field(self, curve) -> JumpField:
        return JumpField(curve, self.jump.amplitude, self.jump.inner, self.jump.outer)


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    kw = {}
    for name, value in data.items():
        sub = _NESTED.get(name) if cls is ExperimentConfig else None
        kw[name] = _build(sub, value if value is not None else {}, f"{where}.{name}") if sub else value
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_NESTED = dict(curve=CurveConfig, profile=ProfileConfig, jump=JumpConfig, kernel=KernelConfig, grid=GridConfig,
               point=PointConfig, sweep=SweepConfig, patch=PatchConfig, fit=FitConfig, probe=ProbeConfig)
