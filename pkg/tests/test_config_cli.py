import math

import numpy as np
import pytest
import yaml

from roughedge import cli
from roughedge.config import ConfigError, ExperimentConfig
from roughedge.experiment import InsufficientDataError, fit_rate, run_convergence


@pytest.fixture
def table_cache(request, tables):
    # the session fixture has already written this file
    return str(request.config.cache.mkdir("roughedge") / "tables.bin")


def _quick(table_cache, tmp_path, **over):
    data = dict(kernel=dict(cache=table_cache), sweep=dict(exponents=[4, 5, 6, 7]),
                patch=dict(extent=0.5, step=0.5), output=str(tmp_path / "run"))
    data.update(over)
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


def test_defaults_round_trip(tmp_path):
    cfg = ExperimentConfig.from_dict({})
    assert cfg.profile.kind == "truncated-weierstrass" and cfg.profile.params["K"] == 8
    cfg.dump(tmp_path / "r.yaml")
    again = ExperimentConfig.load(tmp_path / "r.yaml")
    assert again.resolved() == cfg.resolved()
    assert cfg.eps_list[0] == 2.0**-5


def test_profile_params_follow_the_kind():
    cfg = ExperimentConfig.from_dict(dict(profile=dict(kind="sine")))
    assert cfg.profile.params == {}
    assert cfg.build_profile().bound == pytest.approx(1.0)


@pytest.mark.parametrize("data", [
    dict(colour="red"),
    dict(curve=dict(radius=1.0, spin=3)),
    dict(profile=dict(kind="fractal")),
    dict(jump=dict(inner=0.9, outer=0.6)),
    dict(sweep=dict(exponents=[6, 5])),
    dict(point=dict(named="golden-on-curve", x0=[1.0, 0.0])),
    dict(profile=dict(kind="truncated-weierstrass", params=dict(gamma=2.0))),
    dict(fit=dict(target="both")),
])
def test_bad_configs_are_rejected(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_bad_yaml_is_a_config_error(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("curve: [1, 2\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(p)
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(p)


def test_explicit_point_geometry():
    cfg = ExperimentConfig.from_dict(dict(curve=dict(center=[2.0, 0.0], radius=1.0, a=0.3),
                                          point=dict(named=None, x0=[1.0, 0.0])))
    curve, x0, exact = cfg.build_geometry()
    assert np.allclose(curve.point(0.0), [1.0, 0.0]) and exact == {}


@pytest.mark.parametrize("q", [0.5, 1.0, 0.25])
def test_fit_recovers_synthetic_rates(q):
    eps = 2.0 ** -np.arange(5, 11)
    rows = [(e, 3.0 * e**q * math.log(1 / e)) for e in eps]
    fit = fit_rate(rows)
    assert fit.q == pytest.approx(q, abs=1e-12)
    assert fit.C == pytest.approx(3.0, rel=1e-10)
    assert fit.residual < 1e-12


def test_fit_accepts_mappings_and_drops_unusable_rows():
    eps = 2.0 ** -np.arange(5, 11)
    rows = [dict(eps=e, err=e**0.5 * math.log(1 / e)) for e in eps]
    rows += [dict(eps=0.01, err=0.0), dict(eps=2.0, err=1.0), dict(eps=0.01, err=math.nan)]
    assert fit_rate(rows).q == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(InsufficientDataError):
        fit_rate(rows[:3] + rows[-3:])


def test_zero_profile_is_flagged_degenerate(tables, tmp_path):
    cfg = ExperimentConfig.from_dict(dict(profile=dict(kind="zero"), sweep=dict(exponents=[4, 5, 6, 7]),
                                          patch=dict(extent=0.5, step=0.5)))
    rep = run_convergence(cfg, tables, tmp_path)
    assert rep.degenerate and rep.fit is None
    assert "degenerate" in (tmp_path / "summary.txt").read_text()


def test_cli_run_is_deterministic(table_cache, tmp_path, capsys):
    cfg = _quick(table_cache, tmp_path)
    assert cli.main(["run-convergence", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run-convergence", str(cfg), "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "convergence.csv").read_text()
    assert a == (tmp_path / "b" / "convergence.csv").read_text()
    # the resolved configuration reproduces the run on its own
    resolved = tmp_path / "a" / "resolved_config.yaml"
    assert cli.main(["run-convergence", str(resolved), "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "convergence.csv").read_text() == a
    for n in (4, 5, 6, 7):
        assert (tmp_path / "a" / "patches" / f"patch_eps_2^-{n}.csv").exists()
    assert (tmp_path / "a" / "convergence.svg").exists()


def test_cli_strict_band_exit(table_cache, tmp_path):
    cfg = _quick(table_cache, tmp_path, fit=dict(band=[10.0, 11.0], strict=True))
    assert cli.main(["run-convergence", str(cfg)]) == cli.EXIT_BAND
    assert cli.main(["run-convergence", str(cfg), "--strict"]) == cli.EXIT_BAND


def test_cli_config_error_exit(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("curve:\n  wobble: 1\n")
    assert cli.main(["genericity-report", str(p), "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_cli_validation_exit_for_chirp(tmp_path, capsys):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(dict(profile=dict(kind="chirp"))))
    assert cli.main(["validate-profile", str(p), "--out", str(tmp_path)]) == cli.EXIT_VALIDATION
    assert "accumulate" in capsys.readouterr().err


def test_cli_reports(table_cache, tmp_path, capsys):
    cfg = _quick(table_cache, tmp_path, probe=dict(modes=[1], exponents=[5]))
    out = tmp_path / "r"
    assert cli.main(["validate-profile", str(cfg), "--out", str(out), "--probes", "8"]) == 0
    assert cli.main(["genericity-report", str(cfg), "--out", str(out)]) == 0
    assert cli.main(["preview-boundary", str(cfg), "--out", str(out), "--exponent", "6", "--samples", "101"]) == 0
    assert cli.main(["probe-expsum", str(cfg), "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"h3_probes.csv", "genericity.txt", "boundary_eps_2^-6.csv", "expsum.csv"} <= names
    assert "P3 True" in (out / "genericity.txt").read_text()


def test_cli_version(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["--version"])
    assert info.value.code == 0
    assert capsys.readouterr().out.strip()
