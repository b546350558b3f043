import warnings

import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

from roughedge import diagnostics, kernels, perturbation  # noqa: E402


@pytest.fixture(scope="session")
def tables(request):
    """Default kernel tables, cached between sessions under pytest's cache directory."""
    path = request.config.cache.mkdir("roughedge") / "tables.bin"
    return kernels.load_or_build(path)


@pytest.fixture(scope="session")
def weierstrass():
    return perturbation.make_weierstrass_profile(0.5, 1.0, 8, seed=1)


@pytest.fixture(scope="session")
def golden():
    curve, x0, exact = diagnostics.named_point("golden-on-curve")
    return curve, x0, exact, perturbation.JumpField(curve)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion; echoed in the terminal summary."""
    def report(n, title, passed, detail):
        line = f"criterion {n:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE[n] = line
        print(line)
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
