import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from roughedge import kernels
from roughedge.kernels import ApertureFunction, InterpKernel, TableBuildError, TableRangeError


@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_interp_kernel_reproduces_constants_and_lines(u):
    e0, e1 = InterpKernel(4).exactness_errors(np.array([u]))
    assert e0 < 1e-12 and e1 < 1e-10 * max(1.0, abs(u))


@pytest.mark.parametrize("deg", [3, 4, 5, 6])
def test_bspline_mass_symmetry_and_support(deg):
    w = ApertureFunction(deg)
    assert abs(w.integral() - 1) < 1e-14
    u = np.linspace(-5, 5, 1001)
    assert np.allclose(w(u), w(-u), atol=1e-15)
    assert np.all(w(np.array([w.support_radius, w.support_radius + 0.5, -w.support_radius - 1])) == 0)
    assert np.all(w(u) >= -1e-15)


def _hilbert_pv(kernel, s):
    """(1/pi) p.v. int phi'(u) / (u - s) du through QUADPACK's Cauchy weight."""
    r = kernel.support_radius
    f = lambda u: float(kernel.derivative(np.array([u]))[0])
    if abs(s) < r:
        val, _ = quad(f, -r, r, weight="cauchy", wvar=s, limit=200, epsabs=1e-13)
    else:
        val, _ = quad(lambda u: f(u) / (u - s), -r, r, points=list(np.arange(-r, r + 1)), limit=200, epsabs=1e-14)
    return val / math.pi


@pytest.mark.parametrize("s", [0.0, 0.3, -0.77, 1.25, 2.5, -3.1, 6.0, 15.0])
def test_hilbert_closed_form_matches_principal_value(s):
    ker = InterpKernel(4)
    got = float(kernels.hilbert_deriv(ker, np.array([s]))[0])
    assert got == pytest.approx(_hilbert_pv(ker, s), abs=1e-9)


def test_hilbert_far_field_and_parity():
    ker = InterpKernel(4)
    s = np.array([40.0, 100.0, 400.0])
    h = kernels.hilbert_deriv(ker, s)
    # far field is +1/(pi s^2) in the (1/pi) p.v. int h(u)/(u - s) convention
    assert np.allclose(h * math.pi * s**2, 1.0, rtol=5e-3)
    x = np.linspace(0, 10, 77)
    assert np.allclose(kernels.hilbert_deriv(ker, x), kernels.hilbert_deriv(ker, -x), atol=1e-14)
    # the transform does not vanish at the origin
    assert abs(kernels.hilbert_deriv(ker, np.array([0.0]))[0]) > 0.1


def test_psi_fourier_table_matches_direct_quadrature(tables):
    ap, ker = tables.aperture, tables.kernel
    for m, t in [(0, 0.4), (1, -1.3), (3, 2.2), (7, 0.05), (20, -4.0)]:
        got = complex(kernels.psi_fourier(tables, m, np.array([t]))[0])
        ref = kernels.psi_fourier_direct(ap, ker, m, t)
        assert abs(got - ref) < 1e-8


def test_psi_fourier_negative_modes_are_conjugate(tables):
    t = np.linspace(-6, 6, 25)
    for m in (1, 4, 11):
        assert np.allclose(kernels.psi_fourier(tables, -m, t), np.conj(kernels.psi_fourier(tables, m, t)))


def test_psi_fourier_beyond_table_raises(tables):
    with pytest.raises(TableRangeError):
        kernels.psi_fourier(tables, tables.m_max + 1, np.array([0.0]))


def test_dtb_kernel_table_matches_direct(tables):
    r = np.linspace(0, tables.r_b + 1, 57)
    direct = kernels.dtb_kernel_direct(tables.aperture, tables.kernel, r)
    assert np.allclose(kernels.dtb_kernel(tables, r), np.where(r > tables.r_b, 0.0, direct), atol=1e-9)


def test_dtb_kernel_mass_by_two_routes(tables):
    assert kernels.kernel_mass(tables.aperture, tables.kernel) == pytest.approx(1.0, abs=1e-9)
    r = np.linspace(0, tables.r_b, 20001)
    trap = 2 * math.pi * np.trapezoid(kernels.dtb_kernel(tables, r) * r, r)
    assert trap == pytest.approx(1.0, abs=1e-6)


def test_tables_round_trip(tables, tmp_path):
    path = tmp_path / "t.bin"
    kernels.save_tables(tables, path)
    back = kernels.load_tables(path)
    assert back.params == tables.params
    assert np.array_equal(back.chi, tables.chi) and np.array_equal(back.k_val, tables.k_val)
    assert kernels.load_or_build(path).params == tables.params


def test_corrupt_table_file_is_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"not a table")
    with pytest.raises(ValueError):
        kernels.load_tables(path)


@pytest.mark.parametrize("params", [dict(beta=4.5, d_phi=4), dict(d_w=3), dict(dt=0.3)])
def test_inconsistent_parameters_fail_fast(params):
    with pytest.raises(TableBuildError):
        kernels.build_tables(**params)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(-30, 30))
def test_psi_is_periodic_in_q(tables, q, t):
    a = kernels.psi(tables, np.array([q]), np.array([t]))
    b = kernels.psi(tables, np.array([q + 1.0]), np.array([t]))
    assert abs(a[0] - b[0]) < 1e-13
