import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from roughedge import perturbation as pt
from roughedge import sinogram as sg
from roughedge.kernels import ApertureFunction


@given(st.floats(2.0**-10, 0.2), st.floats(0.3, 3.0), st.floats(-0.2, 0.2))
def test_grid_angles(eps, kappa, abar):
    g = sg.SinogramGrid(eps, kappa, abar=abar)
    a = g.alpha
    assert np.all(np.abs(a) <= math.pi / 2)
    assert np.allclose(np.diff(a), kappa * eps)
    # no admissible angle is left out at either end
    assert a[0] - kappa * eps < -math.pi / 2 and a[-1] + kappa * eps > math.pi / 2


def test_ellipse_entries_match_quadrature_of_line_integrals():
    ell = sg.Ellipse((0.3, -0.2), (0.9, 0.5), 0.4, 1.7)
    grid = sg.SinogramGrid(2.0**-4, 1.3)
    sino = sg.sample_smooth_phantom(ell, grid)
    w = ApertureFunction()
    rng = np.random.default_rng(3)
    for _ in range(12):
        i = int(rng.integers(len(grid.k)))
        js, vals = sino.row(i)
        jj = int(rng.integers(js.size))
        a, p = grid.alpha[i], grid.p(js[jj])
        c = math.cos(a) * ell.center[0] + math.sin(a) * ell.center[1]
        rho = float(ell.support_width(a))
        kinks = [(p - c - rho) / grid.eps, (p - c + rho) / grid.eps]
        rw = w.support_radius
        knots = set(np.arange(-rw, rw + 0.5))
        pts = sorted(knots | {k for k in kinks if -rw < k < rw})
        f = lambda u: float(w(np.array([u]))[0] * ell.radon(a, p - grid.eps * u))
        ref = sum(quad(f, lo, hi, limit=200, epsabs=1e-14)[0] for lo, hi in zip(pts[:-1], pts[1:]))
        assert vals[jj] == pytest.approx(ref, abs=1e-10)


def test_ellipse_radon_integrates_to_area():
    ell = sg.Ellipse((0.1, 0.0), (1.2, 0.4), 0.9, 2.0)
    for a in (0.0, 0.7, -1.3):
        rho = float(ell.support_width(a))
        c = math.cos(a) * 0.1
        total = quad(lambda s: float(ell.radon(a, s)), c - rho, c + rho, epsabs=1e-12)[0]
        assert total == pytest.approx(ell.area_integral(), rel=1e-9)


def test_layer_entries_match_adaptive_quadrature(golden, weierstrass):
    curve, x0, _, fld = golden
    grid = sg.SinogramGrid(2.0**-6)
    sino = sg.sample_perturbation(fld, weierstrass, grid)
    rng = np.random.default_rng(11)
    lens = np.diff(sino.offsets)
    rows = np.nonzero(lens)[0]
    checked = 0
    for i in rng.choice(rows, 6, replace=False):
        js, vals = sino.row(int(i))
        jj = int(np.argmax(np.abs(vals)))
        ref = sg.adaptive_entry(fld, weierstrass, grid, int(i), int(js[jj]))
        assert vals[jj] == pytest.approx(ref, abs=1e-9 * max(1.0, abs(ref)))
        checked += 1
    assert checked == 6


def test_layer_entries_within_monte_carlo_error(golden, weierstrass):
    curve, x0, _, fld = golden
    grid = sg.SinogramGrid(2.0**-5)
    sino = sg.sample_perturbation(fld, weierstrass, grid)
    i = int(np.argmin(np.abs(grid.alpha)))
    js, vals = sino.row(i)
    jj = int(np.argmax(np.abs(vals)))
    mean, se = sg.monte_carlo_entry(fld, weierstrass, grid, i, int(js[jj]), samples=2 * 10**6, rng=5)
    assert abs(mean - vals[jj]) <= 3 * se


def test_zero_profile_gives_zero_sinogram(golden):
    curve, x0, _, fld = golden
    sino = sg.sample_perturbation(fld, pt.make_profile("zero"), sg.SinogramGrid(2.0**-5))
    assert sino.data.size == 0 or np.all(sino.data == 0)


def test_linearity_in_the_jump(golden, weierstrass):
    curve, x0, _, fld = golden
    grid = sg.SinogramGrid(2.0**-5)
    one = sg.sample_perturbation(fld, weierstrass, grid)
    three = sg.sample_perturbation(fld.scaled(3.0), weierstrass, grid)
    assert np.allclose(three.data, 3 * one.data, rtol=1e-14, atol=0)
    both = one + sg.sample_smooth_phantom(sg.Disk((1.0, 0.4), 0.3), grid)
    _, dense_both = both.dense()
    assert np.isclose(dense_both.sum(), one.data.sum() + sg.sample_smooth_phantom(sg.Disk((1.0, 0.4), 0.3), grid).data.sum())


def test_sinogram_file_round_trip(tmp_path, golden, weierstrass):
    curve, x0, _, fld = golden
    sino = sg.sample_perturbation(fld, weierstrass, sg.SinogramGrid(2.0**-5, 0.9, 0.01, -0.02))
    path = tmp_path / "s.bin"
    sino.save(path)
    back = sg.Sinogram.load(path)
    assert back.grid == sino.grid
    for i in range(0, len(sino.grid.k), 7):
        js, vals = sino.row(i)
        for j, v in zip(js, vals):
            assert back.value(i, int(j)) == v
    sino.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith("k,alpha,j,p,value\n")


def test_adding_sinograms_on_different_grids_fails():
    a = sg.zero_sinogram(sg.SinogramGrid(0.1))
    b = sg.zero_sinogram(sg.SinogramGrid(0.05))
    with pytest.raises(ValueError):
        a + b


def test_disk_reconstructs_its_density(tables):
    from roughedge.reconstruct import fbp_points
    grid = sg.SinogramGrid(2.0**-5, 1.0, 0.013, 0.002)
    disk = sg.Disk((0.2, -0.1), 0.8, 1.5)
    sino = sg.sample_smooth_phantom(disk, grid, tables.aperture)
    rec = fbp_points(sino, tables, np.array([[0.2, -0.1], [0.5, 0.1], [1.4, 0.6]]))
    assert rec[0] == pytest.approx(1.5, rel=0.02)
    assert rec[1] == pytest.approx(1.5, rel=0.02)
    assert abs(rec[2]) < 0.03
