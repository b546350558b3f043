import math
from decimal import Decimal
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from roughedge import diagnostics as dg


@given(st.floats(-1e6, 1e6), st.integers(-1000, 1000))
def test_frac_dist_periodic_and_symmetric(s, n):
    d = dg.frac_dist(s)
    assert 0 <= d <= 0.5
    assert dg.frac_dist(s + n) == pytest.approx(d, abs=1e-9)
    assert dg.frac_dist(-s) == pytest.approx(d, abs=1e-12)


def test_continued_fractions_of_quadratic_irrationals():
    assert dg.continued_fraction(dg.exact_constant("golden"), 30) == [1] * 30
    assert dg.continued_fraction(dg.exact_constant("sqrt:2"), 30) == [1] + [2] * 29
    # the float is expanded only while it still describes the number
    cf = dg.continued_fraction(math.sqrt(2))
    assert cf[:10] == [1] + [2] * 9 and len(cf) < 30


def test_continued_fraction_of_rational_terminates():
    assert dg.continued_fraction(Fraction(415, 93)) == [4, 2, 6, 7]
    p, q = dg.convergents([4, 2, 6, 7])[-1]
    assert Fraction(p, q) == Fraction(415, 93)


def test_type_of_golden_ratio_is_one():
    assert dg.estimate_type(dg.exact_constant("golden")) == pytest.approx(1.0, abs=0.05)
    assert dg.estimate_type((1 + math.sqrt(5)) / 2) == pytest.approx(1.0, abs=0.05)


def test_type_estimate_grows_with_probe_bound():
    s = 0.123456789101112
    values = [dg.estimate_type(s, M) for M in (10**2, 10**3, 10**4, 10**5)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_type_detects_a_liouville_like_number():
    # partial quotients that grow like q^2 give type about 3
    s = Fraction(0)
    quotients = [0, 10, 1000, 10**6]
    for a in reversed(quotients[1:]):
        s = 1 / (a + s)
    assert dg.estimate_type(s + Fraction(1, 10**40), M=10**6) > 1.8


def test_type_rejects_huge_bounds_and_rationals():
    with pytest.raises(ValueError):
        dg.estimate_type(math.pi, M=10**7)
    with pytest.raises(dg.RationalInputError) as info:
        dg.estimate_type(0.375)
    assert info.value.m == 8
    with pytest.raises(dg.RationalInputError):
        dg.estimate_type(Decimal("1.25"))


def test_geometric_sum_against_closed_form():
    lam = 0.1234
    n = np.arange(200)
    got = dg.weighted_exp_sum(lam * n)
    ref = (1 - np.exp(2j * np.pi * lam * 200)) / (1 - np.exp(2j * np.pi * lam))
    assert abs(got - ref) < 1e-11
    w = np.linspace(1, 2, 200)
    assert dg.weighted_exp_sum(lam * n, w) == pytest.approx(np.sum(w * np.exp(2j * np.pi * lam * n)), abs=1e-11)


@given(st.floats(0.01, 0.49), st.integers(2, 400))
def test_kusmin_landau_on_linear_phases(lam, N):
    kl = dg.kusmin_landau_bound(np.full(N, lam))
    assert kl.lam == pytest.approx(lam)
    assert kl.direct == pytest.approx(abs(math.sin(math.pi * N * lam) / math.sin(math.pi * lam)), abs=1e-9)
    assert kl.direct <= 1 / math.sin(math.pi * lam) + 1e-9
    assert kl.holds


def test_kusmin_landau_monotone_derivative():
    n = np.arange(500)
    d = 0.2 + 0.5 * n / 500
    kl = dg.kusmin_landau_bound(d)
    assert kl.holds and kl.lam == pytest.approx(0.2)


@pytest.mark.parametrize("d", [np.array([0.2, 0.5, 0.3]), np.array([0.4, 0.8, 1.2]), np.array([])])
def test_kusmin_landau_preconditions(d):
    with pytest.raises(dg.KusminLandauError):
        dg.kusmin_landau_bound(d)


def test_named_points_lie_on_their_circles():
    for name in ("golden-on-curve", "resonant-on-curve"):
        curve, x0, exact = dg.named_point(name)
        assert np.hypot(*(x0 - np.asarray(curve.center))) == pytest.approx(curve.radius, abs=1e-14)
        assert float(np.hypot(*x0)) == pytest.approx(float(exact["norm"]), abs=1e-15)
    curve, x, exact = dg.named_point("case-c")
    assert exact == {}
    with pytest.raises(ValueError):
        dg.named_point("nowhere")


def test_genericity_golden_versus_resonant():
    curve, x0, exact = dg.named_point("golden-on-curve")
    rep = dg.check_point_conditions(curve, x0, 1.0, exact)
    assert rep.case == "A" and rep.generic
    assert rep.quotients_norm[:20] == [1] * 20
    assert rep.eta_norm == pytest.approx(1.0, abs=0.05) and rep.eta_perp == pytest.approx(1.0, abs=0.05)
    assert rep.mu == pytest.approx(-(math.sqrt(2) - 1))
    assert "not proofs" in rep.to_text()

    curve, x0, exact = dg.named_point("resonant-on-curve")
    rep = dg.check_point_conditions(curve, x0, 1.0, exact)
    assert not rep.P3 and not rep.P4 and not rep.generic
    assert rep.eta_norm is None


def test_genericity_at_the_origin():
    curve, _, _ = dg.named_point("golden-on-curve")
    rep = dg.check_point_conditions(curve, (0.0, 0.0))
    assert rep.P3 is False and rep.P4 is False and rep.notes


def test_exp_sum_probe_resonance_contrast(tables, weierstrass, golden):
    """The first-mode sum is much larger at the resonant point than at the golden one."""
    eps = 2.0**-6
    curve, x0, _, fld = golden
    gold = dg.exp_sum_W(tables, fld, weierstrass, 1, eps, x0)
    rc, rx, _ = dg.named_point("resonant-on-curve")
    from roughedge.perturbation import JumpField
    res = dg.exp_sum_W(tables, JumpField(rc), weierstrass, 1, eps, rx)
    assert res.W > 5 * gold.W
    assert gold.terms > 0 and gold.m == 1 and gold.eps == eps
