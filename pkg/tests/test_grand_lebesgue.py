import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hspw_lab.calculus import weighted_lp_norm
from hspw_lab.domain import Ball, Interval
from hspw_lab.errors import EmptyGrid, GlsDivergent, InvalidGeneratingFunction, OutOfRange
from hspw_lab.fields import bubble_field, expression_field, power_profile_field, zero_field
from hspw_lab.grand_lebesgue import (
    PGrid,
    check_gls_hardy,
    extremal,
    field_norms,
    gls_norm,
    hardy_lhs_norms,
    hardy_rhs_norms,
    log_corrected,
    make_pgrid,
    make_psi_K,
    natural,
    power,
    psi_from_spec,
    read_table,
    tabulated,
)
from hspw_lab.hspw import half_line_domain, hardy_ratio
from hspw_lab.quadrature import QuadratureConfig

I01 = Interval(0.0, 1.0)
U = expression_field("t*(1-t)", 1)
CFG = QuadratureConfig()
# norms of U on I01 at alpha = 0, shared across examples
U_NORMS = field_norms(U, I01, 0.0, CFG)


# -- exponent grids -------------------------------------------------------------

def test_pgrid_bounded_interval():
    g = make_pgrid(1.0, 10.0, 5)
    assert len(g) == 5 and not g.capped
    assert all(1.0 < p < 10.0 for p in g.points)
    assert list(g.points) == sorted(g.points)
    assert g.points[0] == pytest.approx(1.09)
    assert g.points[-1] == pytest.approx(9.91)


def test_pgrid_capped():
    g = make_pgrid(1.0, math.inf, 8)
    assert g.capped and g.points[-1] == 64.0
    g = make_pgrid(1.0, 100.0, 8, p_max_cap=20.0)
    assert g.capped and g.points[-1] == 20.0


def test_pgrid_endpoint_refinement_and_floor():
    g = make_pgrid(2.0, 10.0, 4, endpoint_refinement=3)
    assert len(g) == 7
    assert g.points[0] == pytest.approx(2.0 + 0.08 / 8)
    g = make_pgrid(0.5, 10.0, 4, endpoint_refinement=3)
    assert g.points[0] == 1.0 and len(g) == 4


def test_pgrid_empty():
    with pytest.raises(EmptyGrid):
        make_pgrid(3.0, 2.0, 5)
    with pytest.raises(EmptyGrid):
        make_pgrid(1.0, 2.0, 1)
    with pytest.raises(EmptyGrid):
        make_pgrid(70.0, math.inf, 5)


# -- generating functions ----------------------------------------------------------

def test_constructors_validate():
    with pytest.raises(InvalidGeneratingFunction):
        power(0.0, 1.0)
    with pytest.raises(InvalidGeneratingFunction):
        log_corrected(-1.0, 1.0, 1.0)
    with pytest.raises(InvalidGeneratingFunction):
        log_corrected(2.0, 1.0, 1.0, slowly_varying=lambda s: -1.0)
    with pytest.raises(OutOfRange):
        extremal(0.5, 1.0)
    with pytest.raises(OutOfRange):
        power(2.0, 1.0, 5.0)(5.0)


def test_tabulated():
    psi = tabulated([(4.0, 3.0), (2.0, 1.0)], 1.0)
    assert psi(3.0) == pytest.approx(2.0)
    with pytest.raises(OutOfRange):
        psi(5.0)
    with pytest.raises(InvalidGeneratingFunction):
        tabulated([(2.0, 1.0)], 1.0)
    with pytest.raises(InvalidGeneratingFunction):
        tabulated([(2.0, 1.0), (3.0, 0.0)], 1.0)
    with pytest.raises(InvalidGeneratingFunction):
        tabulated([(2.0, 1.0), (2.0, 2.0)], 1.0)


def test_read_table(tmp_path):
    path = tmp_path / "psi.csv"
    path.write_text("p,value\n2,1\n\n4,3\n")
    assert read_table(path) == [(2.0, 1.0), (4.0, 3.0)]
    psi = psi_from_spec(f"table:{path}", 1.0)
    assert psi(3.0) == pytest.approx(2.0)
    bad = tmp_path / "bad.csv"
    bad.write_text("2,1\nx,y\n")
    with pytest.raises(ValueError):
        read_table(bad)


def test_psi_from_spec():
    assert psi_from_spec("power:2", 1.0)(4.0) == pytest.approx(2.0)
    assert psi_from_spec("logcorr:1,1", 1.0)(math.e - 1) == pytest.approx(math.e - 1)
    assert psi_from_spec("extremal:2", 1.0)(3.0) == math.inf
    for bad in ("nope:1", "logcorr:1", "natural"):
        with pytest.raises(ValueError):
            psi_from_spec(bad, 1.0)


def test_psi_K_example():
    psi_K = make_psi_K(power(1.0, 1.0), 0.0, 1)
    assert psi_K(2.0) == pytest.approx(4.0)
    ext = make_psi_K(extremal(3.0, 1.0), 0.0, 1)
    assert ext(3.0) == pytest.approx(1.5) and ext(2.0) == math.inf
    assert ext.atoms == (3.0,)


@settings(max_examples=50)
@given(alpha=st.floats(-2.0, 0.9), n=st.integers(1, 3))
def test_psi_K_over_psi_tends_to_one(alpha, n):
    a = alpha * n
    psi = power(2.0, n - a)
    psi_K = make_psi_K(psi, a, n)
    ratios = [psi_K(p) / psi(p) for p in (1e2, 1e4, 1e6)]
    assert all(r > 1 for r in ratios)
    assert ratios == sorted(ratios, reverse=True)
    assert ratios[-1] == pytest.approx(1.0, abs=1e-5 * (1 + abs(a - n)))


# -- the norm ----------------------------------------------------------------------

def test_extremal_reduces_to_lebesgue_norm():
    grid = make_pgrid(1.0, math.inf, 6)
    res = gls_norm(U, I01, 0.0, extremal(2.0, 1.0), grid, norms=U_NORMS)
    assert res.value == weighted_lp_norm(U, I01, 0.0, 2.0).value
    assert res.argmax_p == 2.0 and not res.refined
    res = gls_norm(U, I01, 0.5, extremal(3.0, 0.5), make_pgrid(0.5, math.inf, 6))
    assert res.value == pytest.approx(weighted_lp_norm(U, I01, 0.5, 3.0).value, rel=1e-14)


def test_zero_field_has_zero_norm():
    res = gls_norm(zero_field(1), I01, 0.0, power(2.0, 1.0), make_pgrid(1.0, math.inf, 6))
    assert res.value == 0.0 and not res.at_cap


def test_natural_psi_gives_gradient_norm_one():
    rhs = hardy_rhs_norms(U, I01, 0.0, CFG)
    psi = natural(U, I01, 0.0, CFG, norms=rhs)
    res = gls_norm(None, I01, 0.0, psi, make_pgrid(1.0, math.inf, 8), norms=rhs)
    assert res.value == 1.0


def test_grid_outside_psi_interval():
    with pytest.raises(OutOfRange):
        gls_norm(U, I01, 0.0, power(2.0, 3.0), make_pgrid(1.0, 10.0, 4), norms=U_NORMS)


def test_divergent_norm_raises():
    f = expression_field("t**(-0.4)", 1)
    with pytest.raises(GlsDivergent) as exc:
        gls_norm(f, I01, 0.0, power(2.0, 1.0), make_pgrid(1.0, 10.0, 5))
    assert exc.value.p >= 2.5


def test_refinement_never_lowers_the_grid_value():
    grid = make_pgrid(1.0, math.inf, 6)
    psi = log_corrected(1.0, -1.0, 1.0)
    coarse = gls_norm(U, I01, 0.0, psi, grid, refine=False, norms=U_NORMS)
    fine = gls_norm(U, I01, 0.0, psi, grid, norms=U_NORMS)
    assert fine.value >= coarse.value
    assert any(row.get("refinement") for row in fine.table)


FIXED = sorted(make_pgrid(1.0, 30.0, 12).points)


@settings(max_examples=30, deadline=None)
@given(sub=st.sets(st.sampled_from(FIXED), min_size=2))
def test_grid_monotone(sub):
    psi = power(2.0, 1.0)
    small = PGrid(tuple(sorted(sub)), 1.0, 30.0, False)
    full = PGrid(tuple(FIXED), 1.0, 30.0, False)
    a = gls_norm(U, I01, 0.0, psi, small, refine=False, norms=U_NORMS).value
    b = gls_norm(U, I01, 0.0, psi, full, refine=False, norms=U_NORMS).value
    assert a <= b


@settings(max_examples=30, deadline=None)
@given(m1=st.floats(0.2, 5.0), m2=st.floats(0.2, 5.0))
def test_smaller_psi_gives_larger_norm(m1, m2):
    # on p > 1, p^(1/m) decreases in m
    small, large = power(max(m1, m2), 1.0), power(min(m1, m2), 1.0)
    grid = make_pgrid(1.0, 30.0, 8)
    a = gls_norm(U, I01, 0.0, small, grid, refine=False, norms=U_NORMS).value
    b = gls_norm(U, I01, 0.0, large, grid, refine=False, norms=U_NORMS).value
    assert a >= b


@pytest.mark.parametrize("c", [-4.0, 0.25, 7.0])
def test_homogeneity(c):
    grid = make_pgrid(1.0, 30.0, 8)
    psi = power(2.0, 1.0)
    base = gls_norm(U, I01, 0.0, psi, grid, refine=False, norms=U_NORMS)
    scaled = gls_norm(U.scaled(c), I01, 0.0, psi, grid, refine=False)
    err = max(r["error_estimate"] for r in base.table)
    assert scaled.value == pytest.approx(abs(c) * base.value, rel=10 * err / base.value + 1e-12)


# -- the inequality -----------------------------------------------------------------

def test_check_with_natural_psi():
    rhs = hardy_rhs_norms(U, I01, 0.0, CFG)
    psi = natural(U, I01, 0.0, CFG, norms=rhs)
    rep = check_gls_hardy(U, I01, 0.0, psi, make_pgrid(1.0, math.inf, 8), rhs_norms=rhs)
    assert rep.rhs == 1.0
    assert rep.passed and rep.certificate_passed and not rep.vacuous
    assert rep.lhs < 1.0
    assert all(row["hardy_ratio"] <= row["K"] for row in rep.certificate)
    d = rep.to_dict()
    assert d["pass"] is True and d["psi"]["tag"] == "natural"


def test_check_zero_field_is_vacuous():
    rep = check_gls_hardy(zero_field(1), I01, 0.0, power(2.0, 1.0), make_pgrid(1.0, math.inf, 6))
    assert rep.vacuous and rep.passed and rep.rhs_zero and math.isnan(rep.ratio)


@pytest.mark.parametrize("spec", ["power:2", "logcorr:2,1", "power:0.5"])
def test_check_on_ball(spec):
    ball = Ball((0.0, 0.0), 1.0)
    u = bubble_field(ball, 2.0)
    a = 0.5
    L, R = hardy_lhs_norms(u, ball, a, CFG), hardy_rhs_norms(u, ball, a, CFG)
    psi = psi_from_spec(spec, 2 - a)
    rep = check_gls_hardy(u, ball, a, psi, make_pgrid(2 - a, math.inf, 6), lhs_norms=L, rhs_norms=R)
    assert rep.passed and rep.certificate_passed
    assert rep.ratio < 1.0


def test_check_divergent_gradient():
    with pytest.raises(GlsDivergent):
        check_gls_hardy(power_profile_field(I01, 0.3), I01, 0.0, power(2.0, 1.0), make_pgrid(1.0, 10.0, 5))


def test_extremal_family_ratio_tracks_hardy_ratio():
    # psi_K = K(2) at p = 2 only, so the ratio is the L_2 ratio over K(2) = 2
    dom = half_line_domain(64.0)
    grid = make_pgrid(1.0, math.inf, 4)
    psi = extremal(2.0, 1.0)
    ratios = []
    for beta in (1.2, 0.9, 0.7, 0.55):
        u = power_profile_field(dom, beta, 64.0)
        rep = check_gls_hardy(u, dom, 0.0, psi, grid)
        assert rep.passed
        assert rep.ratio == pytest.approx(hardy_ratio(u, dom, 0.0, 2.0, CFG) / 2.0, rel=1e-12)
        ratios.append(rep.ratio)
    assert all(np.diff(ratios) > 0) and ratios[-1] < 1.0
