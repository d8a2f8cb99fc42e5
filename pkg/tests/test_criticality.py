from fractions import Fraction as F

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from singtime import criticality as crit
from singtime.criticality import (
    ADDITIVE,
    COUPLED,
    CriticalityError,
    NonlinearityTerm,
    Setting,
    excess,
    excess_per_term,
    holder_gap_exponent,
    lifetime_tail_bound,
    nse_table,
    nse_weak_setting,
    serrin_delta,
)


def oracle_exc(rho, beta, p, alpha):
    # hand formula, independent of the module
    return F(1) - beta - F(rho) / (rho + 1) * (1 + F(alpha)) / p


def rationals(lo, hi, max_den=40):
    return st.fractions(min_value=lo, max_value=hi, max_denominator=max_den)


# ---------------------------------------------------------------- inputs

def test_as_rational_floats_use_shortest_decimal():
    assert crit.as_rational(0.75) == F(3, 4)
    assert crit.as_rational(0.1) == F(1, 10)
    assert crit.as_rational("5/2") == F(5, 2)


@pytest.mark.parametrize("rho,beta", [(0, F(1, 2)), (-1, F(1, 2)), (1, 0), (1, 1), (1, F(3, 2))])
def test_term_validation(rho, beta):
    with pytest.raises(CriticalityError):
        NonlinearityTerm(rho, beta)


@pytest.mark.parametrize("p,alpha", [(1, 0), (4, -1), (4, 1), (4, 2), (F(5, 2), F(1, 4))])
def test_setting_p_alpha_validation(p, alpha):
    with pytest.raises(CriticalityError):
        Setting(p, alpha, (NonlinearityTerm(1, F(3, 4)),))


def test_setting_p_equal_two_allows_alpha_zero():
    Setting(2, 0, (NonlinearityTerm(1, F(3, 4)),))


def test_strict_roughness_window():
    # 1 - (1+alpha)/p = 3/4 at p=4, alpha=0; beta=1/2 is below it
    with pytest.raises(CriticalityError, match="beta"):
        Setting(4, 0, (NonlinearityTerm(1, F(1, 2)),), strict=True)
    with pytest.raises(CriticalityError):
        excess_per_term(NonlinearityTerm(1, F(1, 2)), 4, 0, strict=True)


def test_empty_terms_rejected():
    with pytest.raises(CriticalityError):
        Setting(4, 0, ())


# ---------------------------------------------------------------- excess_per_term

def test_excess_nse_weak_q3():
    ws = nse_weak_setting(3)
    got = excess_per_term(NonlinearityTerm(1, ws.beta), ws.p, ws.alpha)
    expected = F(1) - F(1, 2) - F(1, 4) - F(1, 2) * (F(3, 4) - F(1, 2))
    assert got == expected == F(1, 8)


def test_excess_large_rho_critical_beta_near_zero():
    rho = 10**6
    p, alpha = F(4), F(0)
    beta = 1 - (1 + alpha) / p
    got = excess_per_term(NonlinearityTerm(rho, beta), p, alpha)
    assert got == F(1, rho + 1) * (1 + alpha) / p
    assert got < F(1, 10**6)


def test_excess_simple_arithmetic():
    assert excess_per_term(NonlinearityTerm(1, F(1, 2)), 4, 0) == F(3, 8)


# ---------------------------------------------------------------- excess

def test_excess_nse_single_term_report():
    rep = excess(nse_weak_setting(3).setting(2))
    assert rep.exc == F(1, 4)
    assert rep.dimension_bound == F(1, 2)
    assert rep.regime == crit.PARTIAL_REGULARITY


def test_excess_critical_beta_is_spatially_critical():
    # rho = 1, p = 4, alpha = 0: exc = 0 when beta = 1 - 1/8
    rep = excess(Setting(4, 0, (NonlinearityTerm(1, F(7, 8)),)))
    assert rep.exc == 0
    assert rep.regime == crit.SPATIALLY_CRITICAL
    assert rep.dimension_bound == 1
    assert rep.notes


def test_excess_two_terms_coupled():
    terms = (NonlinearityTerm(1, F(3, 4)), NonlinearityTerm(2, F(1, 2)))
    rep = excess(Setting(8, 0, terms))
    e1 = oracle_exc(1, F(3, 4), 8, 0)
    e2 = oracle_exc(2, F(1, 2), 8, 0)
    assert (e1, e2) == (F(3, 16), F(5, 12))
    assert rep.exc_terms == [e1, e2]
    assert rep.exc == min(e1, e2) * (1 + F(1, 2)) == F(9, 32)


def test_excess_two_terms_additive_differs():
    terms = (NonlinearityTerm(1, F(3, 4)), NonlinearityTerm(2, F(1, 2)))
    rep = excess(Setting(8, 0, terms, split_mode=ADDITIVE))
    expected = min(F(2) * F(1, 4) - F(1, 8), F(3, 2) * F(1, 2) - F(1, 8))
    assert rep.exc == expected == F(3, 8)


def test_negative_excess_is_global_irregularity():
    rep = excess(Setting(4, 0, (NonlinearityTerm(3, F(99, 100)),)))
    assert rep.exc < 0
    assert rep.regime == crit.GLOBAL_IRREGULARITY
    assert rep.dimension_bound > 1


@given(rationals(F(1, 4), 5), rationals(F(1, 20), F(19, 20)), st.integers(2, 12), rationals(0, 4))
def test_single_term_coupled_equals_additive(rho, beta, p, alpha):
    assume(alpha == 0 or alpha < F(p, 2) - 1)
    term = NonlinearityTerm(rho, beta)
    c = excess(Setting(p, alpha, (term,), split_mode=COUPLED)).exc
    a = excess(Setting(p, alpha, (term,), split_mode=ADDITIVE)).exc
    assert c == a == oracle_exc(rho, beta, p, alpha) * (1 + 1 / rho)


@given(rationals(F(1, 4), 5), rationals(F(1, 20), F(18, 20)), rationals(F(1, 40), F(1, 20)), st.integers(2, 12))
def test_excess_strictly_decreasing_in_beta(rho, beta, db, p):
    lo = excess(Setting(p, 0, (NonlinearityTerm(rho, beta),))).exc
    hi = excess(Setting(p, 0, (NonlinearityTerm(rho, beta + db),))).exc
    assert hi < lo


@given(rationals(F(1, 4), 5), rationals(F(1, 20), F(19, 20)), st.integers(4, 12))
def test_excess_strictly_decreasing_in_alpha_ratio(rho, beta, p):
    lo = excess(Setting(p, 0, (NonlinearityTerm(rho, beta),))).exc
    hi = excess(Setting(p, F(1, 2), (NonlinearityTerm(rho, beta),))).exc
    assert hi < lo


@given(rationals(F(1, 4), 5), rationals(F(1, 20), F(19, 20)), st.integers(2, 12), rationals(1, 4))
def test_regime_partition(rho, beta, p, ell):
    rep = excess(Setting(p, 0, (NonlinearityTerm(rho, beta),), ell))
    middle = 0 < rep.exc < 1 / ell
    assert sum([rep.exc <= 0, middle, rep.exc >= 1 / ell]) == 1
    assert (0 < rep.dimension_bound < 1) == middle
    assert (1 / ell - rep.exc > 0) == (rep.dimension_bound > 0)
    assert rep.dimension_bound == 1 - ell * rep.exc


# ---------------------------------------------------------------- serrin

def test_serrin_4_4():
    res = serrin_delta(4, 4)
    assert res.delta0 == 2 * (F(1, 2) + F(3, 4) - 1) == F(1, 2)
    assert res.regime == crit.PARTIAL_REGULARITY


def test_serrin_endpoint():
    res = serrin_delta(4, 6)
    assert res.delta0 == 0
    assert res.regime == crit.GLOBAL_REGULARITY


@pytest.mark.parametrize("p0", [F(2) + F(k, 7) for k in range(1, 21)])
def test_serrin_invariance_curve(p0):
    q0 = 3 * p0 / (p0 - 1)
    assert serrin_delta(p0, q0).delta0 == F(1, 2)


@pytest.mark.parametrize("p0,q0,g0", [(1, 4, 0), (4, 3, 0), (4, 4, -1), (4, 4, 1), (4, 4, F(1, 2))])
def test_serrin_admissibility(p0, q0, g0):
    with pytest.raises(CriticalityError):
        serrin_delta(p0, q0, g0)


def test_serrin_with_gamma():
    res = serrin_delta(4, 6, F(1, 10))
    assert res.delta0 == 2 * (F(1, 2) + F(1, 10) + F(1, 2) - 1) == F(1, 5)


# ---------------------------------------------------------------- NSE weak setting

def test_nse_weak_q3():
    ws = nse_weak_setting(3)
    assert (1 + ws.alpha) / ws.p == F(1, 4)
    assert ws.beta == F(3, 4)
    assert ws.trace_index == F(-1, 2) == 1 - F(3, 2)


@pytest.mark.parametrize("q", [F(5, 2), F(3), F(4), F(5), F(21, 10), F(59, 10)])
def test_nse_weak_q_independence(q):
    ws = nse_weak_setting(q)
    assert (1 + ws.alpha) / ws.p == F(3, 2) * (F(1, 2) - 1 / q)
    assert ws.p > 2
    assert excess_per_term(NonlinearityTerm(1, ws.beta), ws.p, ws.alpha) == F(1, 8)
    assert excess(ws.setting(2)).exc == F(1, 4)


@pytest.mark.parametrize("q", [2, 6, 1, 7])
def test_nse_weak_range(q):
    with pytest.raises(CriticalityError, match="2 < q < 6"):
        nse_weak_setting(q)


def test_nse_weak_near_two_needs_large_p():
    ws = nse_weak_setting(F(201, 100))
    assert ws.p > 100
    assert ws.alpha >= 0


# ---------------------------------------------------------------- Hölder gap

def test_holder_gap_nse_equals_excess():
    ws = nse_weak_setting(3)
    assert holder_gap_exponent(NonlinearityTerm(1, ws.beta), ws.p, ws.alpha) == F(1, 8)


def test_holder_gap_critical_zero():
    p, alpha, rho = F(4), F(0), F(1)
    beta = 1 - rho / (rho + 1) * (1 + alpha) / p
    assert holder_gap_exponent(NonlinearityTerm(rho, beta), p, alpha) == 0


def test_holder_gap_weighted():
    assert holder_gap_exponent(NonlinearityTerm(1, F(1, 2)), 4, 1) == 1 - F(1, 2) - F(1, 2) * F(1, 2) == F(1, 4)


@given(rationals(F(1, 4), 5), rationals(F(1, 20), F(19, 20)), st.integers(2, 12), rationals(0, 3))
def test_holder_gap_matches_excess_formula(rho, beta, p, alpha):
    term = NonlinearityTerm(rho, beta)
    assume(beta <= 1 - rho / (rho + 1) * (1 + alpha) / p)
    assert holder_gap_exponent(term, p, alpha) == oracle_exc(rho, beta, p, alpha)


def test_holder_gap_hypothesis_violation():
    with pytest.raises(CriticalityError):
        holder_gap_exponent(NonlinearityTerm(1, F(9, 10)), 4, 0)


# ---------------------------------------------------------------- tail bound

def test_tail_bound_critical_is_T_independent():
    a = lifetime_tail_bound(0, 4, 2.0, 0.1, 3.0)
    b = lifetime_tail_bound(0, 4, 2.0, 10.0, 3.0)
    assert a == b == 3.0 * (1 + 2.0**4)


def test_tail_bound_value():
    assert lifetime_tail_bound(F(1, 4), 4, 0.0, 1 / 16) == pytest.approx(1 / 16, rel=1e-15)


@given(st.floats(1e-3, 10), st.floats(0, 5))
def test_tail_bound_doubling(T, N):
    a = lifetime_tail_bound(F(1, 4), 4, N, T)
    b = lifetime_tail_bound(F(1, 4), 4, N, 2 * T)
    assert b == pytest.approx(2 * a, rel=1e-12)


@pytest.mark.parametrize("args", [(-1, 4, 1.0, 1.0), (F(1, 4), 4, -1.0, 1.0), (F(1, 4), 4, 1.0, 0.0)])
def test_tail_bound_validation(args):
    with pytest.raises(CriticalityError):
        lifetime_tail_bound(*args)


# ---------------------------------------------------------------- table

def test_nse_table_rows():
    rows = nse_table()
    assert rows[1] == "1 | L^2_t(H^1(T^3)) | 2 | 1-3/2 = -1/2 | (1/2)(-1/2+1) = 1/4 | 1/2"
    assert rows[2].endswith("(p0,q0)=(4,4) -> 1/2; (p0,q0)=(4,6) -> 0 [global_regularity]")
    assert rows == nse_table()
