from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from lgspan.errors import UnboundedError, ValidationError
from lgspan.symcalc import (
    ComplexityExpr,
    Monomial,
    distinctness_table,
    eval_expr,
    load_table,
    max_term,
    optimize_exponents,
    stage_table_to_expr,
    triangle_new_table,
    triangle_old_table,
)

F = Fraction
M = Monomial.of


def test_distinctness_table_expression():
    assert distinctness_table().terms == [M(r=1), M(n=F(1, 2)), M(n=1, r=F(-1, 2))]


def test_triangle_new_table_expression():
    assert triangle_new_table().terms == [
        M(s=1, r=2),
        M(s=1, r=1, n=F(1, 2)),
        M(s=1, n=1, r=F(1, 2)),
        M(n=1),
        M(n=F(3, 2), s=F(-1, 2), r=F(-1, 3)),
    ]


def test_triangle_old_table_expression():
    assert triangle_old_table().terms == [
        M(r=2),
        M(r=1, n=F(1, 2)),
        M(n=1, r=F(1, 2)),
        M(n=F(3, 2), l=1, r=-1),
        M(n=F(3, 2), r=F(-1, 2)),
        M(n=F(3, 2), l=F(-1, 2)),
    ]


def test_identity_table_is_constant():
    expr = stage_table_to_expr([M(), M()], [M(), M()])
    assert all(t == Monomial() for t in expr.terms)
    assert optimize_exponents(expr).value == 0


def test_misaligned_table():
    with pytest.raises(ValidationError):
        stage_table_to_expr([M()], [M(), M()])


# -- optimization -------------------------------------------------------------------


def labels(sol):
    return {sol.expr.labels[i] for i in sol.tight}


def test_distinctness_optimum():
    sol = optimize_exponents(distinctness_table())
    assert sol.params == {"r": F(2, 3)}
    assert sol.value == F(2, 3)
    assert labels(sol) == {"I", "III"}
    assert sol.check_certificate()


def test_triangle_old_optimum():
    sol = optimize_exponents(triangle_old_table())
    assert sol.params == {"r": F(3, 5), "l": F(2, 5)}
    assert sol.value == F(13, 10)
    # stages III, IV, VI at 13/10; stage I at 12/10
    assert labels(sol) == {"III", "IV", "VI"}
    assert sol.term_exponents()[0] == F(12, 10)
    assert sol.check_certificate()


def test_triangle_new_optimum():
    sol = optimize_exponents(triangle_new_table())
    assert sol.params == {"r": F(2, 3), "s": F(-1, 27)}
    assert sol.value == F(35, 27)
    assert labels(sol) == {"I", "III", "VII"}
    assert sol.multipliers == {0: F(1, 27), 2: F(8, 27), 4: F(2, 3)}
    assert sol.check_certificate()


def test_certificate_rejects_tampering():
    sol = optimize_exponents(triangle_new_table())
    sol.multipliers[0] += F(1, 27)
    assert not sol.check_certificate()


def test_single_term_table():
    assert optimize_exponents(ComplexityExpr([M(n=F(7, 4))])).value == F(7, 4)


def test_unbounded():
    with pytest.raises(UnboundedError):
        optimize_exponents(ComplexityExpr([M(r=1), M(n=1, r=1)]))


def test_bounds_make_it_bounded():
    sol = optimize_exponents(ComplexityExpr([M(r=1)]), bounds={"r": (F(1, 3), None)})
    assert sol.params["r"] == F(1, 3)
    assert sol.bound_multipliers == {("r", "lower"): 1}
    assert sol.check_certificate()


def test_fixed_parameter_substitution():
    expr = triangle_new_table().substitute({"s": 0})
    sol = optimize_exponents(expr)
    # 1 + rho/2 = 3/2 - rho/3 balances at rho = 3/5
    assert sol.params == {"r": F(3, 5)}
    assert sol.value == F(13, 10) > F(35, 27)


def test_unsubstituted_parameter_rejected():
    with pytest.raises(ValidationError):
        optimize_exponents(triangle_new_table(), free_params=["r"])


def test_tie_break_minimizes_abs_rho():
    # max(1, rho, -rho) = 1 on all of [-1, 1]; the tie-break picks rho = 0
    expr = ComplexityExpr([M(n=1), M(r=1), M(r=-1)])
    sol = optimize_exponents(expr)
    assert sol.value == 1
    assert sol.params == {"r": 0}


@pytest.mark.parametrize("table", [distinctness_table, triangle_old_table, triangle_new_table])
def test_grid_never_beats_lp(table):
    expr = table()
    sol = optimize_exponents(expr)
    params = expr.params()
    grid = [F(k, 54) for k in range(-54, 55)]
    for point in itertools.product(grid, repeat=len(params)):
        assign = dict(zip(params, point))
        assert max(t.n_exponent(assign) for t in expr.terms) >= sol.value


# -- evaluation --------------------------------------------------------------------------


def test_eval_distinctness_at_million():
    expr = distinctness_table()
    assert eval_expr(expr, 10**6, {"r": F(2, 3)}) == pytest.approx(21000)
    assert max_term(expr, 10**6, {"r": F(2, 3)}) == pytest.approx(10**4)


@pytest.mark.parametrize("n", [2, 3, 10, 1000, 10**6])
def test_sigma_choice_lowers_max_term(n):
    expr = triangle_new_table()
    flat = max_term(expr, n, {"r": F(2, 3), "s": 0})
    tuned = max_term(expr, n, {"r": F(2, 3), "s": F(-1, 27)})
    assert tuned < flat


def test_eval_needs_n_at_least_two():
    with pytest.raises(ValidationError):
        eval_expr(distinctness_table(), 1, {"r": F(1, 2)})


# -- serialization -------------------------------------------------------------------------


def test_load_table_terms_and_stages():
    expr = load_table('{"terms": [{"n": "3/2", "s": "-1/2"}, [1, 0, 0, 0]]}')
    assert expr.terms == [M(n=F(3, 2), s=F(-1, 2)), M(n=1)]
    expr = load_table('{"specialities": [[0], [1]], "lengths": [[0, 1], [0]], "labels": ["A", "B"]}')
    assert expr.terms == [M(r=1), M(n=F(1, 2))]
    assert expr.labels == ["A", "B"]


def test_load_table_errors_name_the_entry():
    with pytest.raises(ValidationError, match=r"terms\[1\]"):
        load_table('{"terms": [{"n": 1}, {"q": 2}]}')
    with pytest.raises(ValidationError, match="line 1"):
        load_table('{"terms": ')


def test_markdown_marks_tight_terms():
    md = optimize_exponents(triangle_new_table()).to_markdown()
    assert "**35/27**" in md and "sigma = -1/27" in md
    assert md.count("**") == 6


def test_json_is_exact_strings():
    doc = optimize_exponents(triangle_old_table()).to_json()
    assert doc["value"] == "13/10"
    assert doc["params"] == {"rho": "3/5", "lambda": "2/5"}
    assert doc["certificate_ok"] is True


# -- properties ------------------------------------------------------------------------------

small = st.fractions(min_value=-2, max_value=2, max_denominator=6)


@st.composite
def tables(draw):
    k = draw(st.integers(1, 6))
    terms = [
        Monomial(draw(small), draw(small), draw(small), Fraction(0))
        for _ in range(k)
    ]
    return ComplexityExpr(terms)


@settings(max_examples=60, deadline=None)
@given(tables())
def test_random_tables_match_float_lp(expr):
    params = expr.params()
    bounds = {p: (-3, 3) for p in params}
    sol = optimize_exponents(expr, bounds=bounds)
    assert sol.check_certificate()
    k = len(params)
    c = np.zeros(k + 1)
    c[-1] = 1
    a = [[float(getattr(t, p)) for p in params] + [-1.0] for t in expr.terms]
    b = [-float(t.n) for t in expr.terms]
    res = linprog(c, A_ub=a, b_ub=b, bounds=[(-3, 3)] * k + [(None, None)], method="highs")
    assert res.status == 0
    assert float(sol.value) == pytest.approx(res.fun, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.fractions(min_value=-1, max_value=2, max_denominator=54),
       st.fractions(min_value=-1, max_value=1, max_denominator=54))
def test_lattice_points_never_beat_triangle_new(rho, sigma):
    expr = triangle_new_table()
    assert max(t.n_exponent({"r": rho, "s": sigma}) for t in expr.terms) >= F(35, 27)
