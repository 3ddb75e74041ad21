from __future__ import annotations

import itertools
import math
from fractions import Fraction
from math import comb

import pytest

from lgspan.catalog import (
    SubgraphVertexLabel,
    distinctness_closed_form,
    distinctness_graph,
    distinctness_oracle,
    distinctness_table,
    edge_index,
    marked_pair,
    marked_triangle,
    or_graph,
    or_oracle,
    triangle_new_instantiate,
    triangle_new_table,
    triangle_old_table,
)
from lgspan.errors import ValidationError
from lgspan.lgraph import check_conservation, graph_complexity
from lgspan.stages import certify_symmetric_stage, check_reduced_conservation, expand
from lgspan.symcalc import Monomial, optimize_exponents

F = Fraction


# -- OR ------------------------------------------------------------------------------


@pytest.mark.parametrize("n,r,total", [(9, 1, 3.0), (8, 2, 2.0), (1, 1, 1.0)])
def test_or_complexity(n, r, total):
    g, _ = or_graph(n, r)
    assert graph_complexity(g, or_oracle(n, r)).total == pytest.approx(total)


def test_or_flow_family():
    _g, flow_for = or_graph(4, 2)
    fl = flow_for((0, 1, 1, 0))
    assert list(fl.values) == [0, 0.5, 0.5, 0]
    with pytest.raises(ValidationError):
        or_graph(3, 4)


# -- distinctness -----------------------------------------------------------------------


def test_distinctness_5_4_stage_complexities():
    inst = distinctness_graph(5, 4)
    expected = [math.sqrt(F(40, 3)), math.sqrt(10), math.sqrt(F(20, 3))]
    assert inst.stage_complexities() == pytest.approx(expected, rel=1e-12)
    assert list(distinctness_closed_form(5, 4)) == pytest.approx(expected, rel=1e-12)


def test_distinctness_flow_share_and_conservation():
    n, r = 6, 4
    inst = distinctness_graph(n, r)
    for fl in inst.flows():
        check_reduced_conservation(fl)
        assert set(fl.values) == {0, F(1, comb(n - 2, r - 2))}


def test_distinctness_table_entries():
    expr = distinctness_table()
    assert expr.specialities == [Monomial.of(), Monomial.of(n=1), Monomial.of(n=2, r=-1)]
    assert expr.lengths == [Monomial.of(r=1), Monomial.of(), Monomial.of()]
    sol = optimize_exponents(expr)
    assert (sol.params["r"], sol.value) == (F(2, 3), F(2, 3))


def test_marked_pair_is_lexicographic():
    assert marked_pair((3, 1, 3, 1)) == (0, 2)
    assert marked_pair((0, 1, 2)) is None


def test_distinctness_expanded_flows_are_feasible():
    inst = distinctness_graph(5, 3, m=5)
    exp = expand(inst.graph, inst.flows(), rescale=True)
    f = distinctness_oracle(5, 5)
    for fl, (a, b) in zip(exp.flows, inst.markings()):
        check_conservation(fl)
        x = tuple(range(5))[:b] + (a,) + tuple(range(5))[b + 1:]
        assert f(x) == 1


# -- tables -------------------------------------------------------------------------------------


def test_triangle_old_stage_three_at_optimum():
    expr = triangle_old_table(F(3, 5))
    assert expr.terms[2].n_exponent({"l": F(2, 5)}) == F(13, 10)


def test_triangle_old_degenerate_l_equals_r():
    expr = triangle_old_table(F(1, 2), F(1, 2))
    assert expr.terms[3] == Monomial.of(n=F(3, 2))


def test_triangle_new_s_one():
    expr = triangle_new_table(s_exp=0)
    assert expr.terms[0] == Monomial.of(r=2)


def test_triangle_new_stage_vii_term():
    assert triangle_new_table().terms[-1] == Monomial.of(n=F(3, 2), s=F(-1, 2), r=F(-1, 3))


# -- triangle-new instance --------------------------------------------------------------------


@pytest.fixture(scope="module")
def tri5():
    return triangle_new_instantiate(5, 3, F(1, 2))


def stage3_formula(n, r, s, m, k):
    """C(n-3, r-2)^-1 s^(m+k) (1-s)^(C(r,2)-m-k)."""
    return F(1, comb(n - 3, r - 2)) * s ** (m + k) * (1 - s) ** (comb(r, 2) - m - k)


def test_stage3_flow_is_one_sixteenth(tri5):
    rg = tri5.graph
    for mk in tri5.markings():
        walk = tri5.walk_flow(mk)
        vals = {walk.values[t] for t in rg.stage(3) if tri5.valid(t, mk)}
        assert vals == {F(1, 16)}
        assert all(walk.values[t] == 0 for t in rg.stage(3) if not tri5.valid(t, mk))


@pytest.mark.parametrize("n,r,s", [(5, 3, F(1, 3)), (6, 4, F(2, 5)), (6, 3, F(1, 4))])
def test_stage3_flow_depends_only_on_edge_counts(n, r, s):
    inst = triangle_new_instantiate(n, r, s, with_subroutines=False)
    rg = inst.graph
    mk = inst.markings()[0]
    walk = inst.walk_flow(mk)
    by_counts: dict = {}
    for t in rg.stage(3):
        if not inst.valid(t, mk):
            continue
        tr = rg.transitions[t]
        m, k = len(rg.vertices[tr.src].loaded), tr.length
        assert walk.values[t] == stage3_formula(n, r, s, m, k)
        by_counts.setdefault((m, k), set()).add(walk.values[t])
    assert all(len(v) == 1 for v in by_counts.values())


def test_post_filter_flow(tri5):
    for mk in tri5.markings():
        fl = tri5.flow(mk)
        check_reduced_conservation(fl)
        assert sum(fl.values[t] for t in tri5.graph.out_transitions(0)) == 1


def test_survival_matches_excluded_mass(tri5):
    rg = tri5.graph
    for mk in tri5.markings()[:4]:
        walk = tri5.walk_flow(mk)
        excluded = sum((walk.vertex_flow(v) for v in rg.layers[3] if not tri5.is_good(v, mk)), F(0))
        assert tri5.survival(mk) == 1 - excluded
        assert tri5.survival(mk) == F(1, 8)


def test_stage_v_flow_after_rescale(tri5):
    rg = tri5.graph
    mk = (0, 1, 2)
    fl = tri5.flow(mk)
    assert {fl.values[t] for t in rg.stage(4) if fl.values[t]} == {F(1, 2)}


def test_filter_killing_all_flow_reported():
    inst = triangle_new_instantiate(5, 3, F(99, 100), with_subroutines=False)
    with pytest.raises(ValidationError, match="filter removes all flow"):
        inst.flow((0, 1, 2))


@pytest.mark.parametrize("kwargs", [{"n": 8, "r": 3, "s": F(1, 2)}, {"n": 5, "r": 5, "s": F(1, 2)}, {"n": 5, "r": 3, "s": 1}])
def test_instantiate_preconditions(kwargs):
    with pytest.raises(ValidationError):
        triangle_new_instantiate(**kwargs, with_subroutines=False)


def test_labels_keep_vertex_set(tri5):
    rg = tri5.graph
    for v in rg.layers[5]:
        lab = tri5.label(v)
        assert isinstance(lab, SubgraphVertexLabel)
        assert lab.special is not None and lab.special not in lab.vertex_set
        for e in tri5.edge_set(v):
            assert set(e) <= lab.vertex_set
    empty = [v for v in rg.layers[1] if not rg.vertices[v].loaded]
    assert len({tri5.label(v).vertex_set for v in empty}) == len(empty)


def test_marked_triangle_lexicographic():
    n = 5
    x = [0] * 10
    idx = edge_index(n)
    for tri in ((1, 2, 3), (0, 3, 4)):
        for e in itertools.combinations(tri, 2):
            x[idx[e]] = 1
    assert marked_triangle(n, x) == (0, 3, 4)


def test_triangle_pre_filter_stages_symmetric(tri5):
    flows = [tri5.walk_flow(mk) for mk in tri5.markings()]
    spec = tri5.symmetry()
    # hand counts at n=5, r=3, s=1/2: stage I loads no edges, T = n/(n-3);
    # stage II adds one pair w.p. s, T = n(n-1)/(n-3); stage III adds two,
    # T = C(n,2)(n-2)/(n-3)
    expected = {1: (F(0), F(5, 2)), 2: (F(1, 2), F(10)), 3: (F(1), F(15))}
    for stage, (L, T) in expected.items():
        cert = certify_symmetric_stage(tri5.graph, stage, spec, flows, tri5.valid)
        assert (cert.L, cert.T) == (L, T)
        assert cert.exact <= cert.bound + 1e-9
