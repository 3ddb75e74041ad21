"""Concrete learning graphs: OR, distinctness and the triangle constructions."""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

from . import symcalc
from .errors import ValidationError
from .lgraph import Flow, FunctionOracle, LGraph, neg_complexity
from .stages import (
    ReducedFlow,
    ReducedGraph,
    Subroutine,
    SymmetrySpec,
    expand,
    stage_terms,
)
from .symcalc import ComplexityExpr

# -- OR -----------------------------------------------------------------------


def or_oracle(n: int, promised_ones: int = 1) -> FunctionOracle:
    """OR on ``n`` bits, promised to have no ones or at least ``promised_ones``."""
    if promised_ones <= 1:
        domain = None
    else:
        domain = lambda x: sum(x) == 0 or sum(x) >= promised_ones
    return FunctionOracle(n, 2, lambda x: int(any(x)), domain, name=f"or{n}")


def or_graph(n: int, promised_ones: int = 1) -> tuple[LGraph, Callable[[tuple], Flow]]:
    """Star graph with unit weights and the flow ``1/|M|`` into each marked leaf."""
    if not 1 <= promised_ones <= n:
        raise ValidationError(f"need 1 <= r <= n, got r={promised_ones}, n={n}")
    g = LGraph(n, 2)
    for i in range(n):
        g.add_arc(g.root, g.add_vertex({i}))

    def flow_for(x):
        marked = [i for i in range(n) if x[i]]
        if not marked:
            raise ValidationError("OR flow needs at least one marked element")
        values = np.zeros(n)
        values[marked] = 1 / len(marked)
        return Flow(g, values, frozenset(i + 1 for i in marked), tuple(x))

    return g, flow_for


# -- distinctness ----------------------------------------------------------------


def distinctness_oracle(n: int, m: int) -> FunctionOracle:
    return FunctionOracle(n, m, lambda x: int(len(set(x)) < len(x)), name=f"distinct{n}/{m}")


def marked_pair(x: Sequence[int]) -> tuple[int, int] | None:
    """Lexicographically least colliding pair."""
    for a, b in itertools.combinations(range(len(x)), 2):
        if x[a] == x[b]:
            return a, b
    return None


def distinctness_closed_form(n: int, r: int) -> tuple[float, float, float]:
    """Stage complexities of the distinctness graph with unit weights, in closed form."""
    c = comb(n - 2, r - 2)
    pos = Fraction(1, c)
    c1 = comb(n, r - 2) * (r - 2) * Fraction(c * (r - 2), c * c)
    c2 = (n - r + 2) * comb(n, r - 2) * pos
    c3 = (n - r + 1) * comb(n, r - 1) * pos
    return math.sqrt(c1), math.sqrt(c2), math.sqrt(c3)


@dataclass
class DistinctnessInstance:
    """Three-stage reduced graph: load ``r-2`` other items, then ``a``, then ``b``."""

    items: tuple
    r: int
    graph: ReducedGraph

    def flow(self, marking: tuple) -> ReducedFlow:
        a, b = marking
        rg = self.graph
        share = Fraction(1, comb(len(self.items) - 2, self.r - 2))
        values = [Fraction(0)] * len(rg.transitions)
        for t, tr in enumerate(rg.transitions):
            src, dst = rg.vertices[tr.src].loaded, rg.vertices[tr.dst].loaded
            if (
                (tr.stage == 1 and a not in dst and b not in dst)
                or (tr.stage == 2 and dst - src == {a} and b not in src)
                or (tr.stage == 3 and dst - src == {b} and a in src)
            ):
                values[t] = share
        return ReducedFlow(rg, values, (a, b))

    def valid(self, t: int, marking: tuple) -> bool:
        a, b = marking
        tr = self.graph.transitions[t]
        src = self.graph.vertices[tr.src].loaded
        dst = self.graph.vertices[tr.dst].loaded
        if tr.stage == 1:
            return a not in dst and b not in dst
        if tr.stage == 2:
            return dst - src == {a} and b not in src
        return dst - src == {b} and a in src

    def markings(self) -> list[tuple]:
        return list(itertools.combinations(self.items, 2))

    def flows(self) -> list[ReducedFlow]:
        return [self.flow(mk) for mk in self.markings()]

    def symmetry(self) -> SymmetrySpec:
        items = self.items
        n_vars = self.graph.n

        def act(perm):
            out = list(range(n_vars))
            for i, item in enumerate(items):
                out[item] = items[perm[i]]
            return tuple(out)

        return SymmetrySpec.symmetric(len(items), var_action=act)

    def stage_complexities(self) -> list[float]:
        flows = self.flows()
        out = []
        for i in (1, 2, 3):
            out.append(max(math.sqrt(float(np.prod(stage_terms(self.graph, i, fl)))) for fl in flows))
        return out

    def lgraph(self, rescale: bool = False):
        """Expanded learning graph and one arc flow per marking."""
        exp = expand(self.graph, self.flows(), rescale=rescale)
        return exp


def distinctness_graph(n: int, r: int, items: Sequence[int] | None = None, n_vars: int | None = None,
                       m: int = 2) -> DistinctnessInstance:
    """Distinctness reduced graph on ``items`` (default ``0..n-1``).

    ``items``/``n_vars`` let the same construction act on a subset of a larger
    variable space, as the triangle subroutine does.
    """
    items = tuple(range(n)) if items is None else tuple(items)
    if len(items) != n:
        raise ValidationError("items must list exactly n variables")
    if not 2 <= r <= n:
        raise ValidationError(f"need 2 <= r <= n, got r={r}, n={n}")
    rg = ReducedGraph(n if n_vars is None else n_vars, m, k=3)
    if r == 2:
        v1 = {frozenset(): rg.add_vertex(1, (), "I")}
    else:
        v1 = {frozenset(c): rg.add_vertex(1, c) for c in itertools.combinations(items, r - 2)}
    v2 = {frozenset(c): rg.add_vertex(2, c) for c in itertools.combinations(items, r - 1)}
    v3 = {frozenset(c): rg.add_vertex(3, c) for c in itertools.combinations(items, r)}
    for s, vid in v1.items():
        rg.add_transition(0, vid)
    for layer_from, layer_to in ((v1, v2), (v2, v3)):
        for s, vid in layer_from.items():
            for j in items:
                if j not in s:
                    rg.add_transition(vid, layer_to[s | {j}])
    return DistinctnessInstance(items, r, rg)


# -- triangle -----------------------------------------------------------------------


def edge_index(n: int) -> dict[tuple[int, int], int]:
    return {e: i for i, e in enumerate(itertools.combinations(range(n), 2))}


def edge(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


def triangle_oracle(n: int) -> FunctionOracle:
    idx = edge_index(n)
    triples = [
        (idx[(a, b)], idx[(a, c)], idx[(b, c)]) for a, b, c in itertools.combinations(range(n), 3)
    ]
    return FunctionOracle(
        len(idx), 2, lambda x: int(any(x[p] and x[q] and x[s] for p, q, s in triples)), name=f"triangle{n}"
    )


def marked_triangle(n: int, x: Sequence[int]) -> tuple[int, int, int] | None:
    """Lexicographically least triangle ``(a, b, c)``, ``a < b < c``."""
    idx = edge_index(n)
    for a, b, c in itertools.combinations(range(n), 3):
        if x[idx[(a, b)]] and x[idx[(a, c)]] and x[idx[(b, c)]]:
            return a, b, c
    return None


def triangle_symmetry(n: int) -> SymmetrySpec:
    """Vertex permutations acting on edge variables and on subgraph labels."""
    edges = list(itertools.combinations(range(n), 2))
    idx = {e: i for i, e in enumerate(edges)}

    def act(perm):
        return tuple(idx[edge(perm[i], perm[j])] for i, j in edges)

    def act_label(perm, label):
        if label is None or not isinstance(label, SubgraphVertexLabel):
            return label
        special = None if label.special is None else perm[label.special]
        return SubgraphVertexLabel(frozenset(perm[u] for u in label.vertex_set), special, label.layer)

    return SymmetrySpec.symmetric(n, var_action=act, label_action=act_label)


@dataclass(frozen=True)
class SubgraphVertexLabel:
    """Vertex set of a random subgraph, plus the stage-VI special vertex.

    ``layer`` keeps equal (edges, vertex set) pairs on different layers apart.
    """

    vertex_set: frozenset
    special: int | None = None
    layer: int = 0

    def __str__(self) -> str:
        body = "U=" + ",".join(map(str, sorted(self.vertex_set)))
        if self.special is not None:
            body += f";c={self.special}"
        return f"L{self.layer}[{body}]"


TRIANGLE_NEW_STAGES = {1: "I", 2: "II", 3: "III", 4: "V", 5: "VI"}


@dataclass
class TriangleNewInstance:
    """Explicit small-``n`` learning graph for the improved triangle algorithm.

    Layers 1-3 grow a random subgraph (vertex set ``U`` plus edges kept with
    probability ``s``) and add ``a`` then ``b``; layer 4 adds edge ``ab``;
    layer 5 names the third vertex ``c``; a distinctness subroutine then
    looks for the two edges joining ``c`` to the subgraph.
    """

    n: int
    r: int
    s: Fraction
    graph: ReducedGraph
    edges: dict[tuple[int, int], int]
    sub_r: int
    subroutine_info: dict = field(default_factory=dict)

    @property
    def threshold(self) -> Fraction:
        """Minimum edge count kept by the filter: ``s r^2 / 4``."""
        return self.s * self.r * self.r / 4

    def label(self, v: int) -> SubgraphVertexLabel:
        return self.graph.vertices[v].label

    def edge_set(self, v: int) -> set[tuple[int, int]]:
        inv = {i: e for e, i in self.edges.items()}
        return {inv[i] for i in self.graph.vertices[v].loaded}

    def markings(self) -> list[tuple]:
        return list(itertools.combinations(range(self.n), 3))

    # -- flows --------------------------------------------------------------------

    def walk_flow(self, marking: tuple) -> ReducedFlow:
        """Random-subgraph walk through layers 1-3 before any filtering."""
        a, b, c = marking
        rg, s = self.graph, self.s
        u_share = Fraction(1, comb(self.n - 3, self.r - 2))
        values = [Fraction(0)] * len(rg.transitions)
        for t, tr in enumerate(rg.transitions):
            if tr.stage > 3:
                continue
            lab_src, lab_dst = self.label(tr.src), self.label(tr.dst)
            new = lab_dst.vertex_set - (lab_src.vertex_set if lab_src else frozenset())
            k = tr.length
            if tr.stage == 1:
                if new & {a, b, c}:
                    continue
                pairs = comb(self.r - 2, 2)
                values[t] = u_share * s**k * (1 - s) ** (pairs - k)
            elif tr.stage == 2:
                if new != {a} or lab_src.vertex_set & {a, b, c}:
                    continue
                values[t] = s**k * (1 - s) ** (len(lab_src.vertex_set) - k)
            else:
                u = lab_src.vertex_set
                if new != {b} or a not in u or u & {b, c}:
                    continue
                values[t] = s**k * (1 - s) ** (len(u) - k)
        # turn per-step probabilities into path probabilities
        mass = {0: Fraction(1)}
        for t, tr in sorted(enumerate(rg.transitions), key=lambda it: it[1].stage):
            if tr.stage > 3 or not values[t]:
                continue
            values[t] *= mass.get(tr.src, 0)
            mass[tr.dst] = mass.get(tr.dst, 0) + values[t]
        return ReducedFlow(rg, values, marking, frozenset(rg.layers[3]))

    def is_good(self, v: int, marking: tuple) -> bool:
        """Layer-3 vertex passes the filter for ``marking``."""
        a, b, c = marking
        lab = self.label(v)
        loaded = self.graph.vertices[v].loaded
        return (
            {a, b} <= lab.vertex_set
            and c not in lab.vertex_set
            and self.edges[(a, b)] not in loaded
            and len(loaded) >= self.threshold
        )

    def survival(self, marking: tuple) -> Fraction:
        fl = self.walk_flow(marking)
        return sum(
            (fl.vertex_flow(v) for v in self.graph.layers[3] if self.is_good(v, marking)),
            Fraction(0),
        )

    def flow(self, marking: tuple) -> ReducedFlow:
        """Filtered, rescaled walk continued through layers 4-5."""
        rg = self.graph
        walk = self.walk_flow(marking)
        good = {v for v in rg.layers[3] if self.is_good(v, marking)}
        p = sum((walk.vertex_flow(v) for v in good), Fraction(0))
        if p == 0:
            raise ValidationError(f"filter removes all flow (marking {marking})")
        # fraction of each vertex's outflow that ends in a good vertex
        keep: dict[int, Fraction] = {v: Fraction(int(v in good)) for v in rg.layers[3]}
        for layer in (2, 1, 0):
            for v in rg.layers[layer]:
                outs = [t for t in rg.out_transitions(v) if walk.values[t]]
                total = sum((walk.values[t] for t in outs), Fraction(0))
                keep[v] = (
                    sum((walk.values[t] * keep[rg.transitions[t].dst] for t in outs), Fraction(0)) / total
                    if total
                    else Fraction(0)
                )
        values = [Fraction(0)] * len(rg.transitions)
        for t, tr in enumerate(rg.transitions):
            if tr.stage <= 3 and walk.values[t]:
                values[t] = walk.values[t] * keep[tr.dst] / p
        a, b, c = marking
        ab = self.edges[(a, b)]
        for t, tr in enumerate(rg.transitions):
            if tr.stage == 4 and tr.src in good and rg.vertices[tr.dst].loaded - rg.vertices[tr.src].loaded == {ab}:
                values[t] = walk.vertex_flow(tr.src) / p
        inflow = {}
        for t, tr in enumerate(rg.transitions):
            if tr.stage == 4 and values[t]:
                inflow[tr.dst] = inflow.get(tr.dst, 0) + values[t]
        for t, tr in enumerate(rg.transitions):
            if tr.stage == 5 and tr.src in inflow and self.label(tr.dst).special == c:
                values[t] = inflow[tr.src]
        return ReducedFlow(rg, values, marking)

    # -- validity predicates --------------------------------------------------------

    def valid(self, t: int, marking: tuple) -> bool:
        """Transition ``t`` is used by the (ideal) flow for ``marking``."""
        a, b, c = marking
        rg = self.graph
        tr = rg.transitions[t]
        src, dst = self.label(tr.src), self.label(tr.dst)
        u_src = src.vertex_set if src else frozenset()
        new = dst.vertex_set - u_src
        if tr.stage == 1:
            return not (new & {a, b, c})
        if tr.stage == 2:
            return new == {a} and not (u_src & {a, b, c})
        if tr.stage == 3:
            return new == {b} and a in u_src and not (u_src & {b, c})
        if tr.stage == 4:
            added = rg.vertices[tr.dst].loaded - rg.vertices[tr.src].loaded
            return self.is_good(tr.src, marking) and added == {self.edges[(a, b)]}
        return self.valid_vertex(tr.dst, marking)

    def valid_vertex(self, v: int, marking: tuple) -> bool:
        """Layer-5 vertex reached by the flow for ``marking``."""
        a, b, c = marking
        lab = self.label(v)
        loaded = self.graph.vertices[v].loaded
        return (
            lab.special == c
            and {a, b} <= lab.vertex_set
            and c not in lab.vertex_set
            and self.edges[(a, b)] in loaded
            and len(loaded) - 1 >= self.threshold
        )

    def symmetry(self) -> SymmetrySpec:
        return triangle_symmetry(self.n)


def triangle_new_instantiate(n: int, r: int, s, sub_r: int | None = None,
                             with_subroutines: bool = True) -> TriangleNewInstance:
    """Build the explicit reduced graph for the improved triangle algorithm.

    Requires ``n <= 7`` (everything is enumerated), ``3 <= r < n`` and a
    rational ``0 < s < 1``.
    """
    s = Fraction(s)
    if n > 7:
        raise ValidationError(f"explicit instantiation is limited to n <= 7, got {n}")
    if not 3 <= r < n:
        raise ValidationError(f"need 3 <= r < n, got r={r}, n={n}")
    if not 0 < s < 1:
        raise ValidationError(f"need 0 < s < 1, got {s}")
    idx = edge_index(n)
    rg = ReducedGraph(len(idx), 2, k=5)
    lab = SubgraphVertexLabel

    def pairs(u):
        return [idx[e] for e in itertools.combinations(sorted(u), 2)]

    def subsets(items):
        items = list(items)
        for k in range(len(items) + 1):
            yield from itertools.combinations(items, k)

    layer_ids: list[dict] = [{} for _ in range(6)]

    def vertex(layer, loaded, label):
        key = (frozenset(loaded), label)
        vid = layer_ids[layer].get(key)
        if vid is None:
            vid = layer_ids[layer][key] = rg.add_vertex(layer, loaded, label)
        return vid

    for u in itertools.combinations(range(n), r - 2):
        u = frozenset(u)
        for es in subsets(pairs(u)):
            rg.add_transition(0, vertex(1, es, lab(u, None, 1)))
    for layer in (2, 3):
        for (loaded, label), vid in list(layer_ids[layer - 1].items()):
            u = label.vertex_set
            for w in range(n):
                if w in u:
                    continue
                for es in subsets(idx[edge(w, x)] for x in sorted(u)):
                    dst = vertex(layer, loaded | set(es), lab(u | {w}, None, layer))
                    rg.add_transition(vid, dst)
    threshold = s * r * r / 4
    for (loaded, label), vid in list(layer_ids[3].items()):
        if len(loaded) < threshold:
            continue
        u = label.vertex_set
        for e in pairs(u):
            if e not in loaded:
                rg.add_transition(vid, vertex(4, loaded | {e}, lab(u, None, 4)))
    for (loaded, label), vid in list(layer_ids[4].items()):
        u = label.vertex_set
        for c in range(n):
            if c not in u:
                rg.add_transition(vid, vertex(5, loaded, lab(u, c, 5)))

    if sub_r is None:
        sub_r = min(r, max(2, math.ceil(r ** (2 / 3))))
    inst = TriangleNewInstance(n, r, s, rg, idx, sub_r)
    if with_subroutines:
        _attach_triangle_subroutines(inst)
    return inst


def _attach_triangle_subroutines(inst: TriangleNewInstance) -> None:
    """Distinctness-type graph over the edges joining ``c`` to ``U``, balanced."""
    rg, idx = inst.graph, inst.edges
    cache: dict = {}
    for v in rg.layers[5]:
        lab = inst.label(v)
        c = lab.special
        items = tuple(idx[edge(c, u)] for u in sorted(lab.vertex_set))
        dist = distinctness_graph(len(items), inst.sub_r, items=items, n_vars=rg.n)
        exp = dist.lgraph(rescale=False)
        g = exp.graph
        neg = float(neg_complexity(g))
        first = dist.flow(dist.markings()[0])
        pos = float(sum(stage_terms(dist.graph, i, first)[1] for i in (1, 2, 3)))
        scale = math.sqrt(pos / neg)
        g = g.scaled(scale)
        arc_flows = {frozenset(fl.x): fl.values for fl in exp.flows}

        def flow_for(marking, _flows=arc_flows):
            a, b, c = marking
            return _flows[frozenset((idx[edge(c, a)], idx[edge(c, b)]))]

        rg.attach(v, Subroutine(g, neg * scale, pos / scale, flow_for))
        cache[v] = (neg, pos)
    inst.subroutine_info = cache


# -- stage tables ---------------------------------------------------------------


def distinctness_table(r_exp=None) -> ComplexityExpr:
    """Speciality (1, n, n^2/r), length (r, 1, 1)."""
    return symcalc.distinctness_table().substitute({"r": r_exp})


def triangle_old_table(r_exp=None, l_exp=None) -> ComplexityExpr:
    """Six stages; parameters given as exponents of ``n`` are substituted."""
    return symcalc.triangle_old_table().substitute({"r": r_exp, "l": l_exp})


def triangle_new_table(r_exp=None, s_exp=None) -> ComplexityExpr:
    """Five stages (IV is a flow filter, VI has length 0)."""
    return symcalc.triangle_new_table().substitute({"r": r_exp, "s": s_exp})
