"""Reduced learning graphs organized in stages.

A reduced graph has vertex layers ``V_0 = {root}, V_1, ..., V_k``; stage ``i``
consists of transitions from ``V_{i-1}`` to ``V_i`` that may load several
variables at once.  This module expands reduced graphs into ordinary
learning graphs, evaluates per-stage complexities, partitions transitions
into orbits of a symmetry group, and certifies the ``L * sqrt(T)`` stage
bounds (including a final subroutine stage).
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from collections.abc import Callable, Hashable, Iterable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    BudgetExceededError,
    ConservationError,
    SymmetryError,
    UnbalancedSubroutineError,
    ValidationError,
)
from .lgraph import Flow, LGraph, LVertex, flow_complexity

DEFAULT_GROUP_BUDGET = 10**6


@dataclass(frozen=True)
class Transition:
    src: int
    dst: int
    stage: int
    weight: Fraction | float
    length: int


@dataclass
class Subroutine:
    """A learning graph appended after a vertex of the last layer.

    ``graph`` lives in the same variable space as the reduced graph and its
    vertices must avoid the variables already loaded at the attachment
    vertex.  ``negative``/``positive`` are its complexities for the marked
    elements; ``complexity`` is the common value once balanced.
    """

    graph: LGraph
    negative: float
    positive: float
    flow_for: Callable[[tuple], np.ndarray] | None = None

    @property
    def complexity(self) -> float:
        return math.sqrt(self.negative * self.positive)


class ReducedGraph:
    def __init__(self, n: int, m: int = 2, k: int = 1):
        if k < 1:
            raise ValidationError("a reduced graph needs at least one stage")
        self.n = n
        self.m = m
        self.k = k
        self.vertices: list[LVertex] = [LVertex(frozenset())]
        self.layer_of: list[int] = [0]
        self.layers: list[list[int]] = [[0]] + [[] for _ in range(k)]
        self.transitions: list[Transition] = []
        self.subroutines: dict[int, Subroutine] = {}
        self._index: dict[tuple, int] = {(frozenset(), None): 0}
        self._out: list[list[int]] = [[]]
        self._in: list[list[int]] = [[]]

    def add_vertex(self, layer: int, loaded: Iterable[int], label: Hashable | None = None) -> int:
        if not 1 <= layer <= self.k:
            raise ValidationError(f"layer {layer} outside 1..{self.k}")
        loaded = frozenset(loaded)
        if (loaded, label) in self._index:
            raise ValidationError(f"duplicate vertex {LVertex(loaded, label)!r}")
        vid = len(self.vertices)
        self._index[(loaded, label)] = vid
        self.vertices.append(LVertex(loaded, label))
        self.layer_of.append(layer)
        self.layers[layer].append(vid)
        self._out.append([])
        self._in.append([])
        return vid

    def vertex_id(self, loaded: Iterable[int], label: Hashable | None = None) -> int:
        return self._index[(frozenset(loaded), label)]

    def find_vertex(self, loaded: Iterable[int], label: Hashable | None = None) -> int | None:
        return self._index.get((frozenset(loaded), label))

    def add_transition(self, src: int, dst: int, weight=1) -> int:
        stage = self.layer_of[dst]
        if self.layer_of[src] != stage - 1:
            raise ValidationError(
                f"transition {src}->{dst} must join consecutive layers "
                f"(got {self.layer_of[src]} -> {stage})"
            )
        a, b = self.vertices[src].loaded, self.vertices[dst].loaded
        if not a <= b:
            raise ValidationError(f"transition {src}->{dst} does not grow the loaded set")
        if not weight > 0:
            raise ValidationError(f"transition weight must be positive, got {weight}")
        self.transitions.append(Transition(src, dst, stage, weight, len(b - a)))
        idx = len(self.transitions) - 1
        self._out[src].append(idx)
        self._in[dst].append(idx)
        return idx

    def attach(self, vertex: int, sub: Subroutine) -> None:
        if self.layer_of[vertex] != self.k:
            raise ValidationError("subroutines attach to vertices of the last layer only")
        if vertex in self.subroutines:
            raise ValidationError(f"vertex {vertex} already has a subroutine")
        clash = [
            v for v in sub.graph.vertices if v.loaded & self.vertices[vertex].loaded
        ]
        if clash:
            raise ValidationError(f"subroutine at {vertex} reloads variables {clash[0]!r}")
        self.subroutines[vertex] = sub

    def out_transitions(self, v: int) -> list[int]:
        return self._out[v]

    def in_transitions(self, v: int) -> list[int]:
        return self._in[v]

    def stage(self, i: int) -> list[int]:
        return [t for t, tr in enumerate(self.transitions) if tr.stage == i]

    def to_json(self) -> dict:
        verts = []
        for v, layer in zip(self.vertices, self.layer_of):
            d = {"loaded": sorted(v.loaded), "layer": layer}
            if v.label is not None:
                d["label"] = v.label if isinstance(v.label, str) else str(v.label)
            verts.append(d)
        return {
            "n": self.n,
            "m": self.m,
            "stages": self.k,
            "vertices": verts,
            "transitions": [
                {"from": t.src, "to": t.dst, "stage": t.stage, "length": t.length,
                 "weight": float(t.weight)}
                for t in self.transitions
            ],
        }

    def __repr__(self) -> str:
        sizes = "/".join(str(len(layer)) for layer in self.layers)
        return f"ReducedGraph(n={self.n}, k={self.k}, layers={sizes}, transitions={len(self.transitions)})"


@dataclass
class ReducedFlow:
    """Flow values on the transitions of a reduced graph for one marking."""

    graph: ReducedGraph
    values: list
    marking: tuple | None = None
    sinks: frozenset | None = None

    def sink_set(self) -> frozenset:
        return self.sinks if self.sinks is not None else frozenset(self.graph.layers[-1])

    def vertex_flow(self, v: int):
        """Flow through vertex ``v`` (its in-flow; 1 at the root)."""
        if v == 0:
            return 1
        return sum(self.values[t] for t in self.graph.in_transitions(v))


def check_reduced_conservation(fl: ReducedFlow, tol: float = 0.0) -> None:
    """Raise on a source intensity other than 1 or on a leak.

    With ``tol=0`` the comparison is exact, which is what rational flows
    from the catalog are held to.
    """
    rg = fl.graph
    if len(fl.values) != len(rg.transitions):
        raise ConservationError("flow vector length differs from transition count")
    out0 = sum(fl.values[t] for t in rg.out_transitions(0))
    if abs(out0 - 1) > tol:
        raise ConservationError(f"root intensity {out0}, expected 1", 0, out0)
    sinks = fl.sink_set()
    for v in range(1, len(rg.vertices)):
        if v in sinks:
            continue
        inflow = sum(fl.values[t] for t in rg.in_transitions(v))
        outflow = sum(fl.values[t] for t in rg.out_transitions(v))
        if abs(inflow - outflow) > tol:
            raise ConservationError(
                f"leak at vertex {v} ({rg.vertices[v]!r}): in {inflow}, out {outflow}",
                v,
                inflow - outflow,
            )


def stage_terms(rg: ReducedGraph, i: int, fl: ReducedFlow):
    """Exact ``(N_i, P_i)`` for stage ``i`` under flow ``fl``."""
    neg = 0
    pos = 0
    for t in rg.stage(i):
        tr = rg.transitions[t]
        neg += tr.length * tr.weight
        p = fl.values[t]
        if p:
            pos += tr.length * p * p / tr.weight
    return neg, pos


def stage_complexity(rg: ReducedGraph, i: int, flows: Iterable[ReducedFlow]) -> float:
    """``max_x sqrt(N_i * P_i(x))`` over the given per-input flows."""
    best = 0.0
    for fl in flows:
        check_reduced_conservation(fl, tol=1e-9)
        neg, pos = stage_terms(rg, i, fl)
        best = max(best, math.sqrt(neg * pos))
    return best


@dataclass
class Expansion:
    graph: LGraph
    arcs_of: list[list[int]]
    vertex_map: list[int]
    stage_norms: dict[int, object]
    flows: list[Flow] = field(default_factory=list)


def expand(rg: ReducedGraph, flows: Sequence[ReducedFlow] = (), rescale: bool = True) -> Expansion:
    """Turn every transition into a path of single-variable arcs.

    Path-internal vertices are private to their transition and labelled
    ``("path", transition, step)``.  Length-0 transitions only relabel a
    vertex, so their endpoints are identified.  With ``rescale`` the arc
    weights of stage ``i`` are divided by ``N_i``, making the negative
    complexity equal to the number of stages with ``N_i > 0``.  Subroutine
    graphs are grafted onto their vertices with their own weights.
    """
    parent = list(range(len(rg.vertices)))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for tr in rg.transitions:
        if tr.length == 0:
            a, b = find(tr.src), find(tr.dst)
            if a != b:
                parent[max(a, b)] = min(a, b)

    norms: dict[int, object] = {}
    for tr in rg.transitions:
        norms[tr.stage] = norms.get(tr.stage, 0) + tr.length * tr.weight

    g = LGraph(rg.n, rg.m)
    vmap = [0] * len(rg.vertices)
    for v in range(1, len(rg.vertices)):
        if find(v) == v:
            vert = rg.vertices[v]
            vmap[v] = g.add_vertex(vert.loaded, vert.label)
    for v in range(len(rg.vertices)):
        vmap[v] = vmap[find(v)]

    arcs_of: list[list[int]] = []
    for t, tr in enumerate(rg.transitions):
        path = []
        if tr.length:
            w = tr.weight / norms[tr.stage] if rescale else tr.weight
            src = rg.vertices[tr.src].loaded
            order = sorted(rg.vertices[tr.dst].loaded - src)
            prev = vmap[tr.src]
            for step, var in enumerate(order[:-1], start=1):
                nxt = g.add_vertex(src | set(order[:step]), ("path", t, step))
                path.append(g.add_arc(prev, nxt, w))
                prev = nxt
            path.append(g.add_arc(prev, vmap[tr.dst], w))
        arcs_of.append(path)

    sub_arcs: dict[int, list[int]] = {}
    for v, sub in sorted(rg.subroutines.items()):
        base = rg.vertices[v].loaded
        hmap = {sub.graph.root: vmap[v]}
        for h, hv in enumerate(sub.graph.vertices):
            if h != sub.graph.root:
                hmap[h] = g.add_vertex(base | hv.loaded, ("sub", v, h))
        sub_arcs[v] = [g.add_arc(hmap[a.src], hmap[a.dst], a.weight) for a in sub.graph.arcs]

    out_flows = []
    for fl in flows:
        values = np.zeros(len(g.arcs))
        for t, path in enumerate(arcs_of):
            for e in path:
                values[e] = float(fl.values[t])
        sinks: set = {vmap[v] for v in fl.sink_set()}
        if rg.subroutines:
            sinks = set()
            for v, sub in rg.subroutines.items():
                delta = float(fl.vertex_flow(v))
                if delta and sub.flow_for is not None:
                    sub_flow = sub.flow_for(fl.marking)
                    for e, p in zip(sub_arcs[v], sub_flow):
                        values[e] += delta * p
                    base = rg.vertices[v].loaded
                    sinks |= {
                        g.vertex_id(base | sub.graph.vertices[h].loaded, ("sub", v, h))
                        for h in _flow_sinks(sub.graph, sub_flow)
                    }
        out_flows.append(Flow(g, values, frozenset(sinks), fl.marking))

    return Expansion(g, arcs_of, vmap, norms, out_flows)


# -- symmetry ---------------------------------------------------------------


def _compose(p: tuple, q: tuple) -> tuple:
    return tuple(p[i] for i in q)


@dataclass
class SymmetrySpec:
    """A permutation group on a base set plus its action on L-vertices.

    ``var_action(perm)`` gives the induced permutation of variable indices;
    ``label_action(perm, label)`` transforms vertex labels.
    """

    base_size: int
    generators: list[tuple]
    var_action: Callable[[tuple], tuple]
    label_action: Callable[[tuple, Hashable], Hashable] = lambda perm, label: label
    order: int | None = None

    def __post_init__(self):
        for g in self.generators:
            if sorted(g) != list(range(self.base_size)):
                raise ValidationError(f"generator {g} is not a permutation of {self.base_size} points")

    @classmethod
    def symmetric(cls, n: int, var_action=None, label_action=None) -> SymmetrySpec:
        gens = []
        if n >= 2:
            gens.append((1, 0) + tuple(range(2, n)))
        if n >= 3:
            gens.append(tuple(range(1, n)) + (0,))
        return cls(
            n,
            gens,
            var_action or (lambda perm: perm),
            label_action or (lambda perm, label: label),
            math.factorial(n),
        )

    def group_order(self, budget: int = DEFAULT_GROUP_BUDGET) -> int:
        if self.order is not None:
            if self.order > budget:
                raise BudgetExceededError("group order", self.order, budget)
            return self.order
        return len(self.elements(budget))

    def elements(self, budget: int = DEFAULT_GROUP_BUDGET) -> list[tuple]:
        ident = tuple(range(self.base_size))
        seen = {ident}
        queue = deque([ident])
        while queue:
            p = queue.popleft()
            for g in self.generators:
                q = _compose(g, p)
                if q not in seen:
                    seen.add(q)
                    if len(seen) > budget:
                        raise BudgetExceededError("group order", len(seen), budget)
                    queue.append(q)
        return sorted(seen)

    def random_element(self, rng: np.random.Generator) -> tuple:
        p = tuple(range(self.base_size))
        if not self.generators:
            return p
        for _ in range(4 * self.base_size + 4):
            p = _compose(self.generators[rng.integers(len(self.generators))], p)
        return p

    def image(self, perm: tuple, vertex: LVertex) -> tuple[frozenset, Hashable]:
        vp = self.var_action(perm)
        return frozenset(vp[i] for i in vertex.loaded), self.label_action(perm, vertex.label)

    def check_homomorphism(self, samples: int = 10, seed: int = 0) -> None:
        """Spot-check ``act(p o q) == act(p) o act(q)`` on random products."""
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            p, q = self.random_element(rng), self.random_element(rng)
            if self.var_action(_compose(p, q)) != _compose(self.var_action(p), self.var_action(q)):
                raise SymmetryError("induced variable action is not a homomorphism")


@dataclass
class OrbitReport:
    representative: int
    members: list[int]
    class_size: int
    valid_count: int
    speciality: Fraction | None

    def csv_row(self, describe: Callable[[int], str] = str) -> list:
        return [
            describe(self.representative),
            self.class_size,
            self.valid_count,
            "" if self.speciality is None else str(self.speciality),
        ]


def _vertex_image_id(rg: ReducedGraph, spec: SymmetrySpec, perm, v: int) -> int:
    loaded, label = spec.image(perm, rg.vertices[v])
    vid = rg.find_vertex(loaded, label)
    if vid is None:
        raise SymmetryError(f"graph not invariant: image of vertex {v} is missing")
    return vid


def orbit_partition(
    rg: ReducedGraph,
    spec: SymmetrySpec,
    valid: Callable[[int], bool],
    stage: int | None = None,
    layer: int | None = None,
    budget: int = DEFAULT_GROUP_BUDGET,
) -> list[OrbitReport]:
    """Orbits of stage transitions (or of one vertex layer) under the group.

    Orbits are the connected components of the generator action, so the
    group is never listed element by element; its order is still checked
    against ``budget``.  ``valid`` decides, for a fixed marking, which
    elements carry flow.
    """
    if (stage is None) == (layer is None):
        raise ValidationError("give exactly one of stage / layer")
    spec.group_order(budget)
    if stage is not None:
        items = rg.stage(stage)
        pair_index = {(rg.transitions[t].src, rg.transitions[t].dst): t for t in items}

        def move(perm, t):
            tr = rg.transitions[t]
            key = (_vertex_image_id(rg, spec, perm, tr.src), _vertex_image_id(rg, spec, perm, tr.dst))
            if key not in pair_index:
                raise SymmetryError(f"graph not invariant: image of transition {t} is missing")
            return pair_index[key]
    else:
        items = list(rg.layers[layer])

        def move(perm, v):
            return _vertex_image_id(rg, spec, perm, v)

    parent = {x: x for x in items}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for perm in spec.generators:
        for x in items:
            a, b = find(x), find(move(perm, x))
            if a != b:
                parent[max(a, b)] = min(a, b)

    classes: dict[int, list[int]] = {}
    for x in items:
        classes.setdefault(find(x), []).append(x)
    reports = []
    for rep in sorted(classes):
        members = classes[rep]
        nvalid = sum(1 for x in members if valid(x))
        tau = Fraction(len(members), nvalid) if nvalid else None
        reports.append(OrbitReport(rep, members, len(members), nvalid, tau))
    return reports


def orbits_csv(reports: Sequence[OrbitReport], describe: Callable[[int], str] = str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["class_repr", "class_size", "valid_count", "speciality"])
    for r in reports:
        writer.writerow(r.csv_row(describe))
    return buf.getvalue()


def symmetric_bound(L, T) -> float:
    """``L * sqrt(T)``."""
    return float(L) * math.sqrt(T)


@dataclass
class StageCertificate:
    stage: int
    L: Fraction
    T: Fraction
    bound: float
    exact: float
    orbits: list[OrbitReport]
    class_flow: dict[int, object]


def certify_symmetric_stage(
    rg: ReducedGraph,
    stage: int,
    spec: SymmetrySpec,
    flows: Sequence[ReducedFlow],
    valid: Callable[[int, tuple], bool],
    budget: int = DEFAULT_GROUP_BUDGET,
) -> StageCertificate:
    """Check the symmetry hypotheses on one stage and evaluate both sides of
    the ``L * sqrt(T)`` bound.

    Every flow must be supported exactly on the valid transitions for its
    marking, carry one common value per orbit, and see the same speciality
    per orbit.  ``exact`` is the stage complexity with transition weights
    set to the per-orbit flow value.
    """
    if not flows:
        raise ValidationError("at least one flow is required")
    reference = None
    class_flow: dict[int, object] = {}
    lengths = set()
    for fl in flows:
        reports = orbit_partition(rg, spec, lambda t, mk=fl.marking: valid(t, mk), stage=stage, budget=budget)
        if reference is None:
            reference = reports
        elif [(r.representative, r.speciality) for r in reports] != [
            (r.representative, r.speciality) for r in reference
        ]:
            raise SymmetryError(f"speciality depends on the input (marking {fl.marking})")
        for r in reports:
            flows_in = set()
            for t in r.members:
                p = fl.values[t]
                if valid(t, fl.marking):
                    flows_in.add(p)
                elif p:
                    raise SymmetryError(
                        f"invalid transition {t} carries flow {p} (marking {fl.marking})", r.representative
                    )
            if len(flows_in) > 1:
                raise SymmetryError(
                    f"unequal flows {sorted(flows_in)} inside orbit of {r.representative}", r.representative
                )
            if flows_in:
                (p,) = flows_in
                if class_flow.setdefault(r.representative, p) != p:
                    raise SymmetryError(
                        f"orbit flow of {r.representative} depends on the input", r.representative
                    )
        L = sum(rg.transitions[t].length * fl.values[t] for t in rg.stage(stage))
        lengths.add(Fraction(L) if not isinstance(L, float) else L)
    if len(lengths) != 1:
        raise SymmetryError(f"average length depends on the input: {sorted(lengths)}")
    (L,) = lengths
    carrying = [r for r in reference if class_flow.get(r.representative)]
    T = max((r.speciality for r in carrying), default=Fraction(0))

    fl = flows[0]
    neg = 0
    pos = 0
    for r in carrying:
        w = class_flow[r.representative]
        for t in r.members:
            length = rg.transitions[t].length
            neg += length * w
            p = fl.values[t]
            pos += length * p * p / w
    exact = math.sqrt(neg * pos)
    return StageCertificate(stage, L, T, symmetric_bound(L, T), exact, reference, class_flow)


@dataclass
class SubroutineBound:
    L: object
    T: Fraction
    bound: float
    exact: float
    orbits: list[OrbitReport]


def attach_subroutine(
    rg: ReducedGraph,
    spec: SymmetrySpec,
    flows: Sequence[ReducedFlow],
    valid_vertex: Callable[[int, tuple], bool],
    tol: float = 1e-9,
    budget: int = DEFAULT_GROUP_BUDGET,
) -> SubroutineBound:
    """``L * sqrt(T)`` for the subroutine stage on the last layer.

    Every attached subroutine must be balanced (negative = positive).  ``L``
    is the flow-weighted average subroutine complexity, ``T`` the largest
    speciality among flow-carrying vertex orbits of ``V_k``.  ``exact`` is
    the stage complexity after multiplying each subroutine's weights by the
    flow through a valid vertex of its orbit.
    """
    last = rg.layers[rg.k]
    for v in last:
        sub = rg.subroutines.get(v)
        if sub is None:
            raise ValidationError(f"vertex {v} of the last layer has no subroutine")
        if abs(sub.negative - sub.positive) > tol * max(1.0, abs(sub.negative)):
            raise UnbalancedSubroutineError(v, sub.negative, sub.positive)
    reference = None
    class_flow: dict[int, object] = {}
    Ls = set()
    for fl in flows:
        reports = orbit_partition(rg, spec, lambda v, mk=fl.marking: valid_vertex(v, mk), layer=rg.k, budget=budget)
        if reference is None:
            reference = reports
        elif [(r.representative, r.speciality) for r in reports] != [
            (r.representative, r.speciality) for r in reference
        ]:
            raise SymmetryError(f"vertex speciality depends on the input (marking {fl.marking})")
        for r in reports:
            vals = set()
            for v in r.members:
                p = fl.vertex_flow(v)
                if valid_vertex(v, fl.marking):
                    vals.add(p)
                elif p:
                    raise SymmetryError(f"invalid vertex {v} carries flow {p}", r.representative)
            if len(vals) > 1:
                raise SymmetryError(f"unequal vertex flows inside orbit of {r.representative}", r.representative)
            if vals:
                (p,) = vals
                if class_flow.setdefault(r.representative, p) != p:
                    raise SymmetryError(f"orbit flow of {r.representative} depends on the input", r.representative)
        Ls.add(round(sum(float(fl.vertex_flow(v)) * rg.subroutines[v].complexity for v in last), 12))
    if len(Ls) != 1:
        raise SymmetryError(f"average subroutine complexity depends on the input: {sorted(Ls)}")
    (L,) = Ls
    carrying = [r for r in reference if class_flow.get(r.representative)]
    T = max((r.speciality for r in carrying), default=Fraction(0))
    fl = flows[0]
    neg = 0.0
    pos = 0.0
    for r in carrying:
        w = float(class_flow[r.representative])
        for v in r.members:
            ell = rg.subroutines[v].complexity
            p = float(fl.vertex_flow(v))
            neg += ell * w
            pos += ell * p * p / w
    return SubroutineBound(L, T, symmetric_bound(L, T), math.sqrt(neg * pos), reference)


def scaled_subroutine_energy(sub: Subroutine, marking: tuple, delta: float) -> float:
    """Energy of the subroutine's flow for ``marking`` scaled by in-flow ``delta``.

    The scaled flow has source intensity ``delta``, so it is measured
    directly rather than through the unit-flow conservation check.
    """
    if sub.flow_for is None:
        raise ValidationError("subroutine has no flow")
    values = np.asarray(sub.flow_for(marking), dtype=float)
    unit = Flow(sub.graph, values, _flow_sinks(sub.graph, values))
    flow_complexity(unit)
    return float(np.sum((delta * unit.values) ** 2 / sub.graph.weights))


def _flow_sinks(g: LGraph, values) -> frozenset:
    exc = np.zeros(len(g.vertices))
    for p, a in zip(values, g.arcs):
        exc[a.dst] += p
        exc[a.src] -= p
    return frozenset(v for v in range(1, len(g.vertices)) if exc[v] > 1e-12)
