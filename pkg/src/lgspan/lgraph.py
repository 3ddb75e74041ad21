"""Learning graphs, flows on them, and their exact complexities.

A learning graph is a DAG whose vertices are subsets of the input variables
(optionally tagged with a label so that several vertices may share a subset)
and whose arcs each load one variable.  The negative complexity is the total
arc weight; the positive complexity for an input is the least energy
``sum(p_e**2 / w_e)`` of a unit flow from the empty set into the accepting
vertices, which is an electrical-network problem.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict, deque
from collections.abc import Callable, Hashable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    BudgetExceededError,
    ConservationError,
    GraphDoesNotComputeError,
    InfeasibleFlowError,
    StructuralError,
    ValidationError,
)

DEFAULT_BRUTE_FORCE_BUDGET = 2**20
CONSERVATION_TOL = 1e-9
POTENTIAL_TOL = 1e-8


@dataclass(frozen=True)
class LVertex:
    loaded: frozenset
    label: Hashable | None = None

    def __repr__(self) -> str:
        body = "{" + ",".join(map(str, sorted(self.loaded))) + "}"
        return f"LVertex({body})" if self.label is None else f"LVertex({body}, {self.label!r})"


@dataclass(frozen=True)
class Arc:
    src: int
    dst: int
    loads: int
    weight: float


class LGraph:
    """A learning graph on variables ``0..n-1`` over alphabet ``[m]``.

    Vertex 0 is always the root ``(frozenset(), None)``.  Build the graph with
    :meth:`add_vertex` / :meth:`add_arc` and treat it as read-only afterwards.
    """

    root = 0

    def __init__(self, n: int, m: int = 2):
        if n < 0:
            raise ValidationError(f"variable count must be nonnegative, got {n}")
        if m < 2:
            raise ValidationError(f"alphabet size must be at least 2, got {m}")
        self.n = n
        self.m = m
        self.vertices: list[LVertex] = [LVertex(frozenset())]
        self.arcs: list[Arc] = []
        self._index: dict[tuple[frozenset, Hashable], int] = {(frozenset(), None): 0}
        self._out: list[list[int]] = [[]]
        self._in: list[list[int]] = [[]]

    # -- construction -------------------------------------------------------

    def add_vertex(self, loaded: Iterable[int], label: Hashable | None = None) -> int:
        loaded = frozenset(loaded)
        key = (loaded, label)
        if key in self._index:
            raise ValidationError(f"duplicate vertex {LVertex(loaded, label)!r}")
        bad = [v for v in loaded if not 0 <= v < self.n]
        if bad:
            raise ValidationError(f"variable indices {bad} outside [0, {self.n})")
        self._index[key] = len(self.vertices)
        self.vertices.append(LVertex(loaded, label))
        self._out.append([])
        self._in.append([])
        return len(self.vertices) - 1

    def ensure_vertex(self, loaded: Iterable[int], label: Hashable | None = None) -> int:
        loaded = frozenset(loaded)
        vid = self._index.get((loaded, label))
        return self.add_vertex(loaded, label) if vid is None else vid

    def vertex_id(self, loaded: Iterable[int], label: Hashable | None = None) -> int:
        try:
            return self._index[(frozenset(loaded), label)]
        except KeyError:
            raise KeyError(f"no vertex {LVertex(frozenset(loaded), label)!r}") from None

    def add_arc(self, src: int, dst: int, weight: float = 1) -> int:
        if not (0 <= src < len(self.vertices) and 0 <= dst < len(self.vertices)):
            raise ValidationError(f"arc endpoints ({src}, {dst}) out of range")
        if not weight > 0:
            raise ValidationError(f"arc weight must be positive, got {weight}")
        a, b = self.vertices[src].loaded, self.vertices[dst].loaded
        diff = b - a
        if not a < b or len(diff) != 1:
            raise ValidationError(
                f"arc {src}->{dst} must load exactly one new variable "
                f"({sorted(a)} -> {sorted(b)})"
            )
        (loads,) = diff
        self.arcs.append(Arc(src, dst, loads, weight))
        idx = len(self.arcs) - 1
        self._out[src].append(idx)
        self._in[dst].append(idx)
        return idx

    # -- queries -------------------------------------------------------------

    def out_arcs(self, v: int) -> list[int]:
        return self._out[v]

    def in_arcs(self, v: int) -> list[int]:
        return self._in[v]

    @property
    def weights(self) -> np.ndarray:
        return np.array([float(a.weight) for a in self.arcs])

    def reachable(self) -> set[int]:
        seen = {self.root}
        queue = deque([self.root])
        while queue:
            v = queue.popleft()
            for e in self._out[v]:
                w = self.arcs[e].dst
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return seen

    def validate(self) -> None:
        """Raise unless every vertex is reachable from the root."""
        missing = set(range(len(self.vertices))) - self.reachable()
        if missing:
            raise ValidationError(f"vertices {sorted(missing)} unreachable from the root")

    def reweighted(self, weights: Sequence[float]) -> LGraph:
        if len(weights) != len(self.arcs):
            raise ValidationError("weight vector length differs from arc count")
        g = LGraph(self.n, self.m)
        for v in self.vertices[1:]:
            g.add_vertex(v.loaded, v.label)
        for a, w in zip(self.arcs, weights):
            g.add_arc(a.src, a.dst, w)
        return g

    def scaled(self, c: float) -> LGraph:
        return self.reweighted([a.weight * c for a in self.arcs])

    def __repr__(self) -> str:
        return f"LGraph(n={self.n}, m={self.m}, vertices={len(self.vertices)}, arcs={len(self.arcs)})"

    # -- serialization -------------------------------------------------------

    def to_json(self) -> dict:
        verts = []
        for v in self.vertices:
            d = {"loaded": sorted(v.loaded)}
            if v.label is not None:
                d["label"] = v.label if isinstance(v.label, str) else str(v.label)
            verts.append(d)
        arcs = [
            {"from": a.src, "to": a.dst, "loads": a.loads, "weight": float(a.weight)}
            for a in self.arcs
        ]
        return {"n": self.n, "m": self.m, "vertices": verts, "arcs": arcs}

    @classmethod
    def from_json(cls, doc: dict) -> LGraph:
        g = cls(doc["n"], doc["m"])
        verts = doc["vertices"]
        if not verts or verts[0].get("loaded") or verts[0].get("label") is not None:
            raise ValidationError("vertices[0] must be the unlabeled empty root")
        for i, v in enumerate(verts[1:], start=1):
            try:
                g.add_vertex(v["loaded"], v.get("label"))
            except ValidationError as exc:
                raise ValidationError(f"vertices[{i}]: {exc}") from None
        for i, a in enumerate(doc["arcs"]):
            try:
                idx = g.add_arc(a["from"], a["to"], a["weight"])
            except ValidationError as exc:
                raise ValidationError(f"arcs[{i}]: {exc}") from None
            if "loads" in a and a["loads"] != g.arcs[idx].loads:
                raise ValidationError(
                    f"arcs[{i}].loads: declared {a['loads']}, endpoints imply {g.arcs[idx].loads}"
                )
        g.validate()
        return g


class FunctionOracle:
    """A (possibly partial) function ``[m]^n -> {0,1}``.

    ``domain`` restricts the inputs considered: certificates only need to
    force the value on agreeing inputs inside the domain.  The full truth
    table is materialized lazily and refused above ``budget`` entries.
    """

    def __init__(
        self,
        n: int,
        m: int,
        evaluator: Callable[[tuple], int],
        domain: Callable[[tuple], bool] | None = None,
        name: str = "f",
        budget: int = DEFAULT_BRUTE_FORCE_BUDGET,
    ):
        self.n = n
        self.m = m
        self.evaluator = evaluator
        self.domain = domain
        self.name = name
        self.budget = budget
        self._table: np.ndarray | None = None
        self._mask: np.ndarray | None = None
        self._cert_cache: dict = {}

    def __call__(self, x: Sequence[int]) -> int:
        return int(self.evaluator(tuple(x)))

    def in_domain(self, x: Sequence[int]) -> bool:
        return True if self.domain is None else bool(self.domain(tuple(x)))

    def _materialize(self) -> None:
        if self._table is not None:
            return
        size = self.m**self.n
        if size > self.budget:
            raise BudgetExceededError(f"{self.name}: brute-force inputs m^n", size, self.budget)
        shape = (self.m,) * self.n
        table = np.zeros(shape, dtype=bool)
        mask = np.ones(shape, dtype=bool)
        for x in itertools.product(range(self.m), repeat=self.n):
            if self.in_domain(x):
                table[x] = bool(self.evaluator(x))
            else:
                mask[x] = False
        self._table, self._mask = table, mask

    def inputs(self) -> Iterator[tuple]:
        """All inputs of the domain in lexicographic order."""
        self._materialize()
        for x in itertools.product(range(self.m), repeat=self.n):
            if self._mask[x]:
                yield x

    def ones(self) -> Iterator[tuple]:
        self._materialize()
        for x in self.inputs():
            if self._table[x]:
                yield x

    def zeros(self) -> Iterator[tuple]:
        self._materialize()
        for x in self.inputs():
            if not self._table[x]:
                yield x

    def is_certificate(self, x: Sequence[int], support: Iterable[int]) -> bool:
        """True iff ``x`` restricted to ``support`` forces value 1 on the domain."""
        self._materialize()
        support = frozenset(support)
        key = (support, tuple(x[i] for i in sorted(support)))
        hit = self._cert_cache.get(key)
        if hit is None:
            index = tuple(x[i] if i in support else slice(None) for i in range(self.n))
            hit = bool(np.all(self._table[index] | ~self._mask[index]))
            self._cert_cache[key] = hit
        return hit


@dataclass
class Flow:
    """Per-arc flow values for one input, with its declared sinks."""

    graph: LGraph
    values: np.ndarray
    sinks: frozenset
    x: tuple | None = None
    potentials: np.ndarray | None = None

    def vertex_excess(self) -> np.ndarray:
        """In-flow minus out-flow at every vertex."""
        exc = np.zeros(len(self.graph.vertices))
        for p, a in zip(self.values, self.graph.arcs):
            exc[a.dst] += p
            exc[a.src] -= p
        return exc

    def to_json(self) -> dict:
        return {
            "x": None if self.x is None else list(self.x),
            "flow": {str(i): float(p) for i, p in enumerate(self.values)},
        }


@dataclass
class Complexity:
    negative: float
    positive: float
    total: float
    worst_input: tuple | None = None
    per_input: dict = field(default_factory=dict, repr=False)


def neg_complexity(g: LGraph):
    """Total arc weight."""
    return sum(a.weight for a in g.arcs)


def accepting_vertices(g: LGraph, f: FunctionOracle, x: Sequence[int]) -> frozenset:
    """Ids of vertices whose loaded set carries a 1-certificate for ``x``."""
    if (f.n, f.m) != (g.n, g.m):
        raise ValidationError(f"oracle shape {(f.n, f.m)} differs from graph {(g.n, g.m)}")
    if f(x) != 1:
        raise ValidationError(f"f({tuple(x)}) = 0: accepting vertices are undefined")
    return frozenset(
        i for i, v in enumerate(g.vertices) if f.is_certificate(x, v.loaded)
    )


def check_conservation(fl: Flow, tol: float = CONSERVATION_TOL) -> None:
    g = fl.graph
    if len(fl.values) != len(g.arcs):
        raise ConservationError("flow vector length differs from arc count")
    exc = fl.vertex_excess()
    if g.root in fl.sinks:
        return
    if abs(-exc[g.root] - 1.0) > tol:
        raise ConservationError(
            f"source intensity at the root is {-exc[g.root]}, expected 1", g.root, exc[g.root]
        )
    for v in range(1, len(g.vertices)):
        if v not in fl.sinks and abs(exc[v]) > tol:
            raise ConservationError(
                f"conservation violated at vertex {v} ({g.vertices[v]!r}): excess {exc[v]}",
                v,
                exc[v],
            )


def flow_complexity(fl: Flow, tol: float = CONSERVATION_TOL) -> float:
    check_conservation(fl, tol)
    return float(np.sum(np.asarray(fl.values, dtype=float) ** 2 / fl.graph.weights))


def _component(g: LGraph, start: int) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for e in itertools.chain(g.out_arcs(v), g.in_arcs(v)):
            a = g.arcs[e]
            w = a.dst if a.src == v else a.src
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen


def optimal_flow(g: LGraph, sinks: Iterable[int], x: tuple | None = None) -> tuple[Flow, float]:
    """Minimum-energy unit flow from the root into ``sinks``.

    All sinks are contracted into one node; the flow is the electrical
    current with conductance ``w_e`` per arc, and the energy equals the
    effective resistance between the root and the contracted sink.
    """
    sinks = frozenset(sinks)
    if not sinks:
        raise InfeasibleFlowError("no sinks given")
    zeros = np.zeros(len(g.arcs))
    if g.root in sinks:
        return Flow(g, zeros, sinks, x, np.zeros(len(g.vertices))), 0.0

    comp = _component(g, g.root)
    live_sinks = sinks & comp
    if not live_sinks:
        raise InfeasibleFlowError(f"sinks {sorted(sinks)} unreachable from the root")
    inner = sorted(comp - live_sinks)
    pos = {v: i for i, v in enumerate(inner)}
    size = len(inner)
    lap = np.zeros((size, size))
    for a in g.arcs:
        if a.src not in comp:
            continue
        w = float(a.weight)
        i, j = pos.get(a.src), pos.get(a.dst)
        if i is not None:
            lap[i, i] += w
        if j is not None:
            lap[j, j] += w
        if i is not None and j is not None:
            lap[i, j] -= w
            lap[j, i] -= w
    rhs = np.zeros(size)
    rhs[pos[g.root]] = 1.0
    try:
        lu = scipy.linalg.lu_factor(lap, check_finite=False)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise StructuralError(f"singular Laplacian: {exc}") from exc
    if np.any(np.abs(np.diag(lu[0])) < 1e-14 * max(1.0, np.abs(lap).max())):
        raise StructuralError("grounded Laplacian is singular")
    phi = scipy.linalg.lu_solve(lu, rhs)
    phi += scipy.linalg.lu_solve(lu, rhs - lap @ phi)

    potentials = np.zeros(len(g.vertices))
    for v, i in pos.items():
        potentials[v] = phi[i]
    values = np.array(
        [float(a.weight) * (potentials[a.src] - potentials[a.dst]) for a in g.arcs]
    )
    energy = float(phi[pos[g.root]])
    return Flow(g, values, sinks, x, potentials), energy


def potential_residual(fl: Flow) -> float:
    """Max deviation of ``p_e`` from ``w_e * (phi_src - phi_dst)``."""
    if fl.potentials is None:
        raise ValidationError("flow carries no potentials")
    phi = fl.potentials
    return max(
        (abs(p - float(a.weight) * (phi[a.src] - phi[a.dst])) for p, a in zip(fl.values, fl.graph.arcs)),
        default=0.0,
    )


def random_feasible_flow(
    g: LGraph,
    sinks: Iterable[int],
    rng: np.random.Generator,
    perturbation: float = 1.0,
) -> Flow:
    """A random unit flow into ``sinks``.

    A random nonnegative walk through the DAG is drawn first; a random
    element of the circulation space (signed flows with zero excess at
    every conserving vertex) scaled by ``perturbation`` is then added.
    Nothing here consults :func:`optimal_flow`.
    """
    sinks = frozenset(sinks)
    useful = set(sinks)
    changed = True
    while changed:
        changed = False
        for a in g.arcs:
            if a.dst in useful and a.src not in useful:
                useful.add(a.src)
                changed = True
    if g.root not in useful:
        raise InfeasibleFlowError("no directed path from the root to a sink")

    values = np.zeros(len(g.arcs))
    mass = np.zeros(len(g.vertices))
    mass[g.root] = 1.0
    for v in sorted(range(len(g.vertices)), key=lambda v: len(g.vertices[v].loaded)):
        if mass[v] == 0 or v not in useful:
            continue
        outs = [e for e in g.out_arcs(v) if g.arcs[e].dst in useful]
        keep = mass[v]
        if v in sinks:
            keep = 0.0 if not outs else mass[v] * rng.uniform()
        if not outs or keep == 0:
            continue
        share = rng.dirichlet(np.ones(len(outs)))
        for e, s in zip(outs, share):
            values[e] += keep * s
            mass[g.arcs[e].dst] += keep * s

    if perturbation:
        rows = [v for v in range(len(g.vertices)) if v not in sinks]
        cons = np.zeros((len(rows), len(g.arcs)))
        row_of = {v: i for i, v in enumerate(rows)}
        for j, a in enumerate(g.arcs):
            if a.dst in row_of:
                cons[row_of[a.dst], j] += 1
            if a.src in row_of:
                cons[row_of[a.src], j] -= 1
        null = scipy.linalg.null_space(cons) if cons.size else np.eye(len(g.arcs))
        if null.shape[1]:
            values = values + perturbation * null @ rng.normal(size=null.shape[1])
    return Flow(g, values, sinks)


def graph_complexity(g: LGraph, f: FunctionOracle) -> Complexity:
    """Negative, positive (worst 1-input) and total complexity of ``g`` for ``f``."""
    negative = float(neg_complexity(g))
    by_sinks: dict[frozenset, float] = {}
    per_input = {}
    positive, worst = -math.inf, None
    for x in f.ones():
        sinks = accepting_vertices(g, f, x)
        if not sinks:
            raise GraphDoesNotComputeError(x)
        energy = by_sinks.get(sinks)
        if energy is None:
            energy = by_sinks[sinks] = optimal_flow(g, sinks)[1]
        per_input[x] = energy
        if energy > positive:
            positive, worst = energy, x
    if worst is None:
        positive = 0.0
    return Complexity(negative, positive, math.sqrt(negative * positive), worst, per_input)


def merge_duplicates(g: LGraph) -> LGraph:
    """Collapse same-subset children of a common parent into one vertex.

    Each merge keeps the negative complexity and can only lower optimal
    flow energies: parallel arcs ``w_1..w_k`` become one arc of weight
    ``w_1 + ... + w_k``.  Repeats until no vertex has two children (or two
    parallel arcs) on the same loaded subset.
    """
    parent = list(range(len(g.vertices)))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    while True:
        groups: dict[tuple[int, frozenset], set[int]] = defaultdict(set)
        for a in g.arcs:
            s, d = find(a.src), find(a.dst)
            groups[(s, g.vertices[d].loaded)].add(d)
        merged = False
        for members in groups.values():
            if len(members) > 1:
                keep = min(members)
                for v in members:
                    parent[v] = keep
                merged = True
        if not merged:
            break

    reps = sorted({find(v) for v in range(len(g.vertices))})
    out = LGraph(g.n, g.m)
    new_id = {g.root: out.root}
    for v in reps:
        if v == g.root:
            continue
        vert = g.vertices[v]
        new_id[v] = out.add_vertex(vert.loaded, vert.label)
    weights: dict[tuple[int, int], float] = {}
    for a in g.arcs:
        key = (new_id[find(a.src)], new_id[find(a.dst)])
        weights[key] = weights.get(key, 0) + a.weight
    for (s, d), w in weights.items():
        out.add_arc(s, d, w)
    return out
