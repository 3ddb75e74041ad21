"""Span programs compiled from learning graphs, and their witness sizes.

Each vertex ``S`` of a Boolean learning graph contributes one orthonormal
coordinate ``t_sigma`` per assignment ``sigma: S -> {0,1}``.  The target is
``t_{}``; ``t_sigma`` is free whenever ``sigma`` is a 1-certificate; an arc
``S -> S+{j}`` of weight ``w`` contributes ``sqrt(w) (t_sigma - t_{sigma, j->b})``
labelled ``(j, b)`` for every ``sigma`` on ``S``.

Witness sizes follow the usual convention that free vectors cost nothing:
a positive witness is measured on its non-free coefficients only.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionCapError,
    MisclassifiedInputError,
    ValidationError,
    WitnessError,
)
from .lgraph import FunctionOracle, LGraph

DEFAULT_DIM_CAP = 2**16
RANK_TOL = 1e-7
ORTHO_TOL = 1e-8


@dataclass
class SpanProgram:
    """Target, free vectors and ``(variable, value)``-labelled vectors.

    Labelled vectors are stored as the columns of ``vectors`` with their
    labels in ``col_var`` / ``col_val``.
    """

    target: np.ndarray
    free: np.ndarray
    vectors: np.ndarray
    col_var: np.ndarray
    col_val: np.ndarray
    n: int
    basis: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        dim = len(self.target)
        if not np.any(self.target):
            raise ValidationError("target vector must be nonzero")
        if self.free.shape[0] != dim or self.vectors.shape[0] != dim:
            raise ValidationError("every vector must have length dim")

    @property
    def dim(self) -> int:
        return len(self.target)

    @property
    def groups(self) -> dict[tuple[int, int], np.ndarray]:
        out = {}
        for j in range(self.n):
            for b in (0, 1):
                sel = (self.col_var == j) & (self.col_val == b)
                if sel.any():
                    out[(j, b)] = self.vectors[:, sel]
        return out

    def available(self, x: Sequence[int]) -> np.ndarray:
        """Boolean mask over labelled columns that input ``x`` makes available."""
        x = np.asarray(x)
        if len(x) != self.n:
            raise ValidationError(f"input length {len(x)} differs from n={self.n}")
        return x[self.col_var] == self.col_val

    def _projected(self):
        """Orthonormal basis of span(free) and everything projected off it."""
        if "proj" not in self._cache:
            if self.free.shape[1]:
                u, s, _ = np.linalg.svd(self.free, full_matrices=False)
                qf = u[:, s > RANK_TOL * max(1.0, s.max())]
            else:
                qf = np.zeros((self.dim, 0))
            vp = self.vectors - qf @ (qf.T @ self.vectors)
            tp = self.target - qf @ (qf.T @ self.target)
            self._cache["proj"] = (qf, vp, tp)
        return self._cache["proj"]

    def to_json(self) -> dict:
        groups = {
            f"{j},{b}": [list(map(float, col)) for col in mat.T]
            for (j, b), mat in sorted(self.groups.items())
        }
        return {
            "dim": self.dim,
            "target": list(map(float, self.target)),
            "free": [list(map(float, col)) for col in self.free.T],
            "groups": groups,
        }

    @classmethod
    def from_json(cls, doc: dict) -> SpanProgram:
        dim = doc["dim"]
        target = np.asarray(doc["target"], dtype=float)
        free = np.asarray(doc["free"], dtype=float).reshape(-1, dim).T
        cols, var, val = [], [], []
        for key, vecs in doc["groups"].items():
            j, b = (int(part) for part in key.split(","))
            for vec in vecs:
                cols.append(vec)
                var.append(j)
                val.append(b)
        vectors = np.asarray(cols, dtype=float).reshape(-1, dim).T
        n = max(var, default=-1) + 1
        return cls(target, free, vectors, np.asarray(var, dtype=int), np.asarray(val, dtype=int), n)


@dataclass
class Witness:
    kind: str
    coefficients: np.ndarray
    size: float
    residual: float
    free_coefficients: np.ndarray | None = None

    def to_json(self) -> dict:
        return {"kind": self.kind, "size": float(self.size), "residual": float(self.residual)}


def span_dimension(g: LGraph) -> int:
    return sum(2 ** len(v.loaded) for v in g.vertices)


def compile_boolean(g: LGraph, f: FunctionOracle, dim_cap: int = DEFAULT_DIM_CAP) -> SpanProgram:
    """Span program of a Boolean learning graph computing ``f``."""
    if g.m != 2 or f.m != 2:
        raise ValidationError("compile_boolean needs m = 2; apply multiplexor_expand first")
    if f.n != g.n:
        raise ValidationError(f"oracle has {f.n} variables, graph has {g.n}")
    dim = span_dimension(g)
    if dim > dim_cap:
        raise DimensionCapError(dim, dim_cap)

    offset = []
    basis = []
    for vid, v in enumerate(g.vertices):
        offset.append(len(basis))
        order = sorted(v.loaded)
        for sigma in itertools.product((0, 1), repeat=len(order)):
            basis.append((vid, sigma))

    def coord(vid: int, assignment: dict) -> int:
        order = sorted(g.vertices[vid].loaded)
        pos = 0
        for var in order:
            pos = 2 * pos + assignment[var]
        return offset[vid] + pos

    target = np.zeros(dim)
    target[0] = 1.0

    free_idx = []
    for vid, v in enumerate(g.vertices):
        order = sorted(v.loaded)
        for sigma in itertools.product((0, 1), repeat=len(order)):
            x = [0] * g.n
            for var, bit in zip(order, sigma):
                x[var] = bit
            if f.is_certificate(x, v.loaded):
                free_idx.append(coord(vid, dict(zip(order, sigma))))
    free = np.zeros((dim, len(free_idx)))
    free[free_idx, np.arange(len(free_idx))] = 1.0

    ncols = sum(2 * 2 ** len(g.vertices[a.src].loaded) for a in g.arcs)
    vectors = np.zeros((dim, ncols))
    col_var = np.zeros(ncols, dtype=int)
    col_val = np.zeros(ncols, dtype=int)
    col = 0
    for a in g.arcs:
        root_w = math.sqrt(float(a.weight))
        order = sorted(g.vertices[a.src].loaded)
        for sigma in itertools.product((0, 1), repeat=len(order)):
            assignment = dict(zip(order, sigma))
            here = coord(a.src, assignment)
            for b in (0, 1):
                assignment[a.loads] = b
                vectors[here, col] = root_w
                vectors[coord(a.dst, assignment), col] = -root_w
                col_var[col] = a.loads
                col_val[col] = b
                col += 1
            del assignment[a.loads]
    return SpanProgram(target, free, vectors, col_var, col_val, g.n, basis)


# -- multiplexor ---------------------------------------------------------------


def bits_per_symbol(m: int) -> int:
    return max(1, math.ceil(math.log2(m)))


def encode_input(x: Sequence[int], m: int) -> tuple:
    """Little-endian binary code of each symbol, concatenated."""
    k = bits_per_symbol(m)
    return tuple((v >> t) & 1 for v in x for t in range(k))


def decode_input(y: Sequence[int], m: int) -> tuple:
    k = bits_per_symbol(m)
    return tuple(sum(y[j * k + t] << t for t in range(k)) for j in range(len(y) // k))


def encode_oracle(f: FunctionOracle) -> FunctionOracle:
    """Boolean version of ``f`` on ``n * ceil(log2 m)`` bits.

    Inputs containing an unused code point evaluate to 0 and lie outside the
    domain, so certificates and exhaustive checks only range over encodings
    of genuine inputs.
    """
    m = f.m

    def valid(y):
        x = decode_input(y, m)
        return all(v < m for v in x) and f.in_domain(x)

    def value(y):
        x = decode_input(y, m)
        return f(x) if all(v < m for v in x) else 0

    k = bits_per_symbol(m)
    return FunctionOracle(f.n * k, 2, value, valid, name=f"{f.name}/bits", budget=f.budget)


def multiplexor_expand(g: LGraph, m: int | None = None) -> LGraph:
    """Replace each ``m``-ary variable by ``k = ceil(log2 m)`` bits.

    Vertex ``v`` keeps its id and label with loaded set ``U_{j in S} B_j``;
    arc ``e`` becomes arcs ``k*e .. k*e + k - 1`` (a path loading the bits of
    its variable in increasing order), each with the original weight.
    """
    m = g.m if m is None else m
    if m <= 2:
        raise ValidationError("multiplexor expansion needs m > 2")
    k = bits_per_symbol(m)

    def block(j):
        return [j * k + t for t in range(k)]

    out = LGraph(g.n * k, 2)
    for v in g.vertices[1:]:
        out.add_vertex({b for j in v.loaded for b in block(j)}, v.label)
    for e, a in enumerate(g.arcs):
        base = set(out.vertices[a.src].loaded)
        prev = a.src
        bits = block(a.loads)
        for step, bit in enumerate(bits[:-1], start=1):
            base.add(bit)
            nxt = out.add_vertex(base, ("mux", e, step))
            out.add_arc(prev, nxt, a.weight)
            prev = nxt
        out.add_arc(prev, a.dst, a.weight)
    return out


# -- evaluation and witnesses ----------------------------------------------------


def _positive_solve(P: SpanProgram, mask: np.ndarray):
    _, vp, tp = P._projected()
    ax = vp[:, mask]
    if ax.shape[1] == 0:
        return np.zeros(0), tp.copy()
    w, *_ = np.linalg.lstsq(ax, tp, rcond=None)
    return w, tp - ax @ w


def evaluate(P: SpanProgram, x: Sequence[int], tol: float = RANK_TOL) -> int:
    """1 iff the target lies in the span of the vectors available under ``x``."""
    _, residual = _positive_solve(P, P.available(x))
    return int(np.linalg.norm(residual) <= tol * np.linalg.norm(P.target))


def positive_witness(P: SpanProgram, x: Sequence[int], tol: float = RANK_TOL) -> Witness:
    """Least-size combination of available vectors reaching the target."""
    mask = P.available(x)
    w, residual = _positive_solve(P, mask)
    if np.linalg.norm(residual) > tol * np.linalg.norm(P.target):
        raise WitnessError(f"no positive witness: program rejects {tuple(x)}")
    rest = P.target - P.vectors[:, mask] @ w
    free_coef = np.linalg.lstsq(P.free, rest, rcond=None)[0] if P.free.shape[1] else np.zeros(0)
    check = P.vectors[:, mask] @ w + P.free @ free_coef - P.target
    return Witness("positive", w, float(w @ w), float(np.linalg.norm(check)), free_coef)


def negative_witness(P: SpanProgram, x: Sequence[int], tol: float = RANK_TOL) -> Witness:
    """Least-size ``w'`` with ``<w', t> = 1`` orthogonal to every available vector.

    The search runs over the orthogonal complement of the available span;
    there the objective ``||A_false^T w'||^2`` under one linear constraint
    has minimum ``1 / (c^T G^+ c)``.
    """
    mask = P.available(x)
    qf, vp, _ = P._projected()
    ax = vp[:, mask]
    if ax.shape[1]:
        u, s, _ = np.linalg.svd(ax, full_matrices=False)
        ur = u[:, s > RANK_TOL * max(1.0, s.max())]
    else:
        ur = np.zeros((P.dim, 0))
    # orthonormal basis of span(free)^perp ∩ range(ax)^perp
    full = np.hstack([qf, ur])
    q, _ = np.linalg.qr(full, mode="complete") if full.shape[1] else (np.eye(P.dim), None)
    z = q[:, full.shape[1]:]
    c = z.T @ P.target
    if np.linalg.norm(c) <= tol * np.linalg.norm(P.target):
        raise WitnessError(f"no negative witness: program accepts {tuple(x)}")
    b = P.vectors[:, ~mask].T @ z
    gram = b.T @ b
    evals, evecs = np.linalg.eigh(gram)
    cutoff = RANK_TOL * max(1.0, evals.max(initial=0.0))
    proj = evecs.T @ c
    null_part = evecs[:, evals <= cutoff] @ proj[evals <= cutoff]
    if np.linalg.norm(null_part) > tol:
        y = null_part / (c @ null_part)
    else:
        keep = evals > cutoff
        y = evecs[:, keep] @ (proj[keep] / evals[keep])
        y = y / (c @ y)
    wp = z @ y
    size = float(np.sum((P.vectors.T @ wp) ** 2))
    ortho = max(
        abs(float(wp @ P.target) - 1.0),
        float(np.abs(P.vectors[:, mask].T @ wp).max(initial=0.0)),
        float(np.abs(P.free.T @ wp).max(initial=0.0)),
    )
    return Witness("negative", wp, size, ortho)


def witness(P: SpanProgram, x: Sequence[int]) -> Witness:
    if evaluate(P, x):
        return positive_witness(P, x)
    return negative_witness(P, x)


@dataclass
class WitnessSizeReport:
    wsize: float
    wsize0: float
    wsize1: float
    worst0: tuple
    worst1: tuple
    per_input: dict = field(default_factory=dict, repr=False)


def wsize(P: SpanProgram, domain: Iterable[tuple[Sequence[int], int]]) -> WitnessSizeReport:
    """Witness size over labelled inputs ``(x, f(x))``."""
    best = {0: (-1.0, None), 1: (-1.0, None)}
    per_input = {}
    for x, label in domain:
        x = tuple(x)
        got = evaluate(P, x)
        if got != label:
            raise MisclassifiedInputError(x, label, got)
        wit = positive_witness(P, x) if label else negative_witness(P, x)
        per_input[x] = wit.size
        if wit.size > best[label][0]:
            best[label] = (wit.size, x)
    if best[0][1] is None or best[1][1] is None:
        raise ValidationError("witness size needs at least one input of each value")
    w0, w1 = best[0][0], best[1][0]
    return WitnessSizeReport(math.sqrt(w0 * w1), w0, w1, best[0][1], best[1][1], per_input)
