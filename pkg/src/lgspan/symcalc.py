"""Stage tables as sums of monomials, and exact min-max exponent optimization.

Every quantity is a power of ``n`` once the parameters are written as
``r = n^rho``, ``l = n^lambda``, ``s = n^sigma``.  A monomial's exponent is then
linear in ``theta = (rho, lambda, sigma)`` and the dominant term of a sum is the
largest exponent, so minimizing the sum asymptotically is a linear program.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction

from . import lp
from .errors import InfeasibleError, UnboundedError, ValidationError

SYMBOLS = ("n", "r", "l", "s")
PARAMS = ("r", "l", "s")
PARAM_NAMES = {"r": "rho", "l": "lambda", "s": "sigma"}


def to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValidationError(f"exponent {value!r} is not a number")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, (str, float)):
        try:
            return Fraction(str(value).strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"exponent {value!r} is not a rational") from exc
    raise ValidationError(f"exponent {value!r} is not a rational")


def fmt(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def power(value) -> str:
    """Exponent text; fractions and negatives are parenthesized."""
    text = fmt(value)
    return text if Fraction(value).denominator == 1 and value >= 0 else f"({text})"


@dataclass(frozen=True)
class Monomial:
    """``n^a r^b l^c s^d`` with exact rational exponents; constants dropped."""

    n: Fraction = Fraction(0)
    r: Fraction = Fraction(0)
    l: Fraction = Fraction(0)
    s: Fraction = Fraction(0)

    @classmethod
    def of(cls, mapping: Mapping | None = None, **kw) -> Monomial:
        data = dict(mapping or {}, **kw)
        unknown = set(data) - set(SYMBOLS)
        if unknown:
            raise ValidationError(f"unknown symbols {sorted(unknown)}; expected {SYMBOLS}")
        return cls(**{k: to_fraction(v) for k, v in data.items()})

    def exponents(self) -> dict[str, Fraction]:
        return {k: getattr(self, k) for k in SYMBOLS}

    def __mul__(self, other: Monomial) -> Monomial:
        return Monomial(*(getattr(self, k) + getattr(other, k) for k in SYMBOLS))

    def __pow__(self, q) -> Monomial:
        q = to_fraction(q)
        return Monomial(*(getattr(self, k) * q for k in SYMBOLS))

    def n_exponent(self, params: Mapping[str, Fraction]) -> Fraction:
        """Exponent of ``n`` after substituting ``r = n^params['r']`` etc."""
        total = self.n
        for p in PARAMS:
            e = getattr(self, p)
            if e:
                if p not in params:
                    raise ValidationError(f"no value for parameter {p}")
                total += e * to_fraction(params[p])
        return total

    def substitute(self, params: Mapping[str, Fraction]) -> Monomial:
        kept = {p: getattr(self, p) for p in PARAMS if p not in params}
        n = self.n + sum((getattr(self, p) * to_fraction(v) for p, v in params.items()), Fraction(0))
        return Monomial(n=n, **kept)

    def __str__(self) -> str:
        parts = []
        for k in SYMBOLS:
            e = getattr(self, k)
            if e == 1:
                parts.append(k)
            elif e:
                parts.append(f"{k}^{power(e)}")
        return "*".join(parts) if parts else "1"

    def to_json(self) -> dict:
        return {k: fmt(v) for k, v in self.exponents().items() if v}


@dataclass
class ComplexityExpr:
    """A sum of monomials; ``labels`` names the stage each term came from."""

    terms: list[Monomial]
    labels: list[str] = field(default_factory=list)
    specialities: list[Monomial] | None = None
    lengths: list[Monomial] | None = None

    def __post_init__(self):
        if not self.terms:
            raise ValidationError("complexity expression must have at least one term")
        if not self.labels:
            self.labels = [str(i + 1) for i in range(len(self.terms))]
        if len(self.labels) != len(self.terms):
            raise ValidationError("one label per term required")

    def params(self) -> list[str]:
        return [p for p in PARAMS if any(getattr(t, p) for t in self.terms)]

    def substitute(self, params: Mapping[str, Fraction]) -> ComplexityExpr:
        params = {k: to_fraction(v) for k, v in params.items() if v is not None}
        sub = lambda ms: None if ms is None else [m.substitute(params) for m in ms]
        return ComplexityExpr(
            [t.substitute(params) for t in self.terms], list(self.labels),
            sub(self.specialities), sub(self.lengths),
        )

    def __str__(self) -> str:
        return " + ".join(str(t) for t in self.terms)

    def to_json(self) -> dict:
        doc = {"terms": [t.to_json() for t in self.terms], "labels": list(self.labels)}
        if self.specialities is not None:
            doc["specialities"] = [m.to_json() for m in self.specialities]
            doc["lengths"] = [m.to_json() for m in self.lengths]
        return doc

    @classmethod
    def from_json(cls, doc) -> ComplexityExpr:
        """Accepts ``{"terms": [...]}`` or ``{"specialities": [...], "lengths": [...]}``.

        A bare JSON array is read as a list of term exponent vectors.
        """
        if isinstance(doc, list):
            doc = {"terms": doc}
        if not isinstance(doc, dict):
            raise ValidationError("table must be a JSON object or array")
        labels = doc.get("labels") or []
        if "terms" in doc:
            terms = [_monomial(t, f"terms[{i}]") for i, t in enumerate(doc["terms"])]
            return cls(terms, list(labels))
        if "specialities" in doc and "lengths" in doc:
            spec = [_monomial(t, f"specialities[{i}]") for i, t in enumerate(doc["specialities"])]
            lens = [_monomial(t, f"lengths[{i}]") for i, t in enumerate(doc["lengths"])]
            return stage_table_to_expr(spec, lens, labels or None)
        raise ValidationError("table needs 'terms' or both 'specialities' and 'lengths'")


def _monomial(entry, where: str) -> Monomial:
    try:
        if isinstance(entry, dict):
            return Monomial.of(entry)
        if isinstance(entry, list):
            if len(entry) > len(SYMBOLS):
                raise ValidationError(f"at most {len(SYMBOLS)} exponents")
            return Monomial.of(dict(zip(SYMBOLS, entry)))
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from exc
    raise ValidationError(f"{where}: expected an object or array of exponents")


def stage_table_to_expr(
    specialities: Sequence[Monomial], lengths: Sequence[Monomial], labels: Sequence[str] | None = None
) -> ComplexityExpr:
    """Sum over stages of ``length * sqrt(speciality)``."""
    if len(specialities) != len(lengths):
        raise ValidationError("specialities and lengths must be aligned by stage")
    terms = [length * spec ** Fraction(1, 2) for spec, length in zip(specialities, lengths)]
    return ComplexityExpr(terms, list(labels or []), list(specialities), list(lengths))


# -- built-in tables -------------------------------------------------------------

M = Monomial.of


def distinctness_table() -> ComplexityExpr:
    return stage_table_to_expr(
        [M(), M(n=1), M(n=2, r=-1)],
        [M(r=1), M(), M()],
        ["I", "II", "III"],
    )


def triangle_old_table() -> ComplexityExpr:
    return stage_table_to_expr(
        [M(), M(n=1), M(n=2, r=-1), M(n=3, r=-2), M(n=3, r=-1), M(n=3, l=-1)],
        [M(r=2), M(r=1), M(r=1), M(l=1), M(), M()],
        ["I", "II", "III", "IV", "V", "VI"],
    )


def triangle_new_table() -> ComplexityExpr:
    return stage_table_to_expr(
        [M(), M(n=1), M(n=2, r=-1), M(n=2), M(n=3, s=-1, r=-2)],
        [M(s=1, r=2), M(s=1, r=1), M(s=1, r=1), M(), M(r="2/3")],
        ["I", "II", "III", "V", "VII"],
    )


BUILTIN_TABLES = {
    "distinctness": distinctness_table,
    "triangle-old": triangle_old_table,
    "triangle-new": triangle_new_table,
}


# -- optimization ------------------------------------------------------------------


@dataclass
class ExponentSolution:
    params: dict[str, Fraction]
    value: Fraction
    tight: list[int]
    multipliers: dict[int, Fraction]
    bound_multipliers: dict[tuple[str, str], Fraction]
    expr: ComplexityExpr
    bounds: dict[str, tuple] = field(default_factory=dict)

    def term_exponents(self) -> list[Fraction]:
        return [t.n_exponent(self.params) for t in self.expr.terms]

    def check_certificate(self) -> bool:
        """Exact dual check: nonnegative multipliers on the tight terms (and
        active bounds) summing to one, with zero combined gradient."""
        exps = self.term_exponents()
        if max(exps) != self.value:
            return False
        if any(exps[i] != self.value for i in self.tight):
            return False
        if any(m < 0 for m in self.multipliers.values()) or any(m < 0 for m in self.bound_multipliers.values()):
            return False
        if set(self.multipliers) - set(self.tight):
            return False
        if sum(self.multipliers.values()) != 1:
            return False
        for p in self.params:
            grad = sum((m * getattr(self.expr.terms[i], p) for i, m in self.multipliers.items()), Fraction(0))
            for (q, side), m in self.bound_multipliers.items():
                if q != p:
                    continue
                lo, hi = self.bounds[q]
                at = lo if side == "lower" else hi
                if at is None or self.params[q] != at:
                    return False
                grad += -m if side == "lower" else m
            if grad != 0:
                return False
        return True

    def to_json(self) -> dict:
        return {
            "params": {PARAM_NAMES[p]: fmt(v) for p, v in self.params.items()},
            "value": fmt(self.value),
            "tight": [self.expr.labels[i] for i in self.tight],
            "multipliers": {self.expr.labels[i]: fmt(m) for i, m in sorted(self.multipliers.items())},
            "bound_multipliers": {f"{PARAM_NAMES[p]}:{side}": fmt(m) for (p, side), m in sorted(self.bound_multipliers.items())},
            "terms": [
                {"stage": lab, "term": str(t), "exponent": fmt(e)}
                for lab, t, e in zip(self.expr.labels, self.expr.terms, self.term_exponents())
            ],
            "certificate_ok": self.check_certificate(),
        }

    def to_markdown(self) -> str:
        e = self.expr
        head = "| Stage | " + " | ".join(e.labels) + " |"
        sep = "|---|" + "---|" * len(e.labels)
        rows = [head, sep]
        if e.specialities is not None:
            rows.append("| Speciality | " + " | ".join(str(m) for m in e.specialities) + " |")
            rows.append("| Length | " + " | ".join(str(m) for m in e.lengths) + " |")
        rows.append("| Term | " + " | ".join(str(t) for t in e.terms) + " |")
        exps = self.term_exponents()
        rows.append(
            "| Exponent | "
            + " | ".join(f"**{fmt(x)}**" if i in self.tight else fmt(x) for i, x in enumerate(exps))
            + " |"
        )
        setting = ", ".join(f"{PARAM_NAMES[p]} = {fmt(v)}" for p, v in self.params.items())
        lines = ["\n".join(rows), "", f"Optimum: n^{power(self.value)}" + (f" at {setting}" if setting else "")]
        return "\n".join(lines) + "\n"


def _bounds_rows(free: Sequence[str], bounds: Mapping[str, tuple]):
    rows, rhs, tags = [], [], []
    for k, p in enumerate(free):
        lo, hi = bounds.get(p, (None, None))
        if lo is not None:
            row = [Fraction(0)] * (len(free) + 1)
            row[k] = Fraction(-1)
            rows.append(row)
            rhs.append(-to_fraction(lo))
            tags.append((p, "lower"))
        if hi is not None:
            row = [Fraction(0)] * (len(free) + 1)
            row[k] = Fraction(1)
            rows.append(row)
            rhs.append(to_fraction(hi))
            tags.append((p, "upper"))
    return rows, rhs, tags


def optimize_exponents(
    expr: ComplexityExpr,
    free_params: Iterable[str] | None = None,
    bounds: Mapping[str, tuple] | None = None,
) -> ExponentSolution:
    """Exact ``min_theta max_i (a_i + b_i . theta)`` over the free parameters.

    Among optimal parameter vectors the one minimizing ``|rho|``, then
    ``|lambda|``, then ``|sigma|`` is returned.  Parameters of ``expr`` that
    are not free must have been substituted beforehand.
    """
    free = list(expr.params()) if free_params is None else [p for p in PARAMS if p in set(free_params)]
    for p in expr.params():
        if p not in free:
            raise ValidationError(f"parameter {p} is neither free nor substituted")
    bounds = {p: tuple(b) for p, b in (bounds or {}).items()}
    for p, (lo, hi) in bounds.items():
        if p not in free:
            raise ValidationError(f"bound given for non-free parameter {p}")
        if lo is not None and hi is not None and to_fraction(lo) > to_fraction(hi):
            raise InfeasibleError(f"empty range for {p}")
    k = len(free)
    terms = expr.terms

    # variables: theta_1..theta_k, v (all free)
    a_ub = [[getattr(t, p) for p in free] + [Fraction(-1)] for t in terms]
    b_ub = [-t.n for t in terms]
    brows, brhs, btags = _bounds_rows(free, bounds)
    a_ub += brows
    b_ub += brhs
    cost = [Fraction(0)] * k + [Fraction(1)]
    res = lp.solve(cost, a_ub, b_ub, free=[True] * (k + 1))
    value = res.x[k]

    # lexicographic tie-break on |theta_j| with v pinned at the optimum;
    # variables: theta (k, free), v (free), t (k, >= 0)
    fixed: list[tuple[int, Fraction]] = []
    theta = res.x[:k]
    for j in range(k):
        width = 2 * k + 1
        rows, rhs = [], []
        for row, b in zip(a_ub, b_ub):
            rows.append(list(row) + [Fraction(0)] * k)
            rhs.append(b)
        pin = [Fraction(0)] * width
        pin[k] = Fraction(1)
        rows.append(pin)
        rhs.append(value)
        for idx in range(k):
            for sign in (1, -1):
                row = [Fraction(0)] * width
                row[idx] = Fraction(sign)
                row[k + 1 + idx] = Fraction(-1)
                rows.append(row)
                rhs.append(Fraction(0))
        eq_rows, eq_rhs = [], []
        for idx, tv in fixed:
            row = [Fraction(0)] * width
            row[k + 1 + idx] = Fraction(1)
            eq_rows.append(row)
            eq_rhs.append(tv)
        c = [Fraction(0)] * width
        c[k + 1 + j] = Fraction(1)
        sub = lp.solve(c, rows, rhs, eq_rows, eq_rhs, free=[True] * (k + 1) + [False] * k)
        fixed.append((j, sub.objective))
        theta = sub.x[:k]

    params = dict(zip(free, theta))
    exps = [t.n_exponent(params) for t in terms]
    value = max(exps)
    tight = [i for i, e in enumerate(exps) if e == value]
    active = [
        tag for tag, row, b in zip(btags, brows, brhs)
        if sum((cf * th for cf, th in zip(row, theta)), Fraction(0)) == b
    ]
    mult, bmult = _certificate(terms, tight, free, active)
    return ExponentSolution(params, value, tight, mult, bmult, expr, bounds)


def _certificate(terms, tight, free, active):
    """Dual multipliers: mu >= 0 on tight terms, nu >= 0 on active bounds,
    sum(mu) = 1 and sum mu_i b_i + sum nu (+/- e_p) = 0."""
    nvar = len(tight) + len(active)
    a_eq, b_eq = [], []
    for p in free:
        row = [getattr(terms[i], p) for i in tight]
        row += [Fraction(-1 if side == "lower" else 1) if q == p else Fraction(0) for q, side in active]
        a_eq.append(row)
        b_eq.append(Fraction(0))
    a_eq.append([Fraction(1)] * len(tight) + [Fraction(0)] * len(active))
    b_eq.append(Fraction(1))
    try:
        res = lp.solve([Fraction(0)] * nvar, a_eq=a_eq, b_eq=b_eq)
    except InfeasibleError as exc:  # cannot happen at a true optimum
        raise UnboundedError("no optimality certificate for the returned point") from exc
    mult = {i: res.x[k] for k, i in enumerate(tight) if res.x[k]}
    bmult = {tag: res.x[len(tight) + k] for k, tag in enumerate(active) if res.x[len(tight) + k]}
    return mult, bmult


# -- numeric evaluation ---------------------------------------------------------------


def eval_expr(expr: ComplexityExpr, n: int, params: Mapping[str, Fraction] | None = None) -> float:
    """Numeric value of the sum at concrete ``n`` with ``r = n^rho`` etc."""
    if n < 2:
        raise ValidationError("eval_expr needs n >= 2")
    params = {k: to_fraction(v) for k, v in (params or {}).items()}
    return math.fsum(float(n) ** float(t.n_exponent(params)) for t in expr.terms)


def max_term(expr: ComplexityExpr, n: int, params: Mapping[str, Fraction] | None = None) -> float:
    if n < 2:
        raise ValidationError("max_term needs n >= 2")
    params = {k: to_fraction(v) for k, v in (params or {}).items()}
    return max(float(n) ** float(t.n_exponent(params)) for t in expr.terms)


def load_table(text: str) -> ComplexityExpr:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"table is not valid JSON: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return ComplexityExpr.from_json(doc)
