"""PaQL: parsing, validation, and printing of package queries.

PaQL extends a SELECT/FROM/WHERE skeleton with PACKAGE(...), REPEAT,
SUCH THAT (global predicates over package aggregates), and
MINIMIZE/MAXIMIZE. The parser is a hand-rolled tokenizer plus recursive
descent; keywords are case-insensitive. ASTs are immutable dataclasses.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Optional, Union

from .relation import CATEGORICAL, NUMERIC, Schema

COUNT = "count"
SUM = "sum"
AVG = "avg"
FILTERED_COUNT = "filtered_count"

MINIMIZE = "minimize"
MAXIMIZE = "maximize"

_GLOBAL_OPS = ("<=", ">=", "=")
_BASE_OPS = ("=", "!=", "<", "<=", ">", ">=")


class PaqlError(Exception):
    """Base for query-language errors."""


class ParseError(PaqlError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class ValidationError(PaqlError):
    pass


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Comparison:
    attr: str
    op: str
    value: Union[float, str]

    def __post_init__(self):
        if self.op not in _BASE_OPS:
            raise PaqlError(f"bad comparison operator {self.op!r}")


@dataclass(frozen=True)
class BasePredicate:
    """Conjunction of attr-op-constant comparisons over individual tuples."""

    conjuncts: tuple[Comparison, ...]


@dataclass(frozen=True)
class AggregateExpr:
    """COUNT(*), SUM(attr), AVG(attr), or a COUNT(*) filtered by a predicate."""

    kind: str
    attr: Optional[str] = None
    filter: Optional[BasePredicate] = None

    def __post_init__(self):
        if self.kind in (SUM, AVG) and not self.attr:
            raise PaqlError(f"{self.kind.upper()} needs exactly one attribute")
        if self.kind == FILTERED_COUNT and self.filter is None:
            raise PaqlError("filtered count needs a filter predicate")

    def attrs_used(self) -> set[str]:
        used = set()
        if self.attr:
            used.add(self.attr)
        if self.filter:
            used.update(c.attr for c in self.filter.conjuncts)
        return used


@dataclass(frozen=True)
class GlobalPredicate:
    """lhs-aggregate compared to a constant bound, a (L, U) window, or
    (for filtered counts only) another filtered count.

    ``linear_shift`` is a constant already contributed to the predicate's
    linearized left side by a fixed partial package; it is subtracted from
    the linearized right side at translation time. Surface queries always
    have shift 0; the refine-query builder sets it.
    """

    lhs: AggregateExpr
    op: str  # '<=', '>=', '=', 'between'
    rhs: Union[float, tuple[float, float], AggregateExpr]
    linear_shift: float = 0.0

    def __post_init__(self):
        if self.op == "between":
            lo, hi = self.rhs
            if lo > hi:
                raise PaqlError(f"BETWEEN bounds out of order: {lo} > {hi}")
        elif self.op not in _GLOBAL_OPS:
            raise PaqlError(f"bad global predicate operator {self.op!r}")

    def attrs_used(self) -> set[str]:
        used = self.lhs.attrs_used()
        if isinstance(self.rhs, AggregateExpr):
            used.update(self.rhs.attrs_used())
        return used


@dataclass(frozen=True)
class Objective:
    direction: str  # 'minimize' | 'maximize'
    expr: AggregateExpr


@dataclass(frozen=True)
class PackageQuery:
    relation_name: str
    relation_alias: str
    package_name: str
    repeat: Optional[int] = None  # None = unlimited repetition
    base_predicate: Optional[BasePredicate] = None
    global_predicates: tuple[GlobalPredicate, ...] = ()
    objective: Optional[Objective] = None
    # Aliases beyond the first inside PACKAGE(...); the grammar admits a
    # list but single-relation validation rejects a non-empty value.
    extra_package_aliases: tuple[str, ...] = ()
    validated: bool = False

    def attrs_used(self) -> set[str]:
        """Attributes referenced by global predicates and the objective."""
        used = set()
        for g in self.global_predicates:
            used.update(g.attrs_used())
        if self.objective:
            used.update(self.objective.expr.attrs_used())
        return used


# ---------------------------------------------------------------------------
# Tokenizer

_KEYWORDS = {
    "SELECT", "PACKAGE", "AS", "FROM", "REPEAT", "WHERE", "SUCH", "THAT",
    "AND", "OR", "BETWEEN", "MINIMIZE", "MAXIMIZE", "COUNT", "SUM", "AVG",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+\.\d*([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?|\d+([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<string>'(?:[^']|'')*')
  | (?P<op><=|>=|!=|<>|[<>=(),.*;+-])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # 'kw', 'ident', 'number', 'string', 'op', 'eof'
    value: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        lexeme = m.group(0)
        if m.lastgroup != "ws":
            if m.lastgroup == "ident":
                upper = lexeme.upper()
                kind = "kw" if upper in _KEYWORDS else "ident"
                value = upper if kind == "kw" else lexeme
            elif m.lastgroup == "string":
                kind = "string"
                value = lexeme[1:-1].replace("''", "'")
            elif m.lastgroup == "op":
                kind = "op"
                value = "!=" if lexeme == "<>" else lexeme
            else:
                kind = "number"
                value = lexeme
            tokens.append(_Token(kind, value, line, col))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Optional[_Token] = None):
        tok = tok or self.cur
        raise ParseError(message, tok.line, tok.col)

    def advance(self) -> _Token:
        tok = self.cur
        if tok.kind != "eof":
            self.i += 1
        return tok

    def accept(self, kind: str, value: Optional[str] = None) -> Optional[_Token]:
        tok = self.cur
        if tok.kind == kind and (value is None or tok.value == value):
            return self.advance()
        return None

    def expect(self, kind: str, value: Optional[str] = None) -> _Token:
        tok = self.accept(kind, value)
        if tok is None:
            want = value or kind
            got = self.cur.value or self.cur.kind
            self.error(f"expected {want!r}, got {got!r}")
        return tok

    def parse_query(self) -> PackageQuery:
        self.expect("kw", "SELECT")
        self.expect("kw", "PACKAGE")
        self.expect("op", "(")
        aliases = [self.expect("ident").value]
        while self.accept("op", ","):
            aliases.append(self.expect("ident").value)
        self.expect("op", ")")
        package_name = aliases[0]
        if self.accept("kw", "AS"):
            package_name = self.expect("ident").value
        elif self.cur.kind == "ident":
            package_name = self.advance().value

        self.expect("kw", "FROM")
        relation_name = self.expect("ident").value
        relation_alias = relation_name
        if self.accept("kw", "AS"):
            relation_alias = self.expect("ident").value
        elif self.cur.kind == "ident":
            relation_alias = self.advance().value
        repeat = None
        if self.accept("kw", "REPEAT"):
            tok = self.expect("number")
            if "." in tok.value or "e" in tok.value.lower():
                self.error("REPEAT bound must be a non-negative integer", tok)
            repeat = int(tok.value)
        if self.cur.kind == "op" and self.cur.value == ",":
            self.error("unsupported: joins (multiple relations in FROM)")

        base_predicate = None
        if self.accept("kw", "WHERE"):
            base_predicate = self.parse_base_predicate()

        global_predicates: list[GlobalPredicate] = []
        if self.accept("kw", "SUCH"):
            self.expect("kw", "THAT")
            global_predicates.append(self.parse_global_predicate())
            while self.accept("kw", "AND"):
                global_predicates.append(self.parse_global_predicate())

        objective = None
        if self.cur.kind == "kw" and self.cur.value in ("MINIMIZE", "MAXIMIZE"):
            direction = MINIMIZE if self.advance().value == "MINIMIZE" else MAXIMIZE
            objective = Objective(direction, self.parse_aggregate())

        self.accept("op", ";")
        if self.cur.kind != "eof":
            self.error(f"unexpected trailing input {self.cur.value!r}")

        return _normalize_refs(PackageQuery(
            relation_name=relation_name,
            relation_alias=relation_alias,
            package_name=package_name,
            repeat=repeat,
            base_predicate=base_predicate,
            global_predicates=tuple(global_predicates),
            objective=objective,
            extra_package_aliases=tuple(aliases[1:]),
        ))

    def parse_base_predicate(self) -> BasePredicate:
        conjuncts = [self.parse_comparison()]
        while self.accept("kw", "AND"):
            conjuncts.append(self.parse_comparison())
        if self.cur.kind == "kw" and self.cur.value == "OR":
            self.error("unsupported: OR in predicates (conjunctions only)")
        return BasePredicate(tuple(conjuncts))

    def parse_comparison(self) -> Comparison:
        attr = self.parse_attr_ref()
        op_tok = self.expect("op")
        if op_tok.value not in _BASE_OPS:
            self.error(f"bad comparison operator {op_tok.value!r}", op_tok)
        value: Union[float, str]
        if self.cur.kind == "string":
            value = self.advance().value
        else:
            value = self.parse_number()
        return Comparison(attr, op_tok.value, value)

    def parse_attr_ref(self) -> str:
        """Attribute reference, optionally qualified: attr, alias.attr."""
        first = self.expect("ident").value
        if self.accept("op", "."):
            return f"{first}.{self.expect('ident').value}"
        return first

    def parse_number(self) -> float:
        sign = 1.0
        if self.accept("op", "-"):
            sign = -1.0
        elif self.accept("op", "+"):
            pass
        tok = self.expect("number")
        return sign * float(tok.value)

    def parse_global_predicate(self) -> GlobalPredicate:
        lhs = self.parse_aggregate()
        tok = self.cur
        if tok.kind == "kw" and tok.value == "BETWEEN":
            self.advance()
            lo = self.parse_number()
            self.expect("kw", "AND")
            hi = self.parse_number()
            try:
                return GlobalPredicate(lhs, "between", (lo, hi))
            except PaqlError as exc:
                self.error(str(exc), tok)
        if tok.kind == "op" and tok.value in ("<", ">"):
            self.error("unsupported: strict global inequality (use <= or >=)", tok)
        if tok.kind != "op" or tok.value not in _GLOBAL_OPS:
            self.error(f"expected a global comparison, got {tok.value!r}", tok)
        self.advance()
        rhs: Union[float, AggregateExpr]
        if (self.cur.kind == "op" and self.cur.value == "(") or (
                self.cur.kind == "kw" and self.cur.value in ("COUNT", "SUM", "AVG")):
            rhs = self.parse_aggregate()
        else:
            rhs = self.parse_number()
        return GlobalPredicate(lhs, tok.value, rhs)

    def parse_aggregate(self) -> AggregateExpr:
        """Shorthand aggregate or parenthesized subquery form."""
        if self.cur.kind == "op" and self.cur.value == "(":
            return self.parse_aggregate_subquery()
        tok = self.expect("kw")
        if tok.value == "COUNT":
            self.expect("op", "(")
            # COUNT(*) or COUNT(pkg.*)
            if not self.accept("op", "*"):
                self.expect("ident")
                self.expect("op", ".")
                self.expect("op", "*")
            self.expect("op", ")")
            return AggregateExpr(COUNT)
        if tok.value in ("SUM", "AVG"):
            self.expect("op", "(")
            attr = self.parse_attr_ref()
            self.expect("op", ")")
            return AggregateExpr(SUM if tok.value == "SUM" else AVG, attr=attr)
        self.error(f"expected an aggregate, got {tok.value!r}", tok)

    def parse_aggregate_subquery(self) -> AggregateExpr:
        """(SELECT COUNT(*) FROM pkg [WHERE ...]) and SUM/AVG variants."""
        self.expect("op", "(")
        self.expect("kw", "SELECT")
        tok = self.expect("kw")
        if tok.value == "COUNT":
            self.expect("op", "(")
            self.expect("op", "*")
            self.expect("op", ")")
            kind, attr = COUNT, None
        elif tok.value in ("SUM", "AVG"):
            self.expect("op", "(")
            attr = self.parse_attr_ref()
            self.expect("op", ")")
            kind = SUM if tok.value == "SUM" else AVG
        else:
            self.error(f"expected an aggregate, got {tok.value!r}", tok)
        self.expect("kw", "FROM")
        self.expect("ident")  # package name; resolution happens in validate
        filt = None
        if self.accept("kw", "WHERE"):
            where_tok = self.cur
            filt = self.parse_base_predicate()
            if kind != COUNT:
                self.error("only COUNT(*) subqueries may carry WHERE", where_tok)
        self.expect("op", ")")
        if kind == COUNT and filt is not None:
            return AggregateExpr(FILTERED_COUNT, filter=filt)
        return AggregateExpr(kind, attr=attr)


def _normalize_refs(q: PackageQuery) -> PackageQuery:
    """Strip known alias/package qualifiers so that shorthand aggregates and
    their subquery forms produce identical ASTs. Unknown qualifiers are kept
    for validation to reject."""
    known = {q.relation_alias, q.relation_name, q.package_name}

    def fix_attr(ref: str) -> str:
        if "." in ref:
            qual, attr = ref.split(".", 1)
            if qual in known:
                return attr
        return ref

    def fix_base(pred: Optional[BasePredicate]) -> Optional[BasePredicate]:
        if pred is None:
            return None
        return BasePredicate(tuple(
            Comparison(fix_attr(c.attr), c.op, c.value) for c in pred.conjuncts))

    def fix_agg(expr: AggregateExpr) -> AggregateExpr:
        if expr.kind == FILTERED_COUNT:
            return AggregateExpr(FILTERED_COUNT, filter=fix_base(expr.filter))
        if expr.attr:
            return AggregateExpr(expr.kind, attr=fix_attr(expr.attr))
        return expr

    globals_out = tuple(
        GlobalPredicate(
            fix_agg(g.lhs), g.op,
            fix_agg(g.rhs) if isinstance(g.rhs, AggregateExpr) else g.rhs,
            g.linear_shift)
        for g in q.global_predicates)
    objective = None
    if q.objective is not None:
        objective = Objective(q.objective.direction, fix_agg(q.objective.expr))
    return replace(
        q,
        base_predicate=fix_base(q.base_predicate),
        global_predicates=globals_out,
        objective=objective,
    )


def parse(text: str) -> PackageQuery:
    """Parse PaQL text into an unvalidated PackageQuery AST."""
    return _Parser(text).parse_query()


# ---------------------------------------------------------------------------
# Validation


def _strip_qualifier(ref: str, q: PackageQuery) -> str:
    if "." not in ref:
        return ref
    qual, attr = ref.split(".", 1)
    known = {q.relation_alias, q.relation_name, q.package_name}
    if qual not in known:
        raise ValidationError(f"unknown qualifier {qual!r} in {ref!r}")
    return attr


def _check_attr(attr: str, schema: Schema, numeric_required: bool, where: str):
    if not schema.has(attr):
        raise ValidationError(f"unknown attribute {attr!r} in {where}")
    if numeric_required and schema.kind_of(attr) != NUMERIC:
        raise ValidationError(
            f"attribute {attr!r} in {where} must be numeric")


def _validate_base(pred: BasePredicate, q: PackageQuery, schema: Schema,
                   where: str) -> BasePredicate:
    out = []
    for c in pred.conjuncts:
        attr = _strip_qualifier(c.attr, q)
        _check_attr(attr, schema, numeric_required=False, where=where)
        kind = schema.kind_of(attr)
        if kind == CATEGORICAL:
            if c.op not in ("=", "!="):
                raise ValidationError(
                    f"operator {c.op!r} not allowed on categorical {attr!r}")
            if not isinstance(c.value, str):
                raise ValidationError(
                    f"categorical {attr!r} compared to non-string {c.value!r}")
        else:
            if isinstance(c.value, str):
                raise ValidationError(
                    f"numeric {attr!r} compared to string {c.value!r}")
        out.append(Comparison(attr, c.op, c.value))
    return BasePredicate(tuple(out))


def _validate_aggregate(expr: AggregateExpr, q: PackageQuery,
                        schema: Schema, where: str) -> AggregateExpr:
    if expr.kind == COUNT:
        return expr
    if expr.kind == FILTERED_COUNT:
        return AggregateExpr(
            FILTERED_COUNT, filter=_validate_base(expr.filter, q, schema, where))
    attr = _strip_qualifier(expr.attr, q)
    if not schema.has(attr):
        raise ValidationError(f"unknown attribute {attr!r} in {where}")
    if schema.kind_of(attr) != NUMERIC:
        raise ValidationError(
            f"aggregate over categorical attribute {attr!r} in {where}")
    return AggregateExpr(expr.kind, attr=attr)


def validate(q: PackageQuery, schema: Schema) -> PackageQuery:
    """Resolve and type-check a parsed query against a relation schema.

    Returns a normalized copy: alias qualifiers stripped, BETWEEN lowered
    to a >= / <= pair, ``validated`` set. Raises ValidationError on unknown
    attributes, type mismatches, non-linear objectives, or unsupported
    aggregate comparisons.
    """
    if q.extra_package_aliases:
        raise ValidationError(
            "unsupported: multiple relation aliases in PACKAGE(...)")

    base = None
    if q.base_predicate is not None:
        base = _validate_base(q.base_predicate, q, schema, "WHERE")

    globals_out: list[GlobalPredicate] = []
    for g in q.global_predicates:
        lhs = _validate_aggregate(g.lhs, q, schema, "SUCH THAT")
        if isinstance(g.rhs, AggregateExpr):
            rhs = _validate_aggregate(g.rhs, q, schema, "SUCH THAT")
            if lhs.kind != FILTERED_COUNT or rhs.kind != FILTERED_COUNT:
                raise ValidationError(
                    "aggregate-to-aggregate comparison is supported only "
                    "between filtered COUNT subqueries")
            globals_out.append(GlobalPredicate(lhs, g.op, rhs, g.linear_shift))
        elif g.op == "between":
            lo, hi = g.rhs
            globals_out.append(GlobalPredicate(lhs, ">=", lo, g.linear_shift))
            globals_out.append(GlobalPredicate(lhs, "<=", hi, g.linear_shift))
        else:
            globals_out.append(GlobalPredicate(lhs, g.op, float(g.rhs), g.linear_shift))

    objective = None
    if q.objective is not None:
        expr = _validate_aggregate(q.objective.expr, q, schema, "objective")
        if expr.kind == AVG:
            raise ValidationError("unsupported: non-linear AVG objective")
        objective = Objective(q.objective.direction, expr)

    return replace(
        q,
        base_predicate=base,
        global_predicates=tuple(globals_out),
        objective=objective,
        validated=True,
    )


# ---------------------------------------------------------------------------
# Printing


def _fmt_value(v: Union[float, str]) -> str:
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    return repr(float(v))


def _qualify(attr: str, owner: str) -> str:
    # unvalidated ASTs may keep surface qualifiers; don't double-qualify
    return attr if "." in attr else f"{owner}.{attr}"


def _fmt_base(pred: BasePredicate, owner: str) -> str:
    return " AND ".join(
        f"{_qualify(c.attr, owner)} {'<>' if c.op == '!=' else c.op} "
        f"{_fmt_value(c.value)}"
        for c in pred.conjuncts)


def _fmt_aggregate(expr: AggregateExpr, pkg: str) -> str:
    if expr.kind == COUNT:
        return f"COUNT({pkg}.*)"
    if expr.kind == SUM:
        return f"SUM({_qualify(expr.attr, pkg)})"
    if expr.kind == AVG:
        return f"AVG({_qualify(expr.attr, pkg)})"
    return f"(SELECT COUNT(*) FROM {pkg} WHERE {_fmt_base(expr.filter, pkg)})"


def to_paql(q: PackageQuery) -> str:
    """Pretty-print a query; parse(to_paql(q)) is structurally equal to q."""
    lines = [f"SELECT PACKAGE({q.relation_alias}) AS {q.package_name}"]
    from_line = f"FROM {q.relation_name}"
    if q.relation_alias != q.relation_name:
        from_line += f" {q.relation_alias}"
    if q.repeat is not None:
        from_line += f" REPEAT {q.repeat}"
    lines.append(from_line)
    if q.base_predicate:
        lines.append(f"WHERE {_fmt_base(q.base_predicate, q.relation_alias)}")
    if q.global_predicates:
        parts = []
        for g in q.global_predicates:
            lhs = _fmt_aggregate(g.lhs, q.package_name)
            if g.op == "between":
                lo, hi = g.rhs
                parts.append(f"{lhs} BETWEEN {repr(lo)} AND {repr(hi)}")
            elif isinstance(g.rhs, AggregateExpr):
                parts.append(f"{lhs} {g.op} {_fmt_aggregate(g.rhs, q.package_name)}")
            else:
                parts.append(f"{lhs} {g.op} {repr(float(g.rhs))}")
        lines.append("SUCH THAT " + " AND ".join(parts))
    if q.objective:
        kw = "MINIMIZE" if q.objective.direction == MINIMIZE else "MAXIMIZE"
        lines.append(f"{kw} {_fmt_aggregate(q.objective.expr, q.package_name)}")
    return "\n".join(lines)


def load_query(path) -> PackageQuery:
    """Parse a .paql file (UTF-8, one query per file)."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())
