"""SPARQL tokenizer, subset parser, and normalizing serializer.

The supported subset is SELECT/ASK with basic graph patterns, OPTIONAL,
FILTER, BIND, VALUES, GROUP BY, ORDER BY, LIMIT/OFFSET, DISTINCT, and the
COUNT/SUM/AVG/MIN/MAX aggregates. Update forms are rejected outright.
Read-only queries that tokenize and balance but use features outside the
subset (UNION, SERVICE, subqueries, ...) are passed through unanalyzed:
the endpoint remains the source of truth for those.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

from ..errors import ParseError, PreconditionError, UnsupportedFormError
from .terms import Iri, Literal, Term, RDF_TYPE, XSD_BOOLEAN, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER

UPDATE_FORMS = {
    "INSERT", "DELETE", "LOAD", "CLEAR", "CREATE", "DROP", "COPY", "MOVE", "ADD", "WITH",
}
UNSUPPORTED_READ_FORMS = {"CONSTRUCT", "DESCRIBE"}

#: keywords legal in full SPARQL but outside the analyzed subset
PASSTHROUGH_KEYWORDS = {"UNION", "SERVICE", "GRAPH", "MINUS", "EXISTS", "HAVING", "SAMPLE", "GROUP_CONCAT"}

AGGREGATES = {"COUNT", "SUM", "AVG", "MIN", "MAX"}

STANDARD_PREFIXES = {
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "rdfs": "http://www.w3.org/2000/01/rdf-schema#",
    "xsd": "http://www.w3.org/2001/XMLSchema#",
}


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<WS>\s+|\#[^\n]*)
  | (?P<IRI><[^<>\s{}|^`\\]*>)
  | (?P<VAR>[?$][A-Za-z_][A-Za-z0-9_]*)
  | (?P<STRING>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<NUMBER>[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<PNAME>[A-Za-z_][A-Za-z0-9_.-]*?:[A-Za-z0-9_][A-Za-z0-9_.-]*)
  | (?P<LANGTAG>@[A-Za-z]+(?:-[A-Za-z0-9]+)*)
  | (?P<COLONNAME>[A-Za-z_][A-Za-z0-9_-]*:)
  | (?P<NAME>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<OP>\^\^|&&|\|\||!=|<=|>=|[{}()\[\].;,*/+\-=<>!:])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise ParseError(f"unexpected character {text[i]!r}", offset=i)
        kind = m.lastgroup or ""
        if kind != "WS":
            tokens.append(Token(kind, m.group(), i))
        i = m.end()
    return tokens


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class TermExpr:
    term: Term


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class UnaryOp:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class FunctionCall:
    name: str  # upper-cased builtin name
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Aggregate:
    func: str  # COUNT/SUM/AVG/MIN/MAX
    expr: Optional["Expr"]  # None means COUNT(*)
    distinct: bool = False


Expr = Union[Var, TermExpr, BinaryOp, UnaryOp, FunctionCall, Aggregate]


@dataclass(frozen=True)
class TriplePattern:
    s: Union[Var, Iri]
    p: Union[Var, Iri]
    o: Union[Var, Term]


@dataclass(frozen=True)
class FilterClause:
    expr: Expr


@dataclass(frozen=True)
class BindClause:
    expr: Expr
    var: Var


@dataclass(frozen=True)
class ValuesClause:
    vars: tuple[Var, ...]
    rows: tuple[tuple[Optional[Term], ...], ...]  # None encodes UNDEF


@dataclass(frozen=True)
class OptionalBlock:
    pattern: "GroupPattern"


@dataclass(frozen=True)
class GroupPattern:
    elements: tuple[Union[TriplePattern, FilterClause, BindClause, ValuesClause, OptionalBlock], ...]


@dataclass(frozen=True)
class Projection:
    star: bool
    items: tuple[tuple[Expr, Optional[Var]], ...] = ()  # (expr, alias)


@dataclass
class ParsedQuery:
    text: str
    form: str  # "SELECT" or "ASK"
    projected_vars: list[str]
    referenced_iris: set[str]
    prefix_map: dict[str, str]
    analyzable: bool = True
    # structured body, only meaningful when analyzable
    distinct: bool = False
    projection: Projection = field(default_factory=lambda: Projection(star=True))
    pattern: GroupPattern = field(default_factory=lambda: GroupPattern(()))
    group_by: tuple[Expr, ...] = ()
    order_by: tuple[tuple[Expr, bool], ...] = ()  # (expr, ascending)
    limit: Optional[int] = None
    offset: Optional[int] = None


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, tokens: list[Token], text: str):
        self.tokens = tokens
        self.text = text
        self.i = 0
        self.prefixes: dict[str, str] = {}
        self.iris: set[str] = set()

    # -- token plumbing ----------------------------------------------------

    def peek(self, offset: int = 0) -> Optional[Token]:
        j = self.i + offset
        return self.tokens[j] if j < len(self.tokens) else None

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of query", offset=len(self.text))
        self.i += 1
        return tok

    def at_keyword(self, *names: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "NAME" and tok.text.upper() in names

    def expect_keyword(self, name: str) -> Token:
        tok = self.next()
        if tok.kind != "NAME" or tok.text.upper() != name:
            raise ParseError(f"expected {name}, found {tok.text!r}", offset=tok.pos)
        return tok

    def expect_op(self, op: str) -> Token:
        tok = self.next()
        if tok.kind != "OP" or tok.text != op:
            raise ParseError(f"expected {op!r}, found {tok.text!r}", offset=tok.pos)
        return tok

    def at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "OP" and tok.text in ops

    # -- terms -------------------------------------------------------------

    def expand_pname(self, tok: Token) -> Iri:
        prefix, _, local = tok.text.partition(":")
        ns = self.prefixes.get(prefix) or STANDARD_PREFIXES.get(prefix)
        if ns is None:
            raise ParseError(f"undeclared prefix {prefix!r}", offset=tok.pos)
        iri = Iri(ns + local)
        self.iris.add(iri.value)
        return iri

    def iri_from_token(self, tok: Token) -> Iri:
        if tok.kind == "IRI":
            iri = Iri(tok.text[1:-1])
            self.iris.add(iri.value)
            return iri
        if tok.kind == "PNAME":
            return self.expand_pname(tok)
        raise ParseError(f"expected IRI, found {tok.text!r}", offset=tok.pos)

    def parse_literal_token(self, tok: Token) -> Literal:
        raw = tok.text
        body = raw[1:-1]
        body = re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t", "r": "\r"}.get(m.group(1), m.group(1)), body)
        nxt = self.peek()
        if nxt is not None and nxt.kind == "OP" and nxt.text == "^^":
            self.next()
            dt = self.iri_from_token(self.next())
            return Literal(body, datatype=dt.value)
        if nxt is not None and nxt.kind == "LANGTAG":
            self.next()
            return Literal(body, language=nxt.text[1:])
        return Literal(body)

    def number_literal(self, tok: Token) -> Literal:
        text = tok.text
        if re.fullmatch(r"[+-]?\d+", text):
            return Literal(str(int(text)), datatype=XSD_INTEGER)
        if "e" in text.lower():
            return Literal(text, datatype=XSD_DOUBLE)
        return Literal(text, datatype=XSD_DECIMAL)

    def graph_term(self, tok: Token) -> Term:
        if tok.kind in ("IRI", "PNAME"):
            return self.iri_from_token(tok)
        if tok.kind == "STRING":
            return self.parse_literal_token(tok)
        if tok.kind == "NUMBER":
            return self.number_literal(tok)
        if tok.kind == "NAME" and tok.text.upper() in ("TRUE", "FALSE"):
            return Literal(tok.text.lower(), datatype=XSD_BOOLEAN)
        raise ParseError(f"expected RDF term, found {tok.text!r}", offset=tok.pos)

    # -- prologue ----------------------------------------------------------

    def parse_prologue(self):
        while True:
            if self.at_keyword("PREFIX"):
                self.next()
                name_tok = self.next()
                if name_tok.kind == "COLONNAME":
                    prefix = name_tok.text[:-1]
                elif name_tok.kind == "PNAME" and name_tok.text.endswith(":"):
                    prefix = name_tok.text[:-1]
                elif name_tok.kind == "NAME":
                    prefix = name_tok.text
                    self.expect_op(":")
                else:
                    raise ParseError("expected prefix name", offset=name_tok.pos)
                iri_tok = self.next()
                if iri_tok.kind != "IRI":
                    raise ParseError("expected namespace IRI", offset=iri_tok.pos)
                self.prefixes[prefix] = iri_tok.text[1:-1]
            elif self.at_keyword("BASE"):
                self.next()
                iri_tok = self.next()
                if iri_tok.kind != "IRI":
                    raise ParseError("expected base IRI", offset=iri_tok.pos)
                # BASE accepted and ignored: all fixture IRIs are absolute
            else:
                return

    # -- expressions -------------------------------------------------------

    def parse_expression(self) -> Expr:
        return self.parse_or()

    def parse_or(self) -> Expr:
        left = self.parse_and()
        while self.at_op("||"):
            self.next()
            left = BinaryOp("||", left, self.parse_and())
        return left

    def parse_and(self) -> Expr:
        left = self.parse_relational()
        while self.at_op("&&"):
            self.next()
            left = BinaryOp("&&", left, self.parse_relational())
        return left

    def parse_relational(self) -> Expr:
        left = self.parse_additive()
        if self.at_op("=", "!=", "<", "<=", ">", ">="):
            op = self.next().text
            return BinaryOp(op, left, self.parse_additive())
        return left

    def parse_additive(self) -> Expr:
        left = self.parse_multiplicative()
        while self.at_op("+", "-"):
            op = self.next().text
            left = BinaryOp(op, left, self.parse_multiplicative())
        return left

    def parse_multiplicative(self) -> Expr:
        left = self.parse_unary()
        while self.at_op("*", "/"):
            op = self.next().text
            left = BinaryOp(op, left, self.parse_unary())
        return left

    def parse_unary(self) -> Expr:
        if self.at_op("!"):
            self.next()
            return UnaryOp("!", self.parse_unary())
        if self.at_op("-"):
            self.next()
            return UnaryOp("-", self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> Expr:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of expression", offset=len(self.text))
        if tok.kind == "OP" and tok.text == "(":
            self.next()
            expr = self.parse_expression()
            self.expect_op(")")
            return expr
        if tok.kind == "VAR":
            self.next()
            return Var(tok.text[1:])
        if tok.kind == "NAME":
            upper = tok.text.upper()
            if upper in AGGREGATES:
                return self.parse_aggregate()
            nxt = self.peek(1)
            if nxt is not None and nxt.kind == "OP" and nxt.text == "(":
                self.next()
                self.next()
                args: list[Expr] = []
                if not self.at_op(")"):
                    args.append(self.parse_expression())
                    while self.at_op(","):
                        self.next()
                        args.append(self.parse_expression())
                self.expect_op(")")
                return FunctionCall(upper, tuple(args))
            if upper in ("TRUE", "FALSE"):
                self.next()
                return TermExpr(Literal(tok.text.lower(), datatype=XSD_BOOLEAN))
            raise ParseError(f"unexpected name {tok.text!r} in expression", offset=tok.pos)
        return TermExpr(self.graph_term(self.next()))

    def parse_aggregate(self) -> Aggregate:
        func = self.next().text.upper()
        self.expect_op("(")
        distinct = False
        if self.at_keyword("DISTINCT"):
            self.next()
            distinct = True
        if self.at_op("*"):
            self.next()
            self.expect_op(")")
            return Aggregate(func, None, distinct)
        expr = self.parse_expression()
        self.expect_op(")")
        return Aggregate(func, expr, distinct)

    # -- graph patterns ----------------------------------------------------

    def parse_group_pattern(self) -> GroupPattern:
        self.expect_op("{")
        elements: list = []
        while not self.at_op("}"):
            tok = self.peek()
            if tok is None:
                raise ParseError("unclosed group pattern", offset=len(self.text))
            if self.at_keyword("OPTIONAL"):
                self.next()
                elements.append(OptionalBlock(self.parse_group_pattern()))
            elif self.at_keyword("FILTER"):
                self.next()
                if self.at_op("("):
                    self.next()
                    expr = self.parse_expression()
                    self.expect_op(")")
                else:
                    expr = self.parse_primary()
                elements.append(FilterClause(expr))
            elif self.at_keyword("BIND"):
                self.next()
                self.expect_op("(")
                expr = self.parse_expression()
                self.expect_keyword("AS")
                var_tok = self.next()
                if var_tok.kind != "VAR":
                    raise ParseError("expected variable after AS", offset=var_tok.pos)
                self.expect_op(")")
                elements.append(BindClause(expr, Var(var_tok.text[1:])))
            elif self.at_keyword("VALUES"):
                self.next()
                elements.append(self.parse_values())
            else:
                elements.extend(self.parse_triples_block())
            if self.at_op("."):
                self.next()
        self.expect_op("}")
        return GroupPattern(tuple(elements))

    def parse_values(self) -> ValuesClause:
        vars_: list[Var] = []
        if self.at_op("("):
            self.next()
            while not self.at_op(")"):
                tok = self.next()
                if tok.kind != "VAR":
                    raise ParseError("expected variable in VALUES", offset=tok.pos)
                vars_.append(Var(tok.text[1:]))
            self.next()
        else:
            tok = self.next()
            if tok.kind != "VAR":
                raise ParseError("expected variable in VALUES", offset=tok.pos)
            vars_.append(Var(tok.text[1:]))
        rows: list[tuple[Optional[Term], ...]] = []
        self.expect_op("{")
        while not self.at_op("}"):
            if len(vars_) == 1 and not self.at_op("("):
                rows.append((self._values_term(),))
            else:
                self.expect_op("(")
                row: list[Optional[Term]] = []
                while not self.at_op(")"):
                    row.append(self._values_term())
                self.next()
                if len(row) != len(vars_):
                    raise ParseError("VALUES row arity mismatch", offset=self.peek().pos if self.peek() else None)
                rows.append(tuple(row))
        self.next()
        return ValuesClause(tuple(vars_), tuple(rows))

    def _values_term(self) -> Optional[Term]:
        if self.at_keyword("UNDEF"):
            self.next()
            return None
        return self.graph_term(self.next())

    def parse_triples_block(self) -> list[TriplePattern]:
        subject = self.parse_var_or_term()
        patterns: list[TriplePattern] = []
        while True:
            predicate = self.parse_verb()
            while True:
                obj = self.parse_var_or_term()
                patterns.append(TriplePattern(subject, predicate, obj))
                if self.at_op(","):
                    self.next()
                    continue
                break
            if self.at_op(";"):
                self.next()
                if self.at_op(".", "}"):
                    break
                continue
            break
        return patterns

    def parse_verb(self) -> Union[Var, Iri]:
        tok = self.peek()
        if tok is not None and tok.kind == "NAME" and tok.text == "a":
            self.next()
            return Iri(RDF_TYPE)
        if tok is not None and tok.kind == "VAR":
            self.next()
            return Var(tok.text[1:])
        return self.iri_from_token(self.next())

    def parse_var_or_term(self) -> Union[Var, Term]:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of triple pattern", offset=len(self.text))
        if tok.kind == "VAR":
            self.next()
            return Var(tok.text[1:])
        return self.graph_term(self.next())

    # -- query forms -------------------------------------------------------

    def parse_query_body(self) -> ParsedQuery:
        self.parse_prologue()
        tok = self.peek()
        if tok is None:
            raise ParseError("empty query", offset=len(self.text))
        if tok.kind != "NAME":
            raise ParseError(f"expected query form, found {tok.text!r}", offset=tok.pos)
        form = tok.text.upper()
        if form in UPDATE_FORMS or form == "MODIFY":
            raise UnsupportedFormError(f"update form {form} is not allowed (read-only gateway)")
        if form in UNSUPPORTED_READ_FORMS:
            raise UnsupportedFormError(f"query form {form} is not supported")
        if form not in ("SELECT", "ASK"):
            raise ParseError(f"expected SELECT or ASK, found {tok.text!r}", offset=tok.pos)
        self.next()

        distinct = False
        projection = Projection(star=True)
        if form == "SELECT":
            if self.at_keyword("DISTINCT"):
                self.next()
                distinct = True
            elif self.at_keyword("REDUCED"):
                self.next()
            if self.at_op("*"):
                self.next()
            else:
                items: list[tuple[Expr, Optional[Var]]] = []
                while True:
                    tok2 = self.peek()
                    if tok2 is None:
                        raise ParseError("unexpected end of projection", offset=len(self.text))
                    if tok2.kind == "VAR":
                        self.next()
                        items.append((Var(tok2.text[1:]), None))
                    elif tok2.kind == "OP" and tok2.text == "(":
                        self.next()
                        expr = self.parse_expression()
                        self.expect_keyword("AS")
                        var_tok = self.next()
                        if var_tok.kind != "VAR":
                            raise ParseError("expected variable after AS", offset=var_tok.pos)
                        self.expect_op(")")
                        items.append((expr, Var(var_tok.text[1:])))
                    else:
                        break
                if not items:
                    raise ParseError("SELECT requires a projection", offset=tok.pos)
                projection = Projection(star=False, items=tuple(items))

        if self.at_keyword("WHERE"):
            self.next()
        pattern = self.parse_group_pattern()

        group_by: tuple[Expr, ...] = ()
        order_by: list[tuple[Expr, bool]] = []
        limit = offset = None
        while self.peek() is not None:
            if self.at_keyword("GROUP"):
                self.next()
                self.expect_keyword("BY")
                exprs: list[Expr] = []
                while True:
                    tok2 = self.peek()
                    if tok2 is None or (tok2.kind == "NAME" and tok2.text.upper() in ("ORDER", "LIMIT", "OFFSET", "HAVING")):
                        break
                    if tok2.kind == "VAR":
                        self.next()
                        exprs.append(Var(tok2.text[1:]))
                    elif tok2.kind == "OP" and tok2.text == "(":
                        self.next()
                        exprs.append(self.parse_expression())
                        self.expect_op(")")
                    else:
                        break
                if not exprs:
                    raise ParseError("GROUP BY requires at least one grouping key",
                                     offset=self.peek().pos if self.peek() else None)
                group_by = tuple(exprs)
            elif self.at_keyword("ORDER"):
                self.next()
                self.expect_keyword("BY")
                while True:
                    tok2 = self.peek()
                    if tok2 is None:
                        break
                    if tok2.kind == "NAME" and tok2.text.upper() in ("ASC", "DESC"):
                        ascending = tok2.text.upper() == "ASC"
                        self.next()
                        self.expect_op("(")
                        expr = self.parse_expression()
                        self.expect_op(")")
                        order_by.append((expr, ascending))
                    elif tok2.kind == "VAR":
                        self.next()
                        order_by.append((Var(tok2.text[1:]), True))
                    else:
                        break
                if not order_by:
                    raise ParseError("ORDER BY requires at least one sort key",
                                     offset=self.peek().pos if self.peek() else None)
            elif self.at_keyword("LIMIT"):
                self.next()
                tok2 = self.next()
                if tok2.kind != "NUMBER":
                    raise ParseError("expected integer after LIMIT", offset=tok2.pos)
                limit = int(tok2.text)
            elif self.at_keyword("OFFSET"):
                self.next()
                tok2 = self.next()
                if tok2.kind != "NUMBER":
                    raise ParseError("expected integer after OFFSET", offset=tok2.pos)
                offset = int(tok2.text)
            else:
                tok2 = self.peek()
                raise ParseError(f"unexpected trailing token {tok2.text!r}", offset=tok2.pos)

        projected = _projected_var_names(projection, pattern, group_by) if form == "SELECT" else []
        if form == "SELECT" and not projected:
            raise ParseError("SELECT projects no variables", offset=0)
        return ParsedQuery(
            text=self.text,
            form=form,
            projected_vars=projected,
            referenced_iris=set(self.iris),
            prefix_map=dict(self.prefixes),
            distinct=distinct,
            projection=projection,
            pattern=pattern,
            group_by=group_by,
            order_by=tuple(order_by),
            limit=limit,
            offset=offset,
        )


def _pattern_vars(pattern: GroupPattern) -> list[str]:
    seen: list[str] = []

    def add(v):
        if isinstance(v, Var) and v.name not in seen:
            seen.append(v.name)

    for el in pattern.elements:
        if isinstance(el, TriplePattern):
            add(el.s)
            add(el.p)
            add(el.o)
        elif isinstance(el, BindClause):
            add(el.var)
        elif isinstance(el, ValuesClause):
            for v in el.vars:
                add(v)
        elif isinstance(el, OptionalBlock):
            for name in _pattern_vars(el.pattern):
                if name not in seen:
                    seen.append(name)
    return seen


def _projected_var_names(projection: Projection, pattern: GroupPattern, group_by) -> list[str]:
    if projection.star:
        return _pattern_vars(pattern)
    names: list[str] = []
    for expr, alias in projection.items:
        if alias is not None:
            names.append(alias.name)
        elif isinstance(expr, Var):
            names.append(expr.name)
    return names


def _lexical_scan(tokens: list[Token], text: str) -> tuple[dict[str, str], set[str]]:
    """Prefix map and referenced IRIs straight from the token stream."""
    prefixes: dict[str, str] = {}
    iris: set[str] = set()
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.kind == "NAME" and tok.text.upper() == "PREFIX" and i + 2 <= len(tokens):
            nxt = tokens[i + 1]
            if nxt.kind in ("COLONNAME", "PNAME") and i + 2 < len(tokens) and tokens[i + 2].kind == "IRI":
                prefixes[nxt.text.rstrip(":").partition(":")[0]] = tokens[i + 2].text[1:-1]
                i += 3
                continue
        if tok.kind == "IRI":
            iris.add(tok.text[1:-1])
        i += 1
    for tok in tokens:
        if tok.kind == "PNAME":
            prefix, _, local = tok.text.partition(":")
            ns = prefixes.get(prefix) or STANDARD_PREFIXES.get(prefix)
            if ns:
                iris.add(ns + local)
    return prefixes, iris


def _check_balanced(tokens: list[Token], text: str):
    stack: list[Token] = []
    pairs = {"}": "{", ")": "("}
    for tok in tokens:
        if tok.kind != "OP":
            continue
        if tok.text in ("{", "("):
            stack.append(tok)
        elif tok.text in pairs:
            if not stack or stack[-1].text != pairs[tok.text]:
                raise ParseError(f"unbalanced {tok.text!r}", offset=tok.pos)
            stack.pop()
    if stack:
        raise ParseError(f"unclosed {stack[-1].text!r}", offset=stack[-1].pos)


def parse_query(text: str) -> ParsedQuery:
    """Parse a SPARQL query into a ParsedQuery.

    Raises ParseError (with offset) on syntax errors and
    UnsupportedFormError on CONSTRUCT/DESCRIBE/update forms. Queries using
    read-only features outside the subset come back with
    ``analyzable=False`` and only lexically-derived metadata.
    """
    if not text or not text.strip():
        raise PreconditionError("query text must be non-empty")
    tokens = tokenize(text)
    try:
        return _Parser(tokens, text).parse_query_body()
    except UnsupportedFormError:
        raise
    except ParseError:
        _check_balanced(tokens, text)
        has_extension = any(
            tok.kind == "NAME" and tok.text.upper() in PASSTHROUGH_KEYWORDS for tok in tokens
        )
        form_tok = next((t for t in tokens if t.kind == "NAME" and t.text.upper() in ("SELECT", "ASK")), None)
        if not has_extension or form_tok is None:
            raise
        prefixes, iris = _lexical_scan(tokens, text)
        return ParsedQuery(
            text=text,
            form=form_tok.text.upper(),
            projected_vars=[],
            referenced_iris=iris,
            prefix_map=prefixes,
            analyzable=False,
        )


# ---------------------------------------------------------------------------
# serializer

def _serialize_term(term: Term) -> str:
    if isinstance(term, Literal):
        if term.language is None and term.datatype in (XSD_INTEGER, XSD_DECIMAL, XSD_DOUBLE):
            return term.value
        if term.language is None and term.datatype == XSD_BOOLEAN:
            return term.value
    return term.n3()


def _serialize_expr(expr: Expr) -> str:
    if isinstance(expr, Var):
        return f"?{expr.name}"
    if isinstance(expr, TermExpr):
        return _serialize_term(expr.term)
    if isinstance(expr, BinaryOp):
        return f"({_serialize_expr(expr.left)} {expr.op} {_serialize_expr(expr.right)})"
    if isinstance(expr, UnaryOp):
        return f"{expr.op}({_serialize_expr(expr.operand)})"
    if isinstance(expr, FunctionCall):
        return f"{expr.name}({', '.join(_serialize_expr(a) for a in expr.args)})"
    if isinstance(expr, Aggregate):
        inner = "*" if expr.expr is None else _serialize_expr(expr.expr)
        if expr.distinct:
            inner = f"DISTINCT {inner}"
        return f"{expr.func}({inner})"
    raise TypeError(f"cannot serialize {expr!r}")


def _serialize_pattern_node(s) -> str:
    if isinstance(s, Var):
        return f"?{s.name}"
    return _serialize_term(s)


def _serialize_group(pattern: GroupPattern, indent: str) -> str:
    lines = ["{"]
    inner = indent + "  "
    for el in pattern.elements:
        if isinstance(el, TriplePattern):
            lines.append(
                f"{inner}{_serialize_pattern_node(el.s)} {_serialize_pattern_node(el.p)} {_serialize_pattern_node(el.o)} ."
            )
        elif isinstance(el, FilterClause):
            lines.append(f"{inner}FILTER ({_serialize_expr(el.expr)})")
        elif isinstance(el, BindClause):
            lines.append(f"{inner}BIND({_serialize_expr(el.expr)} AS ?{el.var.name})")
        elif isinstance(el, ValuesClause):
            heads = " ".join(f"?{v.name}" for v in el.vars)
            rows = []
            for row in el.rows:
                cells = " ".join("UNDEF" if t is None else _serialize_term(t) for t in row)
                rows.append(f"({cells})")
            lines.append(f"{inner}VALUES ({heads}) {{ {' '.join(rows)} }}")
        elif isinstance(el, OptionalBlock):
            lines.append(f"{inner}OPTIONAL {_serialize_group(el.pattern, inner)}")
    lines.append(indent + "}")
    return "\n".join(lines)


def serialize_query(q: ParsedQuery) -> str:
    """Normalized text form; parse(serialize(parse(t))) is a fixpoint."""
    if not q.analyzable:
        return q.text
    parts: list[str] = []
    for prefix in sorted(q.prefix_map):
        parts.append(f"PREFIX {prefix}: <{q.prefix_map[prefix]}>")
    if q.form == "ASK":
        head = "ASK"
    else:
        head = "SELECT"
        if q.distinct:
            head += " DISTINCT"
        if q.projection.star:
            head += " *"
        else:
            for expr, alias in q.projection.items:
                if alias is None:
                    head += f" {_serialize_expr(expr)}"
                else:
                    head += f" ({_serialize_expr(expr)} AS ?{alias.name})"
    parts.append(head)
    parts.append("WHERE " + _serialize_group(q.pattern, ""))
    if q.group_by:
        keys = " ".join(
            _serialize_expr(e) if isinstance(e, Var) else f"({_serialize_expr(e)})" for e in q.group_by
        )
        parts.append(f"GROUP BY {keys}")
    if q.order_by:
        keys = []
        for expr, ascending in q.order_by:
            if ascending and isinstance(expr, Var):
                keys.append(_serialize_expr(expr))
            else:
                keys.append(f"{'ASC' if ascending else 'DESC'}({_serialize_expr(expr)})")
        parts.append("ORDER BY " + " ".join(keys))
    if q.limit is not None:
        parts.append(f"LIMIT {q.limit}")
    if q.offset is not None:
        parts.append(f"OFFSET {q.offset}")
    return "\n".join(parts)
