"""Tiny in-process triple store with a SPARQL-subset evaluator.

Backs the bundled fixture endpoint for tests and demos. Supports exactly
the subset the parser analyzes: BGP joins, OPTIONAL left joins, FILTER,
BIND, VALUES, GROUP BY with COUNT/SUM/AVG/MIN/MAX, ORDER BY, DISTINCT,
LIMIT/OFFSET, SELECT and ASK.
"""

from __future__ import annotations

import re
from typing import Iterable, Optional, Union

from ..errors import PreconditionError
from .parser import (
    Aggregate,
    BinaryOp,
    BindClause,
    Expr,
    FilterClause,
    FunctionCall,
    GroupPattern,
    OptionalBlock,
    ParsedQuery,
    TermExpr,
    TriplePattern,
    UnaryOp,
    ValuesClause,
    Var,
)
from .results import ResultSet
from .terms import BNode, Iri, Literal, Term, typed_literal

Triple = tuple[Term, Term, Term]
Binding = dict[str, Term]


class _EvalError(Exception):
    """Expression evaluation failure; FILTER treats it as false."""


class TripleStore:
    def __init__(self, triples: Iterable[Triple] = ()):
        self._triples: list[Triple] = list(triples)

    def add(self, s: Term, p: Term, o: Term):
        self._triples.append((s, p, o))

    def load_turtle(self, text: str):
        from .turtle import parse_turtle

        for triple in parse_turtle(text):
            self._triples.append(triple)

    def __len__(self) -> int:
        return len(self._triples)

    def triples(self) -> list[Triple]:
        return list(self._triples)

    # -- evaluation --------------------------------------------------------

    def query(self, q: ParsedQuery) -> ResultSet:
        if not q.analyzable:
            raise PreconditionError("query uses features outside the fixture-store subset")
        solutions = self._eval_group(q.pattern, [{}])

        if q.form == "ASK":
            return ResultSet(variables=[], rows=[], boolean=bool(solutions))

        if q.group_by or _projection_has_aggregate(q):
            rows = self._eval_grouped(q, solutions)
        else:
            rows = [self._project(q, sol) for sol in solutions]

        if q.distinct:
            seen = set()
            unique = []
            for row in rows:
                key = tuple(sorted((k, v) for k, v in row.items()))
                if key not in seen:
                    seen.add(key)
                    unique.append(row)
            rows = unique

        for expr, ascending in reversed(q.order_by):
            rows.sort(key=lambda row: _sort_key(expr, row), reverse=not ascending)

        if q.offset:
            rows = rows[q.offset:]
        if q.limit is not None:
            rows = rows[: q.limit]

        variables = list(q.projected_vars)
        clean = [{k: v for k, v in row.items() if k in variables and v is not None} for row in rows]
        return ResultSet(variables=variables, rows=clean)

    def _eval_group(self, pattern: GroupPattern, solutions: list[Binding]) -> list[Binding]:
        for el in pattern.elements:
            if isinstance(el, TriplePattern):
                solutions = self._join_triple(el, solutions)
            elif isinstance(el, OptionalBlock):
                extended: list[Binding] = []
                for sol in solutions:
                    matches = self._eval_group(el.pattern, [dict(sol)])
                    extended.extend(matches if matches else [sol])
                solutions = extended
            elif isinstance(el, FilterClause):
                solutions = [sol for sol in solutions if _filter_true(el.expr, sol)]
            elif isinstance(el, BindClause):
                out = []
                for sol in solutions:
                    sol = dict(sol)
                    try:
                        sol[el.var.name] = _eval_term(el.expr, sol)
                    except _EvalError:
                        pass  # BIND errors leave the variable unbound
                    out.append(sol)
                solutions = out
            elif isinstance(el, ValuesClause):
                joined = []
                for sol in solutions:
                    for row in el.rows:
                        candidate = dict(sol)
                        compatible = True
                        for var, term in zip(el.vars, row):
                            if term is None:
                                continue
                            existing = candidate.get(var.name)
                            if existing is not None and existing != term:
                                compatible = False
                                break
                            candidate[var.name] = term
                        if compatible:
                            joined.append(candidate)
                solutions = joined
        return solutions

    def _join_triple(self, tp: TriplePattern, solutions: list[Binding]) -> list[Binding]:
        out: list[Binding] = []
        for sol in solutions:
            for s, p, o in self._triples:
                extended = _match(tp, (s, p, o), sol)
                if extended is not None:
                    out.append(extended)
        return out

    # -- projection & grouping --------------------------------------------

    def _project(self, q: ParsedQuery, sol: Binding) -> Binding:
        if q.projection.star:
            return {name: sol[name] for name in q.projected_vars if name in sol}
        row: Binding = {}
        for expr, alias in q.projection.items:
            name = alias.name if alias else expr.name  # type: ignore[union-attr]
            try:
                row[name] = _eval_term(expr, sol)
            except _EvalError:
                pass
        return row

    def _eval_grouped(self, q: ParsedQuery, solutions: list[Binding]) -> list[Binding]:
        groups: dict[tuple, list[Binding]] = {}
        order: list[tuple] = []
        for sol in solutions:
            key_terms = []
            for expr in q.group_by:
                try:
                    key_terms.append(_eval_term(expr, sol))
                except _EvalError:
                    key_terms.append(None)
            key = tuple(key_terms)
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(sol)
        if not q.group_by and not groups:
            # implicit single group over an empty solution sequence
            groups[()] = []
            order.append(())

        rows: list[Binding] = []
        for key in order:
            members = groups[key]
            key_binding: Binding = {}
            for expr, term in zip(q.group_by, key):
                if isinstance(expr, Var) and term is not None:
                    key_binding[expr.name] = term
            row: Binding = {}
            for expr, alias in q.projection.items:
                name = alias.name if alias else expr.name  # type: ignore[union-attr]
                try:
                    row[name] = _eval_aggregate_expr(expr, members, key_binding)
                except _EvalError:
                    pass
            rows.append(row)
        return rows


def _projection_has_aggregate(q: ParsedQuery) -> bool:
    if q.projection.star:
        return False

    def contains(expr: Expr) -> bool:
        if isinstance(expr, Aggregate):
            return True
        if isinstance(expr, BinaryOp):
            return contains(expr.left) or contains(expr.right)
        if isinstance(expr, UnaryOp):
            return contains(expr.operand)
        if isinstance(expr, FunctionCall):
            return any(contains(a) for a in expr.args)
        return False

    return any(contains(expr) for expr, _ in q.projection.items)


def _match(tp: TriplePattern, triple: Triple, sol: Binding) -> Optional[Binding]:
    extended = dict(sol)
    for node, term in zip((tp.s, tp.p, tp.o), triple):
        if isinstance(node, Var):
            existing = extended.get(node.name)
            if existing is None:
                extended[node.name] = term
            elif existing != term:
                return None
        elif node != term:
            return None
    return extended


# ---------------------------------------------------------------------------
# expression evaluation

def _to_py(term: Term):
    if isinstance(term, Literal):
        return term.as_python()
    return term


def _eval_py(expr: Expr, sol: Binding):
    """Evaluate to a Python value (numbers, strings, bools, Iri, BNode)."""
    if isinstance(expr, Var):
        if expr.name not in sol:
            raise _EvalError(f"unbound variable ?{expr.name}")
        return _to_py(sol[expr.name])
    if isinstance(expr, TermExpr):
        return _to_py(expr.term)
    if isinstance(expr, UnaryOp):
        val = _eval_py(expr.operand, sol)
        if expr.op == "!":
            return not _truthy(val)
        if expr.op == "-":
            return -_numeric(val)
        raise _EvalError(f"unknown unary operator {expr.op}")
    if isinstance(expr, BinaryOp):
        return _eval_binary(expr, sol)
    if isinstance(expr, FunctionCall):
        return _eval_function(expr, sol)
    if isinstance(expr, Aggregate):
        raise _EvalError("aggregate outside a grouped projection")
    raise _EvalError(f"cannot evaluate {expr!r}")


def _eval_binary(expr: BinaryOp, sol: Binding):
    op = expr.op
    if op == "&&":
        return _truthy(_eval_py(expr.left, sol)) and _truthy(_eval_py(expr.right, sol))
    if op == "||":
        # SPARQL || is true if either side is true, even if the other errors
        left_err = right_err = False
        left = right = False
        try:
            left = _truthy(_eval_py(expr.left, sol))
        except _EvalError:
            left_err = True
        try:
            right = _truthy(_eval_py(expr.right, sol))
        except _EvalError:
            right_err = True
        if left or right:
            return True
        if left_err or right_err:
            raise _EvalError("|| operand error")
        return False
    left = _eval_py(expr.left, sol)
    right = _eval_py(expr.right, sol)
    if op in ("+", "-", "*", "/"):
        lnum, rnum = _numeric(left), _numeric(right)
        if op == "+":
            return lnum + rnum
        if op == "-":
            return lnum - rnum
        if op == "*":
            return lnum * rnum
        if rnum == 0:
            raise _EvalError("division by zero")
        result = lnum / rnum
        return result
    if op in ("=", "!="):
        equal = _compare_equal(left, right)
        return equal if op == "=" else not equal
    if op in ("<", "<=", ">", ">="):
        lk, rk = _comparable(left), _comparable(right)
        if type(lk) is not type(rk) and not (isinstance(lk, (int, float)) and isinstance(rk, (int, float))):
            raise _EvalError("incomparable operands")
        if op == "<":
            return lk < rk
        if op == "<=":
            return lk <= rk
        if op == ">":
            return lk > rk
        return lk >= rk
    raise _EvalError(f"unknown operator {op}")


def _compare_equal(left, right) -> bool:
    if isinstance(left, (int, float)) and isinstance(right, (int, float)):
        return float(left) == float(right)
    if isinstance(left, Iri) and isinstance(right, Iri):
        return left.value == right.value
    return left == right


def _comparable(val):
    if isinstance(val, bool):
        return int(val)
    if isinstance(val, (int, float)):
        return float(val)
    if isinstance(val, Iri):
        return val.value
    if isinstance(val, BNode):
        return val.label
    return val


def _truthy(val) -> bool:
    if isinstance(val, bool):
        return val
    if isinstance(val, (int, float)):
        return val != 0
    if isinstance(val, str):
        return len(val) > 0
    raise _EvalError(f"no effective boolean value for {val!r}")


def _numeric(val) -> Union[int, float]:
    if isinstance(val, bool):
        raise _EvalError("boolean is not numeric")
    if isinstance(val, (int, float)):
        return val
    raise _EvalError(f"not a number: {val!r}")


def _eval_function(expr: FunctionCall, sol: Binding):
    name = expr.name
    if name == "BOUND":
        arg = expr.args[0] if expr.args else None
        if not isinstance(arg, Var):
            raise _EvalError("BOUND requires a variable")
        return arg.name in sol
    if name == "COALESCE":
        for arg in expr.args:
            try:
                return _eval_py(arg, sol)
            except _EvalError:
                continue
        raise _EvalError("all COALESCE branches errored")
    if name == "IF":
        cond, then, alt = expr.args
        return _eval_py(then if _truthy(_eval_py(cond, sol)) else alt, sol)

    args = [_eval_py(a, sol) for a in expr.args]
    if name == "STR":
        val = args[0]
        if isinstance(val, Iri):
            return val.value
        if isinstance(val, bool):
            return "true" if val else "false"
        return str(val)
    if name == "STRLEN":
        return len(str(args[0]))
    if name == "UCASE":
        return str(args[0]).upper()
    if name == "LCASE":
        return str(args[0]).lower()
    if name == "CONCAT":
        return "".join(str(a) for a in args)
    if name == "CONTAINS":
        return str(args[1]) in str(args[0])
    if name == "STRSTARTS":
        return str(args[0]).startswith(str(args[1]))
    if name == "STRENDS":
        return str(args[0]).endswith(str(args[1]))
    if name == "REGEX":
        flags = re.I if len(args) > 2 and "i" in str(args[2]) else 0
        return re.search(str(args[1]), str(args[0]), flags) is not None
    if name == "ABS":
        return abs(_numeric(args[0]))
    if name == "FLOOR":
        import math

        return float(math.floor(_numeric(args[0])))
    if name == "CEIL":
        import math

        return float(math.ceil(_numeric(args[0])))
    if name == "ROUND":
        import math

        return float(math.floor(_numeric(args[0]) + 0.5))
    if name == "YEAR":
        m = re.match(r"(-?\d{4})", str(args[0]))
        if not m:
            raise _EvalError(f"cannot extract year from {args[0]!r}")
        return int(m.group(1))
    if name == "ISIRI" or name == "ISURI":
        return isinstance(args[0], Iri)
    if name == "ISLITERAL":
        return not isinstance(args[0], (Iri, BNode))
    if name == "ISBLANK":
        return isinstance(args[0], BNode)
    raise _EvalError(f"unsupported function {name}")


def _eval_term(expr: Expr, sol: Binding) -> Term:
    if isinstance(expr, Var):
        if expr.name not in sol:
            raise _EvalError(f"unbound variable ?{expr.name}")
        return sol[expr.name]
    if isinstance(expr, TermExpr):
        return expr.term
    val = _eval_py(expr, sol)
    if isinstance(val, (Iri, BNode, Literal)):
        return val
    return typed_literal(val)


def _filter_true(expr: Expr, sol: Binding) -> bool:
    try:
        return _truthy(_eval_py(expr, sol))
    except _EvalError:
        return False


def _eval_aggregate_expr(expr: Expr, members: list[Binding], key_binding: Binding) -> Term:
    """Evaluate a projection expression in grouped context."""
    if isinstance(expr, Aggregate):
        return typed_literal(_compute_aggregate(expr, members))
    if isinstance(expr, Var):
        if expr.name in key_binding:
            return key_binding[expr.name]
        # sample semantics: take the value from the first member
        for member in members:
            if expr.name in member:
                return member[expr.name]
        raise _EvalError(f"unbound group variable ?{expr.name}")
    if isinstance(expr, BinaryOp):
        left = _to_py(_eval_aggregate_expr(expr.left, members, key_binding))
        right = _to_py(_eval_aggregate_expr(expr.right, members, key_binding))
        return typed_literal(_eval_binary(BinaryOp(expr.op, TermExpr(typed_literal(left)), TermExpr(typed_literal(right))), {}))
    if isinstance(expr, (TermExpr, FunctionCall, UnaryOp)):
        merged = dict(key_binding)
        if members:
            merged = {**members[0], **key_binding}
        return _eval_term(expr, merged)
    raise _EvalError(f"cannot evaluate grouped expression {expr!r}")


def _compute_aggregate(agg: Aggregate, members: list[Binding]):
    if agg.expr is None:  # COUNT(*)
        if agg.distinct:
            return len({tuple(sorted(m.items(), key=lambda kv: kv[0])) for m in members})
        return len(members)
    values = []
    for member in members:
        try:
            values.append(_eval_py(agg.expr, member))
        except _EvalError:
            continue
    if agg.distinct:
        unique = []
        for v in values:
            if v not in unique:
                unique.append(v)
        values = unique
    if agg.func == "COUNT":
        return len(values)
    if not values:
        raise _EvalError(f"{agg.func} over an empty group")
    if agg.func == "SUM":
        return sum(_numeric(v) for v in values)
    if agg.func == "AVG":
        nums = [_numeric(v) for v in values]
        return sum(nums) / len(nums)
    if agg.func == "MIN":
        return min(values, key=_comparable)
    if agg.func == "MAX":
        return max(values, key=_comparable)
    raise _EvalError(f"unsupported aggregate {agg.func}")


def _sort_key(expr: Expr, row: Binding):
    name = expr.name if isinstance(expr, Var) else None
    try:
        if name is not None:
            if name not in row:
                return (0, 0)  # unbound sorts first
            val = _to_py(row[name])
        else:
            val = _eval_py(expr, row)
    except _EvalError:
        return (0, 0)
    if isinstance(val, bool):
        return (1, int(val))
    if isinstance(val, (int, float)):
        return (1, float(val))
    if isinstance(val, Iri):
        return (2, val.value)
    if isinstance(val, BNode):
        return (2, val.label)
    return (3, str(val))
