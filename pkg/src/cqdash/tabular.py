"""Typed tables from SPARQL result sets, aggregation, and chart specs.

A Dataset is an ordered set of typed columns plus provenance; a ChartSpec
is a renderer-agnostic description validated against the Dataset it binds
to. Everything here is pure over immutable inputs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

from .errors import AggregationError
from .sparql.results import ResultSet
from .sparql.terms import BNode, Iri, Literal

#: explicit missing-cell marker
MISSING = None

COLUMN_TYPES = ("string", "integer", "decimal", "boolean", "date", "iri")
CHART_KINDS = ("bar", "stacked-bar", "line", "pie", "scatter", "table")
AGGREGATES = ("none", "count", "sum", "avg", "min", "max")

UNKNOWN_GROUP_LABEL = "(unknown)"

_DATATYPE_MAP = {
    "http://www.w3.org/2001/XMLSchema#integer": "integer",
    "http://www.w3.org/2001/XMLSchema#int": "integer",
    "http://www.w3.org/2001/XMLSchema#long": "integer",
    "http://www.w3.org/2001/XMLSchema#nonNegativeInteger": "integer",
    "http://www.w3.org/2001/XMLSchema#decimal": "decimal",
    "http://www.w3.org/2001/XMLSchema#double": "decimal",
    "http://www.w3.org/2001/XMLSchema#float": "decimal",
    "http://www.w3.org/2001/XMLSchema#boolean": "boolean",
    "http://www.w3.org/2001/XMLSchema#date": "date",
    "http://www.w3.org/2001/XMLSchema#dateTime": "date",
    "http://www.w3.org/2001/XMLSchema#gYear": "date",
}


@dataclass(frozen=True)
class Column:
    name: str
    type: str  # one of COLUMN_TYPES


@dataclass(frozen=True)
class Provenance:
    query_text: str = ""
    endpoint: str = ""
    retrieved_at: str = ""
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class Dataset:
    columns: tuple[Column, ...]
    rows: tuple[tuple, ...]
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        for i, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise ValueError(f"row {i} arity {len(row)} != column count {len(self.columns)}")

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise KeyError(name)

    def column(self, name: str) -> Column:
        return self.columns[self.column_index(name)]


@dataclass(frozen=True)
class Encoding:
    column: str
    binning: Optional[str] = None  # currently only "decade"
    aggregate: str = "none"


@dataclass(frozen=True)
class ChartSpec:
    kind: str
    x: Optional[Encoding] = None
    y: Optional[Encoding] = None
    series: Optional[str] = None
    title: str = ""
    sort: Optional[tuple[str, str]] = None  # (column, "asc"|"desc")


# ---------------------------------------------------------------------------
# tabulation

def _classify(term) -> str:
    if isinstance(term, Iri):
        return "iri"
    if isinstance(term, BNode):
        return "iri"
    if isinstance(term, Literal):
        if term.language is not None:
            return "string"
        if term.datatype in _DATATYPE_MAP:
            return _DATATYPE_MAP[term.datatype]
        return "string"
    return "string"


def _cell_value(term, col_type: str):
    if isinstance(term, (Iri,)):
        return term.value if col_type == "iri" else MISSING
    if isinstance(term, BNode):
        return f"_:{term.label}" if col_type == "iri" else MISSING
    if isinstance(term, Literal):
        kind = _classify(term)
        if kind != col_type:
            # integers coerce losslessly into a decimal column
            if kind == "integer" and col_type == "decimal":
                return float(term.value)
            return MISSING
        if col_type == "integer":
            return int(term.value)
        if col_type == "decimal":
            return float(term.value)
        if col_type == "boolean":
            return term.value.strip().lower() in ("true", "1")
        return term.value
    return MISSING


def tabulate(rs: ResultSet, query_text: str = "", endpoint: str = "", retrieved_at: str = "") -> Dataset:
    """Turn a SELECT result into a typed Dataset.

    Column types come from a majority vote over each variable's bound
    literal datatypes, with string fallback; cells that lose the vote
    become the missing marker and a coercion warning is recorded.
    """
    warnings: list[str] = []
    columns: list[Column] = []
    for var in rs.variables:
        counts: dict[str, int] = {}
        for row in rs.rows:
            term = row.get(var)
            if term is None:
                continue
            kind = _classify(term)
            counts[kind] = counts.get(kind, 0) + 1
        if not counts:
            col_type = "string"
        else:
            # majority wins; ties break on the fixed type order for determinism
            col_type = max(counts, key=lambda k: (counts[k], -COLUMN_TYPES.index(k)))
        columns.append(Column(var, col_type))

    rows: list[tuple] = []
    coerced: dict[str, int] = {}
    for row in rs.rows:
        cells = []
        for col in columns:
            term = row.get(col.name)
            if term is None:
                cells.append(MISSING)
                continue
            value = _cell_value(term, col.type)
            if value is MISSING:
                coerced[col.name] = coerced.get(col.name, 0) + 1
            cells.append(value)
        rows.append(tuple(cells))
    for name, count in sorted(coerced.items()):
        warnings.append(
            f"column {name!r}: {count} cell(s) did not match the inferred type and were treated as missing"
        )
    provenance = Provenance(
        query_text=query_text, endpoint=endpoint, retrieved_at=retrieved_at, warnings=tuple(warnings)
    )
    return Dataset(columns=tuple(columns), rows=tuple(rows), provenance=provenance)


# ---------------------------------------------------------------------------
# aggregation

def _decade_of(value) -> Optional[int]:
    try:
        if isinstance(value, str):
            value = int(value[:4])
        year = int(value)
    except (TypeError, ValueError):
        return None
    return (year // 10) * 10


def decade_label(year) -> str:
    decade = _decade_of(year)
    return UNKNOWN_GROUP_LABEL if decade is None else f"{decade}s"


def aggregate(
    d: Dataset,
    group_by: str,
    measure: str = "count",
    measure_column: Optional[str] = None,
    binning: Optional[str] = None,
) -> Dataset:
    """Group rows and fold a measure; deterministic ascending group order.

    Missing group keys collect under the "(unknown)" label rather than
    being dropped. ``binning`` currently supports "decade".
    """
    if measure not in ("count", "sum", "avg", "min", "max"):
        raise AggregationError(f"unknown aggregate {measure!r}")
    try:
        group_idx = d.column_index(group_by)
    except KeyError:
        raise AggregationError(f"group-by column {group_by!r} does not exist") from None
    measure_idx = None
    if measure != "count":
        if measure_column is None:
            raise AggregationError(f"aggregate {measure!r} requires a measure column")
        try:
            measure_idx = d.column_index(measure_column)
        except KeyError:
            raise AggregationError(f"measure column {measure_column!r} does not exist") from None
        mtype = d.columns[measure_idx].type
        if mtype not in ("integer", "decimal"):
            raise AggregationError(
                f"measure column {measure_column!r} has type {mtype!r}, expected integer or decimal"
            )

    groups: dict = {}
    for row in d.rows:
        raw_key = row[group_idx]
        if binning == "decade":
            decade = _decade_of(raw_key) if raw_key is not MISSING else None
            key = UNKNOWN_GROUP_LABEL if decade is None else f"{decade}s"
            sort_key = (1, "") if decade is None else (0, decade)
        elif raw_key is MISSING:
            key = UNKNOWN_GROUP_LABEL
            sort_key = (1, "")
        else:
            key = raw_key
            sort_key = (0, raw_key)
        groups.setdefault((sort_key, key), []).append(row)

    group_type = "string" if binning == "decade" else d.columns[group_idx].type
    if any(key == UNKNOWN_GROUP_LABEL for (_, key) in groups):
        group_type = "string"
    if measure == "count":
        measure_type = "integer"
        measure_name = "count"
    elif measure == "avg":
        measure_type = "decimal"
        measure_name = f"avg_{measure_column}"
    else:
        measure_type = d.columns[measure_idx].type if measure_idx is not None else "decimal"
        measure_name = f"{measure}_{measure_column}"

    def sortable(sk):
        marker, val = sk
        if isinstance(val, bool):
            val = int(val)
        if isinstance(val, (int, float)):
            return (marker, 0, float(val), "")
        return (marker, 1, 0.0, str(val))

    rows = []
    for (sort_key, key) in sorted(groups, key=lambda item: sortable(item[0])):
        members = groups[(sort_key, key)]
        if measure == "count":
            value = len(members)
        else:
            values = [m[measure_idx] for m in members if m[measure_idx] is not MISSING]
            if not values:
                value = MISSING
            elif measure == "sum":
                value = sum(values)
            elif measure == "avg":
                value = sum(values) / len(values)
            elif measure == "min":
                value = min(values)
            else:
                value = max(values)
        rows.append((key, value))

    group_name = f"{group_by}_decade" if binning == "decade" else group_by
    columns = (Column(group_name, group_type), Column(measure_name, measure_type))
    return Dataset(columns=columns, rows=tuple(rows), provenance=d.provenance)


# ---------------------------------------------------------------------------
# chart validation and defaults

def validate_chart(spec: ChartSpec, d: Dataset) -> list[str]:
    """Empty list iff the spec is coherent against the dataset."""
    violations: list[str] = []
    if spec.kind not in CHART_KINDS:
        violations.append(f"unknown chart kind {spec.kind!r}")
        return violations
    if spec.kind == "table":
        return violations  # table ignores encodings entirely
    names = set(d.column_names())
    for label, enc in (("x", spec.x), ("y", spec.y)):
        if enc is None:
            violations.append(f"{spec.kind} chart requires an {label} encoding")
            continue
        if enc.column not in names:
            violations.append(f"{label} references nonexistent column {enc.column!r}")
        if enc.aggregate not in AGGREGATES:
            violations.append(f"{label} has unknown aggregate {enc.aggregate!r}")
    if spec.series is not None and spec.series not in names:
        violations.append(f"series references nonexistent column {spec.series!r}")
    if spec.sort is not None:
        col, direction = spec.sort
        if col not in names:
            violations.append(f"sort references nonexistent column {col!r}")
        if direction not in ("asc", "desc"):
            violations.append(f"sort direction must be 'asc' or 'desc', got {direction!r}")
    if spec.kind == "pie":
        measures = [
            enc for enc in (spec.x, spec.y) if enc is not None and (enc.aggregate != "none" or _is_measure(d, enc))
        ]
        categories = [enc for enc in (spec.x, spec.y) if enc is not None and enc not in measures]
        if spec.series is not None:
            violations.append("pie charts take exactly one category and one measure; series is not allowed")
        if len(measures) != 1 or len(categories) != 1:
            violations.append("pie charts require exactly one category and one measure")
    return violations


def _is_measure(d: Dataset, enc: Encoding) -> bool:
    try:
        return d.column(enc.column).type in ("integer", "decimal")
    except KeyError:
        return False


def default_chart(d: Dataset) -> ChartSpec:
    """Deterministic fallback chart; always valid for the dataset."""
    if len(d.columns) != 2:
        return ChartSpec(kind="table", title="Results")
    first, second = d.columns
    if first.type in ("string", "iri", "boolean") and second.type in ("integer", "decimal"):
        return ChartSpec(
            kind="bar",
            x=Encoding(first.name),
            y=Encoding(second.name),
            title=f"{second.name} by {first.name}",
        )
    if first.type in ("date", "integer", "decimal") and second.type in ("integer", "decimal"):
        return ChartSpec(
            kind="line",
            x=Encoding(first.name),
            y=Encoding(second.name),
            title=f"{second.name} over {first.name}",
        )
    return ChartSpec(kind="table", title="Results")


# ---------------------------------------------------------------------------
# serialization

CHART_DOCUMENT_VERSION = 1


def chart_document(spec: ChartSpec, d: Dataset) -> dict:
    """Versioned JSON contract consumed by the dashboard and bundles."""

    def encode_encoding(enc: Optional[Encoding]):
        if enc is None:
            return None
        return {"column": enc.column, "binning": enc.binning, "aggregate": enc.aggregate}

    return {
        "chart_version": CHART_DOCUMENT_VERSION,
        "kind": spec.kind,
        "title": spec.title,
        "x": encode_encoding(spec.x),
        "y": encode_encoding(spec.y),
        "series": spec.series,
        "sort": list(spec.sort) if spec.sort else None,
        "columns": [{"name": c.name, "type": c.type} for c in d.columns],
        "data": {
            c.name: [row[i] for row in d.rows] for i, c in enumerate(d.columns)
        },
    }


def chart_spec_from_document(doc: dict) -> ChartSpec:
    def decode_encoding(raw) -> Optional[Encoding]:
        if raw is None:
            return None
        return Encoding(
            column=raw["column"], binning=raw.get("binning"), aggregate=raw.get("aggregate", "none")
        )

    sort = doc.get("sort")
    return ChartSpec(
        kind=doc["kind"],
        x=decode_encoding(doc.get("x")),
        y=decode_encoding(doc.get("y")),
        series=doc.get("series"),
        title=doc.get("title", ""),
        sort=(sort[0], sort[1]) if sort else None,
    )


def dataset_from_document(doc: dict) -> Dataset:
    columns = tuple(Column(c["name"], c["type"]) for c in doc["columns"])
    length = max((len(v) for v in doc["data"].values()), default=0)
    rows = tuple(
        tuple(doc["data"][c.name][i] for c in columns) for i in range(length)
    )
    return Dataset(columns=columns, rows=rows)


def to_csv(d: Dataset) -> str:
    """RFC-4180 CSV of the dataset only (no chart metadata)."""
    out = io.StringIO()
    writer = csv.writer(out, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    writer.writerow(d.column_names())
    for row in d.rows:
        writer.writerow(["" if cell is MISSING else cell for cell in row])
    return out.getvalue()
