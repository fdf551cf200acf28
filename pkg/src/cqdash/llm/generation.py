"""Schema-grounded query generation, repair, interpretation, and chart
suggestion on top of the provider abstraction.

Model rationale text is display-only; control flow depends only on the
extracted fenced query / parsed chart suggestion, never on prose.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from ..errors import (
    ExtractionError,
    PreconditionError,
    ProviderError,
    RepairExhaustedError,
)
from ..schema import GraphSchema, schema_summary
from ..tabular import (
    ChartSpec,
    Dataset,
    Encoding,
    MISSING,
    default_chart,
    validate_chart,
)
from .providers import ChatMessage, LlmConfig, LlmRequest, LlmResponse, ProviderRegistry

MAX_REPAIR_ATTEMPTS = 3
SCHEMA_SUMMARY_BUDGET = 8000
DATA_ROW_CAP = 50

_FENCE_RE = re.compile(r"```(?:[A-Za-z0-9_+-]*)\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class CandidateQuery:
    sparql_text: str
    rationale: str  # display-only
    attempt: int
    diagnostics: tuple[str, ...] = ()


@dataclass(frozen=True)
class Interpretation:
    summary: str
    explanation: str
    caveats: tuple[str, ...]
    generator: str  # "curated" or "llm:<model_id>"


def extract_fenced_query(content: str) -> str:
    """Last fenced code block wins; no block is an extraction failure."""
    blocks = _FENCE_RE.findall(content)
    if not blocks:
        raise ExtractionError("model output contains no fenced query block")
    return blocks[-1].strip()


def _column_summaries(data: Dataset) -> list[str]:
    lines = []
    for i, col in enumerate(data.columns):
        values = [row[i] for row in data.rows if row[i] is not MISSING]
        distinct = len(set(values))
        if col.type in ("integer", "decimal") and values:
            lines.append(
                f"  {col.name} ({col.type}): min={min(values)}, max={max(values)}, distinct={distinct}"
            )
        else:
            lines.append(f"  {col.name} ({col.type}): distinct={distinct}")
    return lines


def serialize_data_sample(data: Dataset, row_cap: int = DATA_ROW_CAP) -> tuple[str, bool]:
    """Size-capped tabular serialization for prompts; never cuts mid-row."""
    sampled = len(data.rows) > row_cap
    rows = data.rows[:row_cap]
    lines = ["Columns:"]
    lines.extend(_column_summaries(data))
    lines.append(f"Rows ({len(rows)} of {len(data.rows)} shown):")
    header = " | ".join(c.name for c in data.columns)
    lines.append("  " + header)
    for row in rows:
        lines.append("  " + " | ".join("∅" if cell is MISSING else str(cell) for cell in row))
    return "\n".join(lines), sampled


class NeuralLayer:
    def __init__(
        self,
        registry: ProviderRegistry,
        schema_budget: int = SCHEMA_SUMMARY_BUDGET,
        max_repair_attempts: int = MAX_REPAIR_ATTEMPTS,
        data_row_cap: int = DATA_ROW_CAP,
    ):
        self.registry = registry
        self.schema_budget = schema_budget
        self.max_repair_attempts = max_repair_attempts
        self.data_row_cap = data_row_cap

    def complete(self, req: LlmRequest) -> LlmResponse:
        return self.registry.complete(req)

    # -- query generation --------------------------------------------------

    def _generation_system_prompt(self, schema: GraphSchema) -> str:
        return (
            "You translate natural-language competency questions into SPARQL "
            "SELECT or ASK queries over a research knowledge graph.\n"
            f"Graph schema (fingerprint {schema.fingerprint}):\n"
            f"{schema_summary(schema, self.schema_budget)}\n\n"
            "Rules: use only classes and predicates from the schema; the query "
            "must be read-only; return exactly one SPARQL query inside a fenced "
            "code block (```sparql ... ```)."
        )

    def generate_query(
        self,
        question: str,
        schema: GraphSchema,
        history: list[ChatMessage],
        cfg: LlmConfig,
    ) -> CandidateQuery:
        if not question or not question.strip():
            raise PreconditionError("question must be non-empty")
        messages = (
            ChatMessage("system", self._generation_system_prompt(schema)),
            *history,
            ChatMessage("user", question),
        )
        response = self.complete(LlmRequest(config=cfg, messages=messages))
        sparql_text = extract_fenced_query(response.content)
        return CandidateQuery(
            sparql_text=sparql_text,
            rationale=_FENCE_RE.sub("", response.content).strip(),
            attempt=1,
        )

    def repair_query(
        self,
        prev: CandidateQuery,
        diagnostics: list[str],
        schema: GraphSchema,
        history: list[ChatMessage],
        cfg: LlmConfig,
    ) -> CandidateQuery:
        if not diagnostics:
            raise PreconditionError("repair requires at least one diagnostic")
        if prev.attempt >= self.max_repair_attempts:
            raise RepairExhaustedError(
                f"repair limit of {self.max_repair_attempts} attempts reached",
                diagnostics=list(prev.diagnostics) + list(diagnostics),
            )
        feedback = (
            "The previous SPARQL query failed validation or execution.\n"
            f"Previous query:\n```sparql\n{prev.sparql_text}\n```\n"
            "Diagnostics:\n" + "\n".join(f"- {d}" for d in diagnostics) + "\n"
            "Return a corrected query in a fenced code block."
        )
        messages = (
            ChatMessage("system", self._generation_system_prompt(schema)),
            *history,
            ChatMessage("user", feedback),
        )
        response = self.complete(LlmRequest(config=cfg, messages=messages))
        sparql_text = extract_fenced_query(response.content)
        return CandidateQuery(
            sparql_text=sparql_text,
            rationale=_FENCE_RE.sub("", response.content).strip(),
            attempt=prev.attempt + 1,
            diagnostics=prev.diagnostics + tuple(diagnostics),
        )

    # -- interpretation ----------------------------------------------------

    def interpret_results(
        self, question: str, data: Dataset, chart: ChartSpec, cfg: LlmConfig
    ) -> Interpretation:
        caveats: list[str] = []
        if not data.rows:
            prompt = (
                f"The question was: {question}\n"
                "The query returned an empty result. Explain briefly what an "
                "empty answer means here and what a user might try instead."
            )
            caveats.append("The query returned no rows; the interpretation covers the absence of data.")
        else:
            sample, sampled = serialize_data_sample(data, self.data_row_cap)
            if sampled:
                caveats.append(
                    f"Interpretation is based on a sample of the first {self.data_row_cap} "
                    f"of {len(data.rows)} rows plus column summaries."
                )
            prompt = (
                f"The question was: {question}\n"
                f"The data is shown as a {chart.kind} chart titled {chart.title!r}.\n"
                f"Data:\n{sample}\n"
                "Write a short interpretation (2-4 sentences), then an optional "
                "longer explanation separated by a blank line."
            )
        messages = (
            ChatMessage(
                "system",
                "You interpret tabular results of knowledge-graph queries for researchers. "
                "Be factual; describe only what the data shows.",
            ),
            ChatMessage("user", prompt),
        )
        response = self.complete(LlmRequest(config=cfg, messages=messages))
        summary, _, explanation = response.content.partition("\n\n")
        return Interpretation(
            summary=summary.strip(),
            explanation=explanation.strip(),
            caveats=tuple(caveats),
            generator=f"llm:{cfg.model_id}",
        )

    # -- chart suggestion --------------------------------------------------

    def suggest_chart(self, question: str, data: Dataset, cfg: LlmConfig) -> ChartSpec:
        if not data.columns:
            raise PreconditionError("dataset must have at least one column")
        if len(data.columns) < 2:
            return default_chart(data)
        column_desc = ", ".join(f"{c.name} ({c.type})" for c in data.columns)
        prompt = (
            f"Question: {question}\n"
            f"Result columns: {column_desc}\n"
            'Suggest a chart as JSON: {"kind": one of bar/stacked-bar/line/pie/scatter/table, '
            '"x": column name, "y": column name, "series": column name or null, "title": string}.'
        )
        messages = (
            ChatMessage("system", "You suggest chart encodings for tabular data. Answer with JSON only."),
            ChatMessage("user", prompt),
        )
        spec = None
        for _ in range(2):  # initial suggestion plus one repair round
            try:
                response = self.complete(LlmRequest(config=cfg, messages=messages))
                spec = _chart_from_json(response.content)
            except (ProviderError, ExtractionError, PreconditionError):
                break
            if spec is not None and not validate_chart(spec, data):
                return spec
            violations = validate_chart(spec, data) if spec is not None else ["unparsable suggestion"]
            messages = messages + (
                ChatMessage("assistant", response.content),
                ChatMessage("user", "That suggestion is invalid: " + "; ".join(violations) + ". Answer with corrected JSON only."),
            )
        return default_chart(data)


def _chart_from_json(content: str) -> ChartSpec | None:
    match = _FENCE_RE.search(content)
    raw = match.group(1) if match else content
    start, end = raw.find("{"), raw.rfind("}")
    if start < 0 or end <= start:
        return None
    try:
        doc = json.loads(raw[start : end + 1])
    except json.JSONDecodeError:
        return None
    if not isinstance(doc, dict) or "kind" not in doc:
        return None
    x = doc.get("x")
    y = doc.get("y")
    return ChartSpec(
        kind=str(doc["kind"]),
        x=Encoding(str(x)) if x else None,
        y=Encoding(str(y)) if y else None,
        series=doc.get("series") or None,
        title=str(doc.get("title", "")),
    )
