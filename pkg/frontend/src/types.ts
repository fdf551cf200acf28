/** Wire types mirroring the service's JSON payloads. */

export interface UseCaseSummary {
  use_case_id: string;
  label: string;
  schema_fingerprint: string;
  question_count: number;
}

export interface CuratedQuestion {
  id: string;
  index: number;
  question_text: string;
  sparql: string;
  chart_kind: string;
  interpretation: string;
  explanation: string;
  provenance_note: string;
}

export interface ChartEncoding {
  column: string;
  binning: string | null;
  aggregate: string;
}

export interface ChartDocument {
  chart_version: number;
  kind: string;
  title: string;
  x: ChartEncoding | null;
  y: ChartEncoding | null;
  series: string | null;
  sort: [string, string] | null;
  columns: { name: string; type: string }[];
  data: Record<string, (string | number | boolean | null)[]>;
}

export interface StepRecord {
  stage: string;
  started: string;
  finished: string;
  inputs_digest: string;
  outputs_digest: string;
  error: string | null;
  note: string | null;
  llm_calls: string[];
}

export interface Interpretation {
  summary: string;
  explanation: string;
  caveats: string[];
  generator: string;
}

export interface Outcome {
  session_id: string;
  outcome_ref: string;
  question_ref: string;
  question_kind: "curated" | "custom";
  use_case_id: string;
  schema_fingerprint: string;
  query_text: string;
  chart: ChartDocument | null;
  interpretation: Interpretation | null;
  status: "complete" | "failed";
  failed_stage: string | null;
  error: string | null;
  steps: StepRecord[];
  query_history: Record<string, unknown>[];
  trace_digest: string;
}

export interface HistoryEvent {
  event_id: string;
  timestamp: string;
  kind: string;
  retained: boolean;
  payload: Record<string, unknown>;
}

export interface Statistics {
  use_cases: Record<
    string,
    {
      curated_questions: number;
      curated_executions: number;
      custom_questions: number;
      repair_success_rate: number | null;
    }
  >;
  last_reload: string;
}

export interface RouteDescription {
  method: string;
  path: string;
  description: string;
}

/** Structured error body every route returns on failure. */
export interface ApiErrorBody {
  code: string;
  message: string;
  correlation_id: string;
  retry_after?: number;
  diagnostics?: string[];
  violations?: string[];
}
