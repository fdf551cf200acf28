/** History timeline helpers: the audit lane shows everything, the
 * context lane only retained events. */

import type { HistoryEvent } from "./types.js";

export interface TimelineEntry {
  event: HistoryEvent;
  lane: "audit" | "audit+context";
  summary: string;
}

function summarize(event: HistoryEvent): string {
  const payload = event.payload;
  switch (event.kind) {
    case "question-submitted":
      return `Question: ${String(payload["question"] ?? "")}`;
    case "outcome": {
      const status = String(payload["status"] ?? "");
      const kind = String(payload["question_kind"] ?? "");
      return status === "complete"
        ? `Completed ${kind} run`
        : `Failed ${kind} run (${String(payload["failed_stage"] ?? "?")})`;
    }
    case "refinement":
      return `Refined ${String(payload["target"] ?? "")} (${String(payload["mode"] ?? "")})`;
    case "llm-exchange":
      return `LLM exchange (${String(payload["model"] ?? "")})`;
    default:
      return event.kind;
  }
}

export function buildTimeline(events: HistoryEvent[]): TimelineEntry[] {
  return events.map((event) => ({
    event,
    lane: event.retained ? "audit+context" : "audit",
    summary: summarize(event),
  }));
}

/** Event ids the LLM would currently see (retained llm-exchange events). */
export function contextEventIds(events: HistoryEvent[]): string[] {
  return events
    .filter((e) => e.retained && e.kind === "llm-exchange")
    .map((e) => e.event_id);
}

export function outcomeRefs(events: HistoryEvent[]): string[] {
  return events.filter((e) => e.kind === "outcome").map((e) => e.event_id);
}

/** Query text to pre-fill the composer when restoring at an outcome. */
export function restoreDraft(events: HistoryEvent[], outcomeRef: string): string | null {
  const event = events.find((e) => e.event_id === outcomeRef && e.kind === "outcome");
  if (!event) return null;
  const query = event.payload["query_text"];
  return typeof query === "string" && query ? query : null;
}
