/** Dashboard view state as a pure reducer over UI events.
 *
 * Invariant: the current outcome is always a server-side reference;
 * there is no client-only result state.
 */

import type { Outcome } from "./types.js";

export type View =
  | "question-browser"
  | "curated-result"
  | "custom-composer"
  | "history"
  | "statistics";

export interface RefinementDraft {
  target: "query" | "chart" | "interpretation";
  mode: "manual" | "prompt";
  instruction: string;
}

export interface ViewState {
  activeUseCase: string | null;
  activeView: View;
  sessionId: string | null;
  currentOutcome: Outcome | null;
  pendingRefinement: RefinementDraft | null;
  banner: { kind: "error" | "rate-limit" | "info"; text: string } | null;
}

export const initialState: ViewState = {
  activeUseCase: null,
  activeView: "question-browser",
  sessionId: null,
  currentOutcome: null,
  pendingRefinement: null,
  banner: null,
};

export type Action =
  | { type: "select-use-case"; useCaseId: string }
  | { type: "show-view"; view: View }
  | { type: "outcome-received"; outcome: Outcome }
  | { type: "draft-refinement"; draft: RefinementDraft }
  | { type: "discard-refinement" }
  | { type: "rate-limited"; retryAfterSeconds: number }
  | { type: "error"; text: string }
  | { type: "dismiss-banner" };

export function reduce(state: ViewState, action: Action): ViewState {
  switch (action.type) {
    case "select-use-case":
      // switching use case invalidates question list and current result
      return {
        ...initialState,
        sessionId: state.sessionId,
        activeUseCase: action.useCaseId,
      };
    case "show-view":
      return { ...state, activeView: action.view, banner: null };
    case "outcome-received":
      return {
        ...state,
        sessionId: action.outcome.session_id,
        currentOutcome: action.outcome,
        pendingRefinement: null,
        activeView:
          action.outcome.question_kind === "curated" ? "curated-result" : "custom-composer",
        banner:
          action.outcome.status === "failed"
            ? {
                kind: "error",
                text: `failed(${action.outcome.failed_stage}): ${action.outcome.error ?? ""}`,
              }
            : null,
      };
    case "draft-refinement":
      return { ...state, pendingRefinement: action.draft };
    case "discard-refinement":
      return { ...state, pendingRefinement: null };
    case "rate-limited":
      return {
        ...state,
        banner: {
          kind: "rate-limit",
          text: `Daily limit reached; resets in ${formatDuration(action.retryAfterSeconds)}.`,
        },
      };
    case "error":
      return { ...state, banner: { kind: "error", text: action.text } };
    case "dismiss-banner":
      return { ...state, banner: null };
  }
}

export function formatDuration(totalSeconds: number): string {
  const hours = Math.floor(totalSeconds / 3600);
  const minutes = Math.ceil((totalSeconds % 3600) / 60);
  if (hours === 0) return `${minutes}m`;
  return `${hours}h ${minutes}m`;
}
