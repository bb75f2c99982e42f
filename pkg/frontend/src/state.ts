/** Session state and blind-review gating.
 *
 * The reviewer token lives in memory only (never persisted to browser
 * storage). With blind mode on (the default), consensus and model scores for
 * a report stay masked until the reviewer has submitted their own feedback
 * for that report in this session. */

export const DIMENSIONS = [
  "Reliability",
  "Completeness",
  "Understandability",
  "Relevance",
] as const;

export type Dimension = (typeof DIMENSIONS)[number];

export interface SessionState {
  token: string | null;
  selectedReportId: string | null;
  blindMode: boolean;
  submittedReports: Set<string>;
}

export function createSession(blindMode = true): SessionState {
  return {
    token: null,
    selectedReportId: null,
    blindMode,
    submittedReports: new Set(),
  };
}

export function login(state: SessionState, token: string): void {
  state.token = token;
}

export function logout(state: SessionState): void {
  state.token = null;
  state.selectedReportId = null;
  state.submittedReports.clear();
}

export function isAuthenticated(state: SessionState): boolean {
  return state.token !== null && state.token.length > 0;
}

export function canViewConsensus(state: SessionState, reportId: string): boolean {
  if (!state.blindMode) return true;
  return state.submittedReports.has(reportId);
}

export function markSubmitted(state: SessionState, reportId: string): void {
  state.submittedReports.add(reportId);
}

/** Client-side score gate: integers 1-10 pass, anything else is blocked
 * before a request is made. */
export function validateScore(value: unknown): number | null {
  const num = typeof value === "string" ? Number(value) : value;
  if (typeof num !== "number" || !Number.isInteger(num)) return null;
  if (num < 1 || num > 10) return null;
  return num;
}
