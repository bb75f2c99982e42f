/** Hash-routed single-page app over the platform HTTP API.
 *
 * Routes: #/login, #/reports, #/report/<id>, #/document/<id>@<offset>.
 * API base URL is the only configuration (window.FROAV_API_BASE). */

import { ApiClient, ApiRequestError } from "./api.js";
import {
  canViewConsensus,
  createSession,
  isAuthenticated,
  login,
  markSubmitted,
  validateScore,
  DIMENSIONS,
} from "./state.js";
import {
  renderDocumentView,
  renderError,
  renderFeedbackForm,
  renderFeedbackList,
  renderJudgments,
  renderLogin,
  renderNotFound,
  renderReportList,
  renderReportViewer,
} from "./views.js";

declare global {
  interface Window {
    FROAV_API_BASE?: string;
  }
}

const apiBase = window.FROAV_API_BASE ?? "";
const api = new ApiClient(apiBase);
const session = createSession(true);
const app = document.getElementById("app") as HTMLElement;

function toast(message: string): void {
  const el = document.createElement("div");
  el.innerHTML = renderError(message);
  document.body.appendChild(el);
  setTimeout(() => el.remove(), 4000);
}

async function route(): Promise<void> {
  const hash = window.location.hash || "#/reports";
  if (!isAuthenticated(session)) {
    showLogin();
    return;
  }
  try {
    if (hash.startsWith("#/report/")) {
      await showReport(decodeURIComponent(hash.slice("#/report/".length)));
    } else if (hash.startsWith("#/document/")) {
      const spec = hash.slice("#/document/".length);
      const at = spec.lastIndexOf("@");
      const docId = decodeURIComponent(at >= 0 ? spec.slice(0, at) : spec);
      const offset = at >= 0 ? Number(spec.slice(at + 1)) : 0;
      await showDocument(docId, offset);
    } else {
      await showReports();
    }
  } catch (err) {
    if (err instanceof ApiRequestError && err.body.status === 404) {
      app.innerHTML = renderNotFound();
    } else if (err instanceof ApiRequestError && err.body.status === 401) {
      showLogin();
    } else {
      toast(err instanceof Error ? err.message : String(err));
    }
  }
}

function showLogin(): void {
  app.innerHTML = renderLogin(session.blindMode);
  const form = document.getElementById("login-form") as HTMLFormElement;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const input = document.getElementById("token-input") as HTMLInputElement;
    const blind = document.getElementById("blind-toggle") as HTMLInputElement;
    session.blindMode = blind.checked;
    if (!input.value.trim()) return;
    login(session, input.value.trim());
    api.setToken(input.value.trim());
    window.location.hash = "#/reports";
    void route();
  });
}

async function showReports(): Promise<void> {
  const reports = await api.listReports();
  app.innerHTML = renderReportList(reports);
}

async function showReport(reportId: string): Promise<void> {
  session.selectedReportId = reportId;
  const [{ report, context }, judgments, feedback] = await Promise.all([
    api.getReport(reportId),
    api.getJudgments(reportId),
    api.getFeedback(reportId),
  ]);
  const unblinded = canViewConsensus(session, reportId);
  const ownScores = new Map(feedback.map((f) => [f.dimension, f.score]));
  app.innerHTML =
    renderReportViewer(report, context) +
    renderJudgments(judgments, unblinded, ownScores) +
    renderFeedbackForm(feedback) +
    renderFeedbackList(feedback);
  wireFeedbackForm(reportId);
}

function wireFeedbackForm(reportId: string): void {
  const form = document.getElementById("feedback-form") as HTMLFormElement | null;
  if (!form) return;
  form.querySelectorAll<HTMLInputElement>("input[type=range]").forEach((slider) => {
    slider.addEventListener("input", () => {
      const output = slider.parentElement?.querySelector("output");
      if (output) output.textContent = slider.value;
    });
  });
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void submitAll(reportId, form);
  });
}

async function submitAll(reportId: string, form: HTMLFormElement): Promise<void> {
  const status = document.getElementById("form-status");
  const entries: Array<{ dimension: string; score: number; comment: string }> = [];
  for (const dimension of DIMENSIONS) {
    const slider = form.querySelector<HTMLInputElement>(`[name="score-${dimension}"]`);
    const comment = form.querySelector<HTMLInputElement>(`[name="comment-${dimension}"]`);
    const score = validateScore(slider?.value);
    if (score === null) {
      if (status) status.textContent = `${dimension}: score must be an integer from 1 to 10`;
      return; // client-side block: no request leaves the page
    }
    entries.push({ dimension, score, comment: comment?.value ?? "" });
  }
  try {
    for (const entry of entries) {
      await api.submitFeedback(reportId, entry.dimension, entry.score, entry.comment);
    }
    markSubmitted(session, reportId);
    if (status) status.textContent = "submitted";
    await showReport(reportId); // refresh: unblinds judgments, lists live records
  } catch (err) {
    if (err instanceof ApiRequestError) {
      if (status) status.textContent = `${err.body.code}: ${err.body.message}`;
      if (err.body.status === 409) void showReport(reportId); // stale data: refresh
    } else {
      toast(String(err));
    }
  }
}

async function showDocument(docId: string, offset: number): Promise<void> {
  const doc = await api.getDocument(docId);
  app.innerHTML = renderDocumentView(doc, offset);
  document.getElementById("anchor")?.scrollIntoView({ block: "center" });
}

window.addEventListener("hashchange", () => void route());
void route();
