/** Pure HTML renderers. Every number displayed here was fetched from the API;
 * nothing is computed client-side beyond formatting. */

import type { Chunk, DimensionJudgments, Feedback, Report, SourceDocument } from "./api.js";
import { DIMENSIONS } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderLogin(blindMode: boolean): string {
  return `
<section class="login">
  <h1>Review console</h1>
  <p>Paste your reviewer token to start a session. The token stays in memory only.</p>
  <form id="login-form">
    <input type="password" id="token-input" placeholder="reviewer token" autocomplete="off" />
    <label class="blind-toggle">
      <input type="checkbox" id="blind-toggle" ${blindMode ? "checked" : ""} />
      blind review (hide automated scores until I submit)
    </label>
    <button type="submit">Sign in</button>
  </form>
</section>`;
}

export function renderReportList(reports: Report[]): string {
  if (reports.length === 0) {
    return `<section class="report-list"><h1>Reports</h1><p>No reports yet.</p></section>`;
  }
  const rows = reports
    .map(
      (r) => `
    <li>
      <a href="#/report/${encodeURIComponent(r.id)}" data-report-id="${escapeHtml(r.id)}">
        ${escapeHtml(r.query)}
      </a>
      <span class="meta">${escapeHtml(r.created_at)} &middot; ${r.context_chunk_ids.length} sources</span>
    </li>`,
    )
    .join("");
  return `<section class="report-list"><h1>Reports</h1><ul>${rows}</ul></section>`;
}

export function renderReportViewer(report: Report, context: Chunk[]): string {
  const panels = context
    .map(
      (chunk, i) => `
    <details class="context-panel" data-chunk-id="${escapeHtml(chunk.id)}">
      <summary>
        [${i + 1}] chunk ${escapeHtml(chunk.id.slice(0, 12))}&hellip; (${chunk.char_start}&ndash;${chunk.char_end})
      </summary>
      <pre class="chunk-text">${escapeHtml(chunk.text)}</pre>
      <a class="source-link"
         href="#/document/${encodeURIComponent(chunk.document_id)}@${chunk.char_start}">
        open source document at offset ${chunk.char_start}
      </a>
    </details>`,
    )
    .join("");
  return `
<section class="report-viewer">
  <nav><a href="#/reports">&larr; all reports</a></nav>
  <h1>${escapeHtml(report.query)}</h1>
  <div class="columns">
    <article class="report-text"><pre>${escapeHtml(report.text)}</pre></article>
    <aside class="context-panels">${panels}</aside>
  </div>
</section>`;
}

export function renderJudgments(
  dimensions: DimensionJudgments[],
  unblinded: boolean,
  ownScores: Map<string, number> = new Map(),
): string {
  const blocks = dimensions
    .map((d) => {
      if (!unblinded) {
        return `
      <div class="dimension masked" data-dimension="${escapeHtml(d.dimension)}">
        <h3>${escapeHtml(d.dimension)}</h3>
        <p class="masked-note">submit your own score to reveal the automated judgment</p>
      </div>`;
      }
      const consensus = d.consensus
        ? `<strong class="consensus-score">${d.consensus.score}</strong> <span class="method">(median)</span>`
        : `<em>no consensus recorded</em>`;
      const verdictRows = d.verdicts
        .map((v) =>
          v.status === "ok"
            ? `<li><span class="model">${escapeHtml(v.judge_model_id)}</span>
                 <span class="score">${v.score}</span>
                 <span class="rationale">${escapeHtml(v.rationale ?? "")}</span></li>`
            : `<li class="failed"><span class="model">${escapeHtml(v.judge_model_id)}</span>
                 <span class="score">&ndash;</span>
                 <span class="rationale">failed: ${escapeHtml(v.error ?? "unparseable")}</span></li>`,
        )
        .join("");
      const own = ownScores.get(d.dimension);
      const offset =
        own !== undefined && d.consensus
          ? `<p class="offset">your score ${own}, judges ${d.consensus.score}
               (offset ${formatOffset(d.consensus.score - own)})</p>`
          : "";
      return `
    <div class="dimension" data-dimension="${escapeHtml(d.dimension)}">
      <h3>${escapeHtml(d.dimension)}: ${consensus}</h3>
      <ul class="verdicts">${verdictRows}</ul>
      ${offset}
    </div>`;
    })
    .join("");
  return `<section class="judgments"><h2>Automated judgments</h2>${blocks}</section>`;
}

export function formatOffset(value: number): string {
  const rounded = Math.round(value * 100) / 100;
  return rounded > 0 ? `+${rounded}` : `${rounded}`;
}

export function renderFeedbackForm(existing: Feedback[]): string {
  const byDim = new Map(existing.map((f) => [f.dimension, f]));
  const rows = DIMENSIONS.map((dim) => {
    const prior = byDim.get(dim);
    const score = prior ? prior.score : 5;
    const comment = prior ? prior.comment : "";
    return `
    <fieldset class="feedback-row" data-dimension="${dim}">
      <legend>${dim}</legend>
      <input type="range" min="1" max="10" step="1" value="${score}"
             name="score-${dim}" id="score-${dim}" />
      <output for="score-${dim}">${score}</output>
      <input type="text" name="comment-${dim}" placeholder="comment (optional)"
             value="${escapeHtml(comment)}" />
    </fieldset>`;
  }).join("");
  return `
<section class="feedback-form">
  <h2>Your judgment</h2>
  <form id="feedback-form">
    ${rows}
    <button type="submit">Submit all four dimensions</button>
    <p class="form-status" id="form-status"></p>
  </form>
</section>`;
}

export function renderFeedbackList(feedback: Feedback[]): string {
  if (feedback.length === 0) return "";
  const rows = feedback
    .map(
      (f) => `
    <li data-feedback-id="${escapeHtml(f.id)}">
      <span class="dim">${escapeHtml(f.dimension)}</span>
      <span class="score">${f.score}</span>
      <span class="comment">${escapeHtml(f.comment)}</span>
    </li>`,
    )
    .join("");
  return `<section class="feedback-list"><h2>Recorded feedback</h2><ul>${rows}</ul></section>`;
}

export function renderDocumentView(doc: SourceDocument, highlightStart: number): string {
  const before = doc.content.slice(0, highlightStart);
  const after = doc.content.slice(highlightStart);
  return `
<section class="document-view">
  <nav><a href="javascript:history.back()">&larr; back</a></nav>
  <h1>${escapeHtml(doc.source_uri || doc.id.slice(0, 12))}</h1>
  <pre class="document-content">${escapeHtml(before)}<mark id="anchor">${escapeHtml(
    after.slice(0, 1),
  )}</mark>${escapeHtml(after.slice(1))}</pre>
</section>`;
}

export function renderError(message: string): string {
  return `<div class="toast error">${escapeHtml(message)}</div>`;
}

export function renderNotFound(): string {
  return `<section class="not-found"><h1>Report not found</h1>
    <p><a href="#/reports">Back to the report list.</a></p></section>`;
}
