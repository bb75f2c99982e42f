/** End-to-end test against the real platform service.
 *
 * Boots the Python HTTP service on a scratch data dir, seeds three fixture
 * documents and one judged report through the admin API, then drives the
 * reviewer flows exactly as the UI does: judgment browsing under blind mode,
 * feedback submission, and live-record retrieval in the same session.
 */

import { ChildProcess, execFileSync, spawn } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { canViewConsensus, createSession, markSubmitted } from "../src/state.js";
import { renderFeedbackForm, renderJudgments } from "../src/views.js";

const PORT = 18900 + Math.floor(Math.random() * 500);
const BASE = `http://127.0.0.1:${PORT}`;
const ADMIN_TOKEN = "integration-admin-token";

let dataDir: string;
let server: ChildProcess;
let reviewerToken: string;
let reportId: string;

const pyEnv = () => ({
  ...process.env,
  FROAV_DATA_DIR: dataDir,
  FROAV_ADMIN_TOKEN: ADMIN_TOKEN,
});

async function adminFetch(path: string, init: RequestInit = {}): Promise<any> {
  const resp = await fetch(BASE + path, {
    ...init,
    headers: {
      Authorization: `Bearer ${ADMIN_TOKEN}`,
      ...(init.body ? { "Content-Type": "application/json" } : {}),
    },
  });
  if (!resp.ok) throw new Error(`${path} -> ${resp.status}: ${await resp.text()}`);
  return resp.json();
}

async function waitForServer(timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/healthz`);
      if (resp.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("service did not come up");
}

beforeAll(async () => {
  dataDir = mkdtempSync(join(tmpdir(), "froav-ui-test-"));

  // provision the reviewer before the server boots (single-writer store)
  const out = execFileSync(
    "python3",
    ["-m", "froav.cli", "reviewer", "add", "Dana"],
    { env: pyEnv(), encoding: "utf-8" },
  );
  reviewerToken = out
    .split("\n")
    .find((line) => line.startsWith("token\t"))!
    .split("\t")[1]!;

  server = spawn(
    "python3",
    ["-m", "froav.cli", "serve", "--bind", `127.0.0.1:${PORT}`],
    { env: pyEnv(), stdio: "ignore" },
  );
  await waitForServer();

  // seed the standard fixture: 3 documents, one judged report
  const docIds: string[] = [];
  const fixtures = [
    "Alpha Corp reported revenue of 120 million, up ten percent. Operating cash flow reached 30 million. ",
    "Beta Industries carries 80 million of short term debt. Liquidity risk remains elevated. ",
    "Gamma Ltd depends on three customers for most sales. Customer concentration poses a risk. ",
  ];
  for (const [i, text] of fixtures.entries()) {
    const body = await adminFetch("/documents", {
      method: "POST",
      body: JSON.stringify({ text: text.repeat(12), source_uri: `fixture-${i}.txt` }),
    });
    docIds.push(body.document_id);
  }
  const run = await adminFetch("/runs", {
    method: "POST",
    body: JSON.stringify({
      workflow_id: "rag_judge",
      inputs: { query: "how is the cash flow?", document_ids: docIds },
    }),
  });
  const deadline = Date.now() + 30000;
  for (;;) {
    const trace = await adminFetch(`/runs/${run.run_id}`);
    if (trace.status === "succeeded") break;
    if (trace.status === "failed" || Date.now() > deadline) {
      throw new Error(`run did not succeed: ${JSON.stringify(trace).slice(0, 400)}`);
    }
    await new Promise((r) => setTimeout(r, 150));
  }

  const reviewer = new ApiClient(BASE, reviewerToken);
  const reports = await reviewer.listReports();
  expect(reports).toHaveLength(1);
  reportId = reports[0]!.id;
}, 90000);

afterAll(() => {
  server?.kill("SIGTERM");
  if (dataDir) rmSync(dataDir, { recursive: true, force: true });
});

describe("judgment browser on the standard fixture", () => {
  it("each dimension carries 3 model scores and a median consensus", async () => {
    const api = new ApiClient(BASE, reviewerToken);
    const dimensions = await api.getJudgments(reportId);
    expect(dimensions.map((d) => d.dimension)).toEqual([
      "Reliability",
      "Completeness",
      "Understandability",
      "Relevance",
    ]);
    for (const dim of dimensions) {
      expect(dim.verdicts).toHaveLength(3);
      expect(dim.consensus).not.toBeNull();
      expect(dim.consensus!.method).toBe("median");
      const scores = dim.verdicts.map((v) => v.score!).sort((a, b) => a - b);
      expect(dim.consensus!.score).toBe(scores[1]); // median of three
      const html = renderJudgments([dim], true);
      for (const v of dim.verdicts) {
        expect(html).toContain(`<span class="score">${v.score}</span>`);
        expect(html).toContain(v.judge_model_id);
      }
      expect(html).toContain(`<strong class="consensus-score">${dim.consensus!.score}</strong>`);
    }
  });
});

describe("blind mode", () => {
  it("masks consensus until the reviewer submits, then reveals it", async () => {
    const api = new ApiClient(BASE, reviewerToken);
    const session = createSession(true);
    const dimensions = await api.getJudgments(reportId);

    expect(canViewConsensus(session, reportId)).toBe(false);
    const masked = renderJudgments(dimensions, canViewConsensus(session, reportId));
    expect(masked).not.toContain("consensus-score");
    expect(masked.match(/dimension masked/g)).toHaveLength(4);

    markSubmitted(session, reportId); // what the form does after its 201s
    const revealed = renderJudgments(dimensions, canViewConsensus(session, reportId));
    expect(revealed).toContain("consensus-score");
    expect(revealed).not.toContain("dimension masked");
  });
});

describe("feedback round trip in one session", () => {
  it("submitting all four dimensions yields retrievable live records", async () => {
    const api = new ApiClient(BASE, reviewerToken);
    const dims = ["Reliability", "Completeness", "Understandability", "Relevance"];
    for (const [i, dimension] of dims.entries()) {
      const created = await api.submitFeedback(reportId, dimension, 4 + i, `note ${i}`);
      expect(created.report_id).toBe(reportId);
      expect(created.score).toBe(4 + i);
    }
    const listed = await api.getFeedback(reportId);
    expect(listed).toHaveLength(4);
    expect(new Set(listed.map((f) => f.dimension))).toEqual(new Set(dims));
    // the form prefills from these live records
    const form = renderFeedbackForm(listed);
    expect(form).toContain('value="4"');
    expect(form).toContain('value="note 0"');
  });

  it("resubmission supersedes: the list shows only the updated live record", async () => {
    const api = new ApiClient(BASE, reviewerToken);
    await api.submitFeedback(reportId, "Reliability", 9, "revised");
    const listed = await api.getFeedback(reportId);
    expect(listed).toHaveLength(4);
    const reliability = listed.filter((f) => f.dimension === "Reliability");
    expect(reliability).toHaveLength(1);
    expect(reliability[0]!.score).toBe(9);
    expect(reliability[0]!.comment).toBe("revised");
  });

  it("out-of-range scores are rejected with an ApiError", async () => {
    const api = new ApiClient(BASE, reviewerToken);
    await expect(api.submitFeedback(reportId, "Reliability", 11, "")).rejects.toMatchObject({
      body: { status: 422 },
    });
  });

  it("reviewer tokens cannot reach admin routes", async () => {
    const resp = await fetch(`${BASE}/documents`, {
      method: "POST",
      headers: {
        Authorization: `Bearer ${reviewerToken}`,
        "Content-Type": "application/json",
      },
      body: JSON.stringify({ text: "x" }),
    });
    expect(resp.status).toBe(401);
    const body = await resp.json();
    expect(body).toMatchObject({ status: 401, code: "auth_failed" });
  });
});
