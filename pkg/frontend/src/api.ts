/** Typed client for the platform HTTP API. All numbers shown in the UI come
 * from these endpoints; the client never aggregates scores itself. */

export interface Report {
  id: string;
  run_id: string;
  query: string;
  context_chunk_ids: string[];
  generator_model_id: string;
  text: string;
  created_at: string;
}

export interface Chunk {
  id: string;
  document_id: string;
  seq: number;
  char_start: number;
  char_end: number;
  text: string;
  metadata: Record<string, string>;
}

export interface SourceDocument {
  id: string;
  source_uri: string;
  content: string;
  metadata: Record<string, string>;
  ingested_at: string;
}

export interface Verdict {
  id: string;
  report_id: string;
  dimension: string;
  judge_model_id: string;
  status: "ok" | "failed";
  score: number | null;
  rationale: string | null;
  raw_response: string;
  error: string | null;
  created_at: string;
}

export interface Consensus {
  id: string;
  report_id: string;
  dimension: string;
  score: number;
  method: "median";
  verdict_ids: string[];
  created_at: string;
}

export interface DimensionJudgments {
  dimension: string;
  consensus: Consensus | null;
  verdicts: Verdict[];
}

export interface Feedback {
  id: string;
  report_id: string;
  reviewer_id: string;
  dimension: string;
  score: number;
  comment: string;
  created_at: string;
}

export interface ApiErrorBody {
  status: number;
  code: string;
  message: string;
}

export class ApiRequestError extends Error {
  constructor(public readonly body: ApiErrorBody) {
    super(`${body.code}: ${body.message}`);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private token: string = "",
  ) {}

  setToken(token: string): void {
    this.token = token;
  }

  hasToken(): boolean {
    return this.token.length > 0;
  }

  private async request<T>(path: string, init: RequestInit = {}): Promise<T> {
    const headers: Record<string, string> = {
      ...(init.headers as Record<string, string> | undefined),
    };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    if (init.body) headers["Content-Type"] = "application/json";
    const resp = await fetch(this.baseUrl + path, { ...init, headers });
    if (!resp.ok) {
      let body: ApiErrorBody;
      try {
        body = (await resp.json()) as ApiErrorBody;
      } catch {
        body = { status: resp.status, code: "http_error", message: resp.statusText };
      }
      throw new ApiRequestError(body);
    }
    return (await resp.json()) as T;
  }

  healthz(): Promise<{ status: string }> {
    return this.request("/healthz");
  }

  async listReports(limit = 50): Promise<Report[]> {
    const data = await this.request<{ reports: Report[] }>(`/reports?limit=${limit}`);
    return data.reports;
  }

  getReport(id: string): Promise<{ report: Report; context: Chunk[] }> {
    return this.request(`/reports/${encodeURIComponent(id)}`);
  }

  async getJudgments(id: string): Promise<DimensionJudgments[]> {
    const data = await this.request<{ report_id: string; dimensions: DimensionJudgments[] }>(
      `/reports/${encodeURIComponent(id)}/judgments`,
    );
    return data.dimensions;
  }

  async getFeedback(id: string): Promise<Feedback[]> {
    const data = await this.request<{ report_id: string; feedback: Feedback[] }>(
      `/reports/${encodeURIComponent(id)}/feedback`,
    );
    return data.feedback;
  }

  async submitFeedback(
    reportId: string,
    dimension: string,
    score: number,
    comment: string,
  ): Promise<Feedback> {
    const data = await this.request<{ feedback: Feedback }>(
      `/reports/${encodeURIComponent(reportId)}/feedback`,
      { method: "POST", body: JSON.stringify({ dimension, score, comment }) },
    );
    return data.feedback;
  }

  async getDocument(id: string): Promise<SourceDocument> {
    const data = await this.request<{ document: SourceDocument }>(
      `/documents/${encodeURIComponent(id)}`,
    );
    return data.document;
  }
}
