// Typed client for the wastescan review service HTTP/JSON API.
// The base URL is the single piece of configuration the dashboard needs.

export type Decision = 'confirmed' | 'dismissed' | 'unsure';
export type ArtifactKind = 'image' | 'saliency' | 'overlay';

export interface ScanSummary {
  scan_id: string;
  tile_count: number;
  report: Record<string, unknown>;
}

export interface DetectionSummary {
  tile_id: string;
  score: number;
  rank: number;
  color: string | null;
  has_saliency: boolean;
}

export interface DetectionPage {
  scan_id: string;
  total: number;
  page: number;
  page_size: number;
  items: DetectionSummary[];
}

export interface Session {
  session_id: string;
  scan_id: string;
  operator: string;
  threshold: number;
  created_at: string;
}

export interface Verdict {
  tile_id: string;
  decision: Decision;
  opened_at: string;
  decided_at: string;
}

export interface SessionReport {
  session_id: string;
  reviewed: number;
  confirmed: number;
  dismissed: number;
  unsure: number;
  total_time_min: number;
  avg_time_per_site_min: number | null;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      throw new ApiError(`${init?.method ?? 'GET'} ${path} -> ${resp.status}`, resp.status);
    }
    return (await resp.json()) as T;
  }

  listScans(): Promise<ScanSummary[]> {
    return this.request('/scans');
  }

  listDetections(
    scanId: string,
    minScore: number,
    page = 1,
    pageSize = 500,
  ): Promise<DetectionPage> {
    const params = new URLSearchParams({
      min_score: String(minScore),
      page: String(page),
      page_size: String(pageSize),
    });
    return this.request(`/scans/${scanId}/detections?${params}`);
  }

  createSession(scanId: string, operator: string, threshold: number): Promise<Session> {
    return this.request('/sessions', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ scan_id: scanId, operator, threshold }),
    });
  }

  postVerdict(sessionId: string, verdict: Verdict): Promise<Verdict> {
    return this.request(`/sessions/${sessionId}/verdicts`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(verdict),
    });
  }

  sessionReport(sessionId: string): Promise<SessionReport> {
    return this.request(`/sessions/${sessionId}/report`);
  }

  artifactUrl(scanId: string, tileId: string, kind: ArtifactKind): string {
    return `${this.baseUrl}/scans/${scanId}/tiles/${tileId}/${kind}`;
  }
}
