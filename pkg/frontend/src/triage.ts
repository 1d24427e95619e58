// Triage state machine, kept free of DOM so it can be tested headless.
//
// The queue always mirrors the server's detection list at the current
// threshold; session statistics are taken verbatim from GET report (the
// server is the single source of truth, nothing is recomputed client-side).
// Verdicts that fail to reach the server are kept in a local retry queue and
// replayed with their original timestamps, so redelivery is idempotent.

import {
  ApiClient,
  ApiError,
  Decision,
  DetectionSummary,
  Session,
  SessionReport,
  Verdict,
} from './api.js';

export type OverlayMode = 'tile' | 'saliency' | 'blend';

const ARTIFACT_FOR_MODE = { tile: 'image', saliency: 'saliency', blend: 'overlay' } as const;

export type Clock = () => string;

const isoNow: Clock = () => new Date().toISOString();

export class TriageController {
  session: Session | null = null;
  threshold = 0.2;
  overlayMode: OverlayMode = 'tile';
  stats: SessionReport | null = null;
  retryBanner = false;

  private queue: DetectionSummary[] = [];
  private total = 0;
  private index = 0;
  private reviewed = new Set<string>();
  private openedAt: string | null = null;
  private pending: Verdict[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly clock: Clock = isoNow,
  ) {}

  async start(scanId: string, operator: string, threshold: number): Promise<void> {
    this.session = await this.api.createSession(scanId, operator, threshold);
    await this.applyThreshold(threshold);
    await this.refreshStats();
  }

  /** Refetch the queue at the slider value; on API failure the previous
   * queue is preserved and a retry banner is raised. */
  async applyThreshold(value: number): Promise<void> {
    if (!this.session) throw new Error('no active session');
    try {
      const page = await this.api.listDetections(this.session.scan_id, value);
      this.queue = page.items;
      this.total = page.total;
      this.threshold = value;
      this.retryBanner = false;
      this.index = this.firstUnreviewed();
      this.markDisplayed();
    } catch {
      this.retryBanner = true;
    }
  }

  queueSize(): number {
    return this.total;
  }

  unreviewedCount(): number {
    return this.queue.filter((d) => !this.reviewed.has(d.tile_id)).length;
  }

  isComplete(): boolean {
    return this.unreviewedCount() === 0;
  }

  current(): DetectionSummary | null {
    return this.isComplete() ? null : this.queue[this.index] ?? null;
  }

  currentOpenedAt(): string | null {
    return this.openedAt;
  }

  /** Record the display instant of the current tile; review timing starts here. */
  markDisplayed(): void {
    this.openedAt = this.current() ? this.clock() : null;
  }

  /** Post the verdict for the displayed tile and advance. A network failure
   * queues the verdict (original timestamps kept) for later replay. */
  async submitVerdict(decision: Decision): Promise<'next' | 'complete'> {
    const detection = this.current();
    if (!detection || !this.session || !this.openedAt) {
      throw new Error('no detection displayed');
    }
    const verdict: Verdict = {
      tile_id: detection.tile_id,
      decision,
      opened_at: this.openedAt,
      decided_at: this.clock(),
    };
    this.reviewed.add(detection.tile_id);
    try {
      await this.api.postVerdict(this.session.session_id, verdict);
      await this.refreshStats();
    } catch (err) {
      if (err instanceof ApiError) throw err; // server rejected: do not retry
      this.pending.push(verdict);
    }
    this.index = this.firstUnreviewed();
    this.markDisplayed();
    return this.isComplete() ? 'complete' : 'next';
  }

  hasUnsyncedVerdicts(): boolean {
    return this.pending.length > 0;
  }

  /** Replay queued verdicts in order; stops at the first failure. Replays
   * are byte-identical to the original submissions, so the server applies
   * each at most once. */
  async flushPending(): Promise<number> {
    if (!this.session) return 0;
    let delivered = 0;
    while (this.pending.length > 0) {
      const verdict = this.pending[0]!;
      try {
        await this.api.postVerdict(this.session.session_id, verdict);
      } catch (err) {
        if (err instanceof ApiError) {
          this.pending.shift(); // permanently rejected; keeping it would wedge the queue
          continue;
        }
        break;
      }
      this.pending.shift();
      delivered += 1;
    }
    if (delivered > 0) await this.refreshStats();
    return delivered;
  }

  /** Mirror the server report verbatim. */
  async refreshStats(): Promise<void> {
    if (!this.session) return;
    this.stats = await this.api.sessionReport(this.session.session_id);
  }

  overlayModes(): OverlayMode[] {
    const detection = this.current();
    return detection?.has_saliency ? ['tile', 'saliency', 'blend'] : ['tile'];
  }

  /** Switch the view mode; returns false (and keeps the mode) when the tile
   * has no saliency artifacts. */
  setOverlay(mode: OverlayMode): boolean {
    if (!this.overlayModes().includes(mode)) return false;
    this.overlayMode = mode;
    return true;
  }

  artifactUrl(mode: OverlayMode = this.overlayMode): string | null {
    const detection = this.current();
    if (!detection || !this.session) return null;
    return this.api.artifactUrl(this.session.scan_id, detection.tile_id,
                                ARTIFACT_FOR_MODE[mode]);
  }

  private firstUnreviewed(): number {
    for (let i = this.index; i < this.queue.length; i++) {
      if (!this.reviewed.has(this.queue[i]!.tile_id)) return i;
    }
    for (let i = 0; i < this.queue.length; i++) {
      if (!this.reviewed.has(this.queue[i]!.tile_id)) return i;
    }
    return 0;
  }
}

/** Per-tile artifact cache: each (tile, mode) image is fetched once and kept
 * as an object URL; switching modes never refetches. */
export class ArtifactCache {
  private urls = new Map<string, string>();
  fetchCount = 0;

  constructor(
    private readonly fetchFn: (url: string) => Promise<Response> = (url) => fetch(url),
    private readonly toObjectUrl: (blob: Blob) => string = (blob) => URL.createObjectURL(blob),
  ) {}

  async load(url: string): Promise<string> {
    const hit = this.urls.get(url);
    if (hit) return hit;
    this.fetchCount += 1;
    const resp = await this.fetchFn(url);
    if (!resp.ok) throw new ApiError(`GET ${url} -> ${resp.status}`, resp.status);
    const objectUrl = this.toObjectUrl(await resp.blob());
    this.urls.set(url, objectUrl);
    return objectUrl;
  }
}
