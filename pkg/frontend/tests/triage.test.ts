import { describe, expect, it } from 'vitest';

import { ApiClient, DetectionSummary, SessionReport, Verdict } from '../src/api.js';
import { ArtifactCache, TriageController } from '../src/triage.js';

// ---------------------------------------------------------------------------
// In-memory stand-in for the review service, mirroring its semantics:
// inclusive threshold filter, rank order, verdict supersede + idempotent
// dedupe, report computed from stored verdicts.

interface MockState {
  verdictPosts: Verdict[];
  offline: boolean;
}

function minutesBetween(a: string, b: string): number {
  return (Date.parse(b) - Date.parse(a)) / 60000;
}

function mockServer(detections: DetectionSummary[]) {
  const state: MockState = { verdictPosts: [], offline: false };
  const verdicts = new Map<string, Verdict>(); // final verdict per tile
  const scanId = 'scan-1';
  const sessionId = 'sess-1';

  function report(): SessionReport {
    const final = [...verdicts.values()];
    const count = (d: string) => final.filter((v) => v.decision === d).length;
    const total = final.reduce(
      (acc, v) => acc + minutesBetween(v.opened_at, v.decided_at), 0);
    const confirmed = count('confirmed');
    return {
      session_id: sessionId,
      reviewed: final.length,
      confirmed,
      dismissed: count('dismissed'),
      unsure: count('unsure'),
      total_time_min: total,
      avg_time_per_site_min: confirmed ? total / confirmed : null,
    };
  }

  const json = (body: unknown) =>
    new Response(JSON.stringify(body), {
      status: 200, headers: { 'content-type': 'application/json' } });

  async function fetchFn(rawUrl: string, init?: RequestInit): Promise<Response> {
    const url = new URL(rawUrl);
    const path = url.pathname;
    if (init?.method === 'POST' && state.offline) {
      throw new TypeError('fetch failed'); // what fetch throws with no network
    }
    if (path === '/scans') {
      return json([{ scan_id: scanId, tile_count: detections.length, report: {} }]);
    }
    if (path === `/scans/${scanId}/detections`) {
      const minScore = Number(url.searchParams.get('min_score') ?? 0);
      const hits = detections
        .filter((d) => d.score >= minScore)
        .sort((a, b) => a.rank - b.rank);
      return json({ scan_id: scanId, total: hits.length, page: 1,
                    page_size: 500, items: hits });
    }
    if (path === '/sessions' && init?.method === 'POST') {
      return json({ session_id: sessionId, scan_id: scanId, operator: 'op',
                    threshold: 0.2, created_at: '2026-08-10T08:00:00Z' });
    }
    if (path === `/sessions/${sessionId}/verdicts` && init?.method === 'POST') {
      const verdict = JSON.parse(String(init.body)) as Verdict;
      state.verdictPosts.push(verdict);
      const existing = verdicts.get(verdict.tile_id);
      if (!existing || JSON.stringify(existing) !== JSON.stringify(verdict)) {
        verdicts.set(verdict.tile_id, verdict); // supersede; identical replay is a no-op
      }
      return json(verdict);
    }
    if (path === `/sessions/${sessionId}/report`) {
      return json(report());
    }
    return new Response('not found', { status: 404 });
  }

  return { fetchFn, state, report, scanId };
}

function fixtureDetections(): DetectionSummary[] {
  const scores = [1.0, 0.85, 0.64, 0.36, 0.16, 0.04];
  return scores.map((score, i) => ({
    tile_id: `000${i}_0000`,
    score,
    rank: i + 1,
    color: score >= 0.2 ? '#FF0000' : null,
    has_saliency: score >= 0.2,
  }));
}

function tickingClock(startMinute = 0): () => string {
  let minute = startMinute;
  return () => `2026-08-10T10:${String(minute++).padStart(2, '0')}:00Z`;
}

async function startTriage(detections = fixtureDetections()) {
  const server = mockServer(detections);
  const api = new ApiClient('http://svc', server.fetchFn);
  const triage = new TriageController(api, tickingClock());
  await triage.start(server.scanId, 'op', 0.2);
  return { triage, server, api };
}

// ---------------------------------------------------------------------------

describe('threshold slider', () => {
  it('queue sizes match the API counts at 0.2 and 0.7', async () => {
    const { triage } = await startTriage();
    expect(triage.queueSize()).toBe(4); // scores >= 0.2
    await triage.applyThreshold(0.7);
    expect(triage.queueSize()).toBe(2); // 1.0 and 0.85
  });

  it('raising the threshold never grows the queue', async () => {
    const { triage } = await startTriage();
    let previous = Infinity;
    for (const value of [0.0, 0.2, 0.5, 0.7, 0.9, 1.0]) {
      await triage.applyThreshold(value);
      expect(triage.queueSize()).toBeLessThanOrEqual(previous);
      previous = triage.queueSize();
    }
  });

  it('threshold 0 shows the full queue, 1.0 only perfect scores', async () => {
    const { triage } = await startTriage();
    await triage.applyThreshold(0);
    expect(triage.queueSize()).toBe(6);
    await triage.applyThreshold(1.0);
    expect(triage.queueSize()).toBe(1);
    expect(triage.current()?.score).toBe(1.0);
  });

  it('resets the position to the first unreviewed detection', async () => {
    const { triage } = await startTriage();
    await triage.submitVerdict('confirmed'); // reviews rank 1
    await triage.applyThreshold(0.0);
    expect(triage.current()?.rank).toBe(2);
  });

  it('keeps state and raises the banner when the API fails', async () => {
    const server = mockServer(fixtureDetections());
    let broken = false;
    const api = new ApiClient('http://svc', async (url, init) => {
      if (broken && url.includes('/detections')) throw new TypeError('down');
      return server.fetchFn(url, init);
    });
    const triage = new TriageController(api, tickingClock());
    await triage.start(server.scanId, 'op', 0.2);
    broken = true;
    await triage.applyThreshold(0.9);
    expect(triage.retryBanner).toBe(true);
    expect(triage.queueSize()).toBe(4); // previous queue preserved
    expect(triage.threshold).toBe(0.2);
  });
});

describe('verdict flow', () => {
  it('stats panel equals the server report exactly', async () => {
    const { triage, server, api } = await startTriage();
    await triage.submitVerdict('confirmed');
    await triage.submitVerdict('dismissed');
    const serverReport = await api.sessionReport('sess-1');
    expect(triage.stats).toEqual(serverReport);
    expect(triage.stats).toEqual(server.report());
    expect(triage.stats?.reviewed).toBe(2);
    expect(triage.stats?.confirmed).toBe(1);
  });

  it('every submitted verdict has opened_at strictly before decided_at', async () => {
    const { triage, server } = await startTriage();
    await triage.submitVerdict('confirmed');
    await triage.submitVerdict('unsure');
    for (const v of server.state.verdictPosts) {
      expect(Date.parse(v.opened_at)).toBeLessThan(Date.parse(v.decided_at));
    }
  });

  it('advances through the queue and ends on a completion state', async () => {
    const { triage } = await startTriage();
    await triage.applyThreshold(0.7); // two tiles
    expect(await triage.submitVerdict('confirmed')).toBe('next');
    expect(await triage.submitVerdict('dismissed')).toBe('complete');
    expect(triage.current()).toBeNull();
    expect(triage.isComplete()).toBe(true);
    expect(triage.stats?.reviewed).toBe(2);
  });
});

describe('offline verdicts', () => {
  it('queues on network failure and replays exactly once', async () => {
    const { triage, server } = await startTriage();
    server.state.offline = true;
    await triage.submitVerdict('confirmed');
    expect(triage.hasUnsyncedVerdicts()).toBe(true);
    expect(server.report().reviewed).toBe(0);

    server.state.offline = false;
    const delivered = await triage.flushPending();
    expect(delivered).toBe(1);
    expect(triage.hasUnsyncedVerdicts()).toBe(false);
    expect(server.report().reviewed).toBe(1);

    // nothing left to deliver; the server saw exactly one effective verdict
    expect(await triage.flushPending()).toBe(0);
    expect(server.report().reviewed).toBe(1);
  });

  it('identical redelivery after a lost response stays idempotent', async () => {
    const { triage, server } = await startTriage();
    // the POST reaches the server but the response is lost on the way back
    let loseResponse = true;
    const flaky = server.fetchFn;
    (triage as unknown as { api: ApiClient }); // controller holds its own client
    const api = new ApiClient('http://svc', async (url, init) => {
      const resp = await flaky(url, init);
      if (loseResponse && url.includes('/verdicts') && init?.method === 'POST') {
        loseResponse = false;
        throw new TypeError('connection reset');
      }
      return resp;
    });
    const t2 = new TriageController(api, tickingClock(30));
    await t2.start(server.scanId, 'op', 0.2);
    await t2.submitVerdict('confirmed'); // server applied it, client queued it
    expect(t2.hasUnsyncedVerdicts()).toBe(true);
    const before = server.report();
    expect(before.reviewed).toBe(1);

    await t2.flushPending(); // byte-identical replay
    const after = server.report();
    expect(after).toEqual(before); // applied at most once
    expect(server.state.verdictPosts.length).toBe(2); // two posts, one effect
  });
});

describe('overlay modes', () => {
  it('disables saliency modes for tiles without artifacts', async () => {
    const { triage } = await startTriage();
    await triage.applyThreshold(0.0);
    // walk to the last tile (score 0.04, no saliency)
    for (let i = 0; i < 5; i++) await triage.submitVerdict('dismissed');
    expect(triage.current()?.has_saliency).toBe(false);
    expect(triage.overlayModes()).toEqual(['tile']);
    expect(triage.setOverlay('saliency')).toBe(false);
    expect(triage.overlayMode).toBe('tile');
  });

  it('builds artifact URLs per mode', async () => {
    const { triage } = await startTriage();
    expect(triage.setOverlay('blend')).toBe(true);
    expect(triage.artifactUrl()).toBe(
      'http://svc/scans/scan-1/tiles/0000_0000/overlay');
    expect(triage.artifactUrl('tile')).toBe(
      'http://svc/scans/scan-1/tiles/0000_0000/image');
  });

  it('mode switches never refetch cached images', async () => {
    const cache = new ArtifactCache(
      async () => new Response(new Blob(['png'])),
      () => 'blob:fake',
    );
    const urlA = 'http://svc/scans/s/tiles/t/image';
    const urlB = 'http://svc/scans/s/tiles/t/overlay';
    await cache.load(urlA);
    await cache.load(urlB);
    await cache.load(urlA); // back to the first mode
    await cache.load(urlB);
    expect(cache.fetchCount).toBe(2);
  });
});
