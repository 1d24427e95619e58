// DOM wiring for the triage dashboard. Keyboard-first: operators confirm,
// dismiss or defer with single keys; the mouse is only needed for the slider.

import { ApiClient } from './api.js';
import { ArtifactCache, OverlayMode, TriageController } from './triage.js';

const BASE_URL =
  new URLSearchParams(window.location.search).get('api') ?? 'http://127.0.0.1:8077';

const api = new ApiClient(BASE_URL);
const triage = new TriageController(api);
const cache = new ArtifactCache();

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const tileView = $<HTMLImageElement>('tile-view');
const slider = $<HTMLInputElement>('threshold');
const sliderValue = $('threshold-value');
const queueBadge = $('queue-badge');
const tileLabel = $('tile-label');
const statsPanel = $('stats');
const banner = $('banner');
const overlayButtons = Array.from(
  document.querySelectorAll<HTMLButtonElement>('button[data-mode]'),
);

function fmtMinutes(v: number | null): string {
  return v === null ? '-' : v.toFixed(1);
}

function renderStats(): void {
  const s = triage.stats;
  if (!s) {
    statsPanel.textContent = '';
    return;
  }
  // the panel repeats the server report verbatim; nothing is recomputed here
  statsPanel.innerHTML =
    `<span>reviewed <b>${s.reviewed}</b></span>` +
    `<span>confirmed <b>${s.confirmed}</b></span>` +
    `<span>dismissed <b>${s.dismissed}</b></span>` +
    `<span>unsure <b>${s.unsure}</b></span>` +
    `<span>total <b>${s.total_time_min.toFixed(1)}</b> min</span>` +
    `<span>avg/site <b>${fmtMinutes(s.avg_time_per_site_min)}</b> min</span>` +
    (triage.hasUnsyncedVerdicts() ? `<span class="unsynced">unsynced verdicts</span>` : '');
}

async function renderTile(): Promise<void> {
  const detection = triage.current();
  queueBadge.textContent =
    `${triage.queueSize()} in queue, ${triage.unreviewedCount()} unreviewed`;
  if (!detection) {
    tileLabel.textContent = 'queue complete';
    tileView.removeAttribute('src');
    renderStats();
    return;
  }
  tileLabel.textContent =
    `${detection.tile_id}  score ${detection.score.toFixed(3)}  rank ${detection.rank}`;
  for (const button of overlayButtons) {
    const mode = button.dataset.mode as OverlayMode;
    const available = triage.overlayModes().includes(mode);
    button.disabled = !available;
    button.title = available ? '' : 'no saliency artifacts for this tile';
    button.classList.toggle('active', triage.overlayMode === mode);
  }
  const url = triage.artifactUrl();
  if (url) tileView.src = await cache.load(url);
}

async function applyThreshold(value: number): Promise<void> {
  await triage.applyThreshold(value);
  sliderValue.textContent = value.toFixed(2);
  banner.hidden = !triage.retryBanner;
  await renderTile();
}

async function submit(decision: 'confirmed' | 'dismissed' | 'unsure'): Promise<void> {
  if (!triage.current()) return;
  await triage.submitVerdict(decision);
  if (triage.hasUnsyncedVerdicts()) void triage.flushPending().then(renderStats);
  renderStats();
  await renderTile();
}

async function setOverlay(mode: OverlayMode): Promise<void> {
  if (triage.setOverlay(mode)) await renderTile();
}

document.addEventListener('keydown', (event) => {
  if (event.target instanceof HTMLInputElement) return;
  const actions: Record<string, () => void> = {
    c: () => void submit('confirmed'),
    d: () => void submit('dismissed'),
    u: () => void submit('unsure'),
    '1': () => void setOverlay('tile'),
    '2': () => void setOverlay('saliency'),
    '3': () => void setOverlay('blend'),
  };
  actions[event.key.toLowerCase()]?.();
});

slider.addEventListener('change', () => void applyThreshold(Number(slider.value)));
$('banner-retry').addEventListener('click', () => void applyThreshold(Number(slider.value)));
window.addEventListener('online', () => void triage.flushPending().then(renderStats));

async function boot(): Promise<void> {
  const scans = await api.listScans();
  const first = scans[0];
  if (!first) {
    tileLabel.textContent = 'no scans loaded on the server';
    return;
  }
  await triage.start(first.scan_id, 'operator', Number(slider.value));
  sliderValue.textContent = slider.value;
  renderStats();
  await renderTile();
}

void boot();
