// Page wiring: login -> patient records -> live session / history playback.
// All state lives in memory for the tab's lifetime; an expired token sends
// the user back to the login page without discarding the in-memory view.

import { ApiClient, AuthRequired } from "./api.js";
import { filterEvents, formatClock, parsePayload, PatientCard } from "./efs.js";
import { EmotionPlot, renderLegend } from "./plot.js";
import { SessionView } from "./state.js";
import { LiveStream } from "./stream.js";

const SERVICE_URL = (window as { SERVICE_URL?: string }).SERVICE_URL
  ?? "http://127.0.0.1:8750";

const api = new ApiClient(SERVICE_URL);
const view = new SessionView();

let plot: EmotionPlot;
let live: LiveStream | null = null;
let sessionId: string | null = null;
let t0Ms = 0;
let playback = false; // history exports are read-only

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showPage(name: "login" | "records" | "session"): void {
  for (const page of ["login", "records", "session"]) {
    el(`page-${page}`).style.display = page === name ? "block" : "none";
  }
}

function toLogin(message?: string): void {
  if (live) { live.stop(); live = null; }
  el("login-error").textContent = message ?? "";
  showPage("login");
}

async function guarded<T>(work: () => Promise<T>): Promise<T | undefined> {
  try {
    return await work();
  } catch (err) {
    if (err instanceof AuthRequired) {
      toLogin("Session expired; sign in again. Your view is preserved.");
      return undefined;
    }
    throw err;
  }
}

// ---------------------------------------------------------------------------
// login page
// ---------------------------------------------------------------------------

async function onLogin(): Promise<void> {
  const user = el<HTMLInputElement>("login-user").value;
  const secret = el<HTMLInputElement>("login-secret").value;
  try {
    await api.login(user, secret);
  } catch {
    // deliberately unspecific: do not reveal which field was wrong
    el("login-error").textContent = "Sign-in failed.";
    return;
  }
  await loadRecords();
  showPage("records");
}

// ---------------------------------------------------------------------------
// records page
// ---------------------------------------------------------------------------

async function loadRecords(): Promise<void> {
  const cards = await guarded(() => api.listPatients());
  if (!cards) return;
  const list = el("patient-list");
  list.innerHTML = "";
  for (const card of cards) {
    list.appendChild(patientRow(card));
  }
  if (!cards.length) {
    list.textContent = "No patient cards yet.";
  }
}

function patientRow(card: PatientCard): HTMLElement {
  const row = document.createElement("div");
  row.className = "patient-row";
  const label = document.createElement("span");
  label.textContent = `${card.displayName} (${card.patientId}, ${card.age})`;
  const start = document.createElement("button");
  start.textContent = "Start session";
  start.onclick = () => void startSession(card);
  row.appendChild(label);
  row.appendChild(start);
  return row;
}

// ---------------------------------------------------------------------------
// live session page
// ---------------------------------------------------------------------------

async function startSession(card: PatientCard): Promise<void> {
  const opened = await guarded(() => api.openSession(card.patientId));
  if (!opened) return;
  sessionId = opened.sessionId;
  t0Ms = opened.t0Ms;
  playback = false;
  view.reset();
  el("session-title").textContent =
    `Live session ${sessionId} — ${card.displayName}`;
  el<HTMLButtonElement>("activity-send").disabled = false;
  showPage("session");
  startLive();
}

function startLive(): void {
  live?.stop();
  live = new LiveStream({
    makeUrl: (fromDt) => api.liveUrl(sessionId as string, fromDt),
    lastDt: () => view.lastDtMs,
    onLine: (line) => {
      view.ingestLine(line, Date.now());
      redraw();
    },
    onStateChange: (connected) => {
      el("connection-state").textContent = connected ? "connected" : "reconnecting…";
      if (connected) void flushPending();
    },
  });
  live.start();
  window.setInterval(tick, 1000);
}

function tick(): void {
  const now = Date.now();
  el("stall-indicator").style.display =
    !playback && view.isStalled(now) ? "inline" : "none";
  if (!playback && sessionId) {
    el("session-clock").textContent = formatClock(now - t0Ms);
  }
  el("malformed-counter").textContent =
    view.malformedCount ? `${view.malformedCount} malformed line(s) skipped` : "";
}

function redraw(): void {
  plot.draw({ points: view.points, activities: view.activities });
}

async function onRegisterActivity(): Promise<void> {
  const input = el<HTMLInputElement>("activity-text");
  const text = input.value.trim();
  if (!text || !sessionId || playback) return;
  const dtGuess = Date.now() - t0Ms;
  const localId = view.addPendingActivity(text, dtGuess);
  input.value = "";
  redraw();
  await guarded(async () => {
    try {
      const acked = await api.postActivity(sessionId as string, dtGuess, text);
      view.markSaved(localId, acked);
    } catch (err) {
      if (err instanceof AuthRequired) throw err;
      view.markFailed(localId); // kept on the plot, flagged for retry
    }
    redraw();
  });
}

async function flushPending(): Promise<void> {
  if (!sessionId || playback) return;
  for (const marker of view.pendingOrFailed()) {
    try {
      const acked = await api.postActivity(sessionId, marker.dtMs, marker.text);
      view.markSaved(marker.localId, acked);
    } catch {
      view.markFailed(marker.localId);
    }
  }
  redraw();
}

// ---------------------------------------------------------------------------
// history playback (range-filtered export)
// ---------------------------------------------------------------------------

async function onBrowseHistory(): Promise<void> {
  if (!sessionId) return;
  const fromS = Number(el<HTMLInputElement>("range-from").value);
  const toS = Number(el<HTMLInputElement>("range-to").value);
  const payloadText = await guarded(() =>
    api.exportSession(sessionId as string, fromS * 1000, toS * 1000));
  if (payloadText === undefined) return;
  const payload = parsePayload(payloadText);
  playback = true;
  live?.stop();
  el<HTMLButtonElement>("activity-send").disabled = true; // history is read-only
  view.reset();
  for (const f of payload.frames) view.ingestFrame(f, Date.now());
  for (const a of payload.activities) view.ingestActivity(a);
  el("session-title").textContent =
    payload.frames.length || payload.activities.length
      ? `History ${payload.sessionId} [${formatClock(fromS * 1000)}–${formatClock(toS * 1000)}]`
      : "No data in the selected range";
  redraw();
}

/** Sanity hook used by manual testing: the range filter client-side must
 * equal what the server returns for the same bounds. */
export async function verifyRangeFilter(fromMs: number, toMs: number): Promise<boolean> {
  if (!sessionId) return false;
  const [fullText, filteredText] = await Promise.all([
    api.exportSession(sessionId),
    api.exportSession(sessionId, fromMs, toMs),
  ]);
  const full = parsePayload(fullText);
  const filtered = parsePayload(filteredText);
  const expectFrames = filterEvents(full.frames, fromMs, toMs);
  const expectActs = filterEvents(full.activities, fromMs, toMs);
  return JSON.stringify(expectFrames) === JSON.stringify(filtered.frames)
    && JSON.stringify(expectActs) === JSON.stringify(filtered.activities);
}

// ---------------------------------------------------------------------------

export function boot(): void {
  plot = new EmotionPlot(el<HTMLCanvasElement>("plot-canvas"));
  renderLegend(el("plot-legend"));
  el<HTMLButtonElement>("login-submit").onclick = () => void onLogin();
  el<HTMLButtonElement>("activity-send").onclick = () => void onRegisterActivity();
  el<HTMLButtonElement>("range-apply").onclick = () => void onBrowseHistory();
  el<HTMLInputElement>("activity-text").addEventListener("input", (ev) => {
    const input = ev.target as HTMLInputElement;
    el<HTMLButtonElement>("activity-send").disabled =
      playback || input.value.trim() === "";
  });
  toLogin();
}

if (typeof document !== "undefined" && document.getElementById("page-login")) {
  boot();
}
