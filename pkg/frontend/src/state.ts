// Session view-model: everything the live page renders, kept free of DOM
// so it can be driven by scripted streams in tests.
//
// Frames append one point per emotion series; values are exactly the wire
// integers divided by 100. The rolling window caps memory for long
// sessions; a stall flag trips when no frame arrives for `stallMs`.

import { ActivityEvent, EMOTIONS, FrameEvent, parseLine } from "./efs.js";

export interface PlotPoint {
  dtMs: number;
  values: number[]; // percents / 100, one per emotion
}

export type ActivityStatus = "pending" | "saved" | "failed";

export interface ActivityMarker {
  localId: number;
  dtMs: number;
  text: string;
  status: ActivityStatus;
}

export interface SessionViewOptions {
  windowPoints?: number; // max points kept per series
  stallMs?: number;      // stall indicator threshold
}

export class SessionView {
  readonly windowPoints: number;
  readonly stallMs: number;

  points: PlotPoint[] = [];
  activities: ActivityMarker[] = [];
  malformedCount = 0;
  lastFrameWallMs: number | null = null;
  private nextLocalId = 1;

  constructor(opts: SessionViewOptions = {}) {
    this.windowPoints = opts.windowPoints ?? 3600;
    this.stallMs = opts.stallMs ?? 5000;
  }

  /** Latest frame dt seen; resume point for stream reconnects. */
  get lastDtMs(): number {
    let last = -1;
    if (this.points.length) last = this.points[this.points.length - 1].dtMs;
    for (const a of this.activities) {
      if (a.status === "saved" && a.dtMs > last) last = a.dtMs;
    }
    return last;
  }

  /** Feed one wire line from the live stream. Malformed lines are counted
   * and skipped, never thrown. */
  ingestLine(raw: string, wallNowMs: number): void {
    let ev;
    try {
      ev = parseLine(raw);
    } catch {
      this.malformedCount++;
      return;
    }
    if (ev.kind === "frame") this.ingestFrame(ev, wallNowMs);
    else this.ingestActivity(ev);
  }

  ingestFrame(frame: FrameEvent, wallNowMs: number): void {
    this.points.push({
      dtMs: frame.dtMs,
      values: frame.percents.map((p) => p / 100),
    });
    if (this.points.length > this.windowPoints) {
      this.points.splice(0, this.points.length - this.windowPoints);
    }
    this.lastFrameWallMs = wallNowMs;
  }

  /** A server-acked activity (from the stream or an export). Skips entries
   * already reconciled from our own optimistic submission. */
  ingestActivity(act: ActivityEvent): void {
    const mine = this.activities.find(
      (a) => a.status === "saved" && a.dtMs === act.dtMs && a.text === act.text);
    if (mine) return;
    this.activities.push({
      localId: this.nextLocalId++,
      dtMs: act.dtMs,
      text: act.text,
      status: "saved",
    });
  }

  /** Optimistic local registration; reconcile with markSaved/markFailed. */
  addPendingActivity(text: string, dtMsGuess: number): number {
    const localId = this.nextLocalId++;
    this.activities.push({ localId, dtMs: dtMsGuess, text, status: "pending" });
    return localId;
  }

  markSaved(localId: number, ackedDtMs: number): void {
    const a = this.activities.find((x) => x.localId === localId);
    if (!a) return;
    a.status = "saved";
    a.dtMs = ackedDtMs;
  }

  markFailed(localId: number): void {
    const a = this.activities.find((x) => x.localId === localId);
    if (a) a.status = "failed";
  }

  pendingOrFailed(): ActivityMarker[] {
    return this.activities.filter((a) => a.status !== "saved");
  }

  isStalled(wallNowMs: number): boolean {
    if (this.lastFrameWallMs === null) return false;
    return wallNowMs - this.lastFrameWallMs > this.stallMs;
  }

  /** Series view for the plot: one array of points per emotion. */
  series(): { name: string; points: { dtMs: number; value: number }[] }[] {
    return EMOTIONS.map((name, i) => ({
      name,
      points: this.points.map((p) => ({ dtMs: p.dtMs, value: p.values[i] })),
    }));
  }

  reset(): void {
    this.points = [];
    this.activities = [];
    this.malformedCount = 0;
    this.lastFrameWallMs = null;
  }
}
