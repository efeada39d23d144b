// EFS/1 decoding for the dashboard. This mirrors the server's wire format:
// a header line, one P line, then F/A lines; text fields escape \\ \| \n.
// Rendered numbers must stay traceable to the wire integers, so frames keep
// their percent values and exposure as fractions is a single /100.

export const EMOTIONS = [
  "anger", "disgust", "fear", "happiness", "sadness", "surprise", "neutral",
] as const;

export const N_EMOTIONS = EMOTIONS.length;

export interface FrameEvent {
  kind: "frame";
  dtMs: number;
  percents: number[]; // integers 0..100 summing to 100, fixed emotion order
}

export interface ActivityEvent {
  kind: "activity";
  dtMs: number;
  text: string;
}

export type WireEvent = FrameEvent | ActivityEvent;

export interface PatientCard {
  patientId: string;
  displayName: string;
  age: number;
  notes: string;
}

export interface SessionPayload {
  sessionId: string;
  t0Ms: number;
  window: [number, number] | null;
  card: PatientCard;
  frames: FrameEvent[];
  activities: ActivityEvent[];
}

export class EfsError extends Error {
  constructor(public line: number, message: string) {
    super(`line ${line}: ${message}`);
  }
}

export function unescapeText(s: string, line: number): string {
  let out = "";
  for (let i = 0; i < s.length; i++) {
    const c = s[i];
    if (c !== "\\") {
      out += c;
      continue;
    }
    const next = s[i + 1];
    if (next === undefined) throw new EfsError(line, "dangling escape");
    if (next === "\\") out += "\\";
    else if (next === "|") out += "|";
    else if (next === "n") out += "\n";
    else throw new EfsError(line, `unknown escape \\${next}`);
    i++;
  }
  return out;
}

export function escapeText(s: string): string {
  return s.replace(/\\/g, "\\\\").replace(/\|/g, "\\|").replace(/\n/g, "\\n");
}

function splitFields(body: string): string[] {
  const fields: string[] = [];
  let cur = "";
  for (let i = 0; i < body.length; i++) {
    const c = body[i];
    if (c === "\\" && i + 1 < body.length) {
      cur += c + body[i + 1];
      i++;
    } else if (c === "|") {
      fields.push(cur);
      cur = "";
    } else {
      cur += c;
    }
  }
  fields.push(cur);
  return fields;
}

function parseIntStrict(s: string, line: number, what: string): number {
  if (!/^-?\d+$/.test(s)) throw new EfsError(line, `bad ${what}: ${JSON.stringify(s)}`);
  return parseInt(s, 10);
}

/** Parse one F or A line (with its leading tag). */
export function parseLine(raw: string, line = 1): WireEvent {
  if (raw.startsWith("F|")) {
    const fields = splitFields(raw.slice(2));
    if (fields.length !== 2) throw new EfsError(line, "frame line needs dt and percentages");
    const dtMs = parseIntStrict(fields[0], line, "frame dt");
    const parts = fields[1].split(",");
    if (parts.length !== N_EMOTIONS) {
      throw new EfsError(line, `expected ${N_EMOTIONS} percentages, got ${parts.length}`);
    }
    const percents = parts.map((p) => parseIntStrict(p, line, "percentage"));
    const sum = percents.reduce((a, b) => a + b, 0);
    if (sum !== 100) throw new EfsError(line, `percentages sum to ${sum}, not 100`);
    if (percents.some((p) => p < 0 || p > 100)) {
      throw new EfsError(line, "percentage out of [0,100]");
    }
    if (dtMs < 0) throw new EfsError(line, "negative dt");
    return { kind: "frame", dtMs, percents };
  }
  if (raw.startsWith("A|")) {
    const fields = splitFields(raw.slice(2));
    if (fields.length !== 2) throw new EfsError(line, "activity line needs dt and text");
    const dtMs = parseIntStrict(fields[0], line, "activity dt");
    const text = unescapeText(fields[1], line);
    if (!text) throw new EfsError(line, "empty activity text");
    return { kind: "activity", dtMs, text };
  }
  throw new EfsError(line, `unknown line type ${JSON.stringify(raw.slice(0, 2))}`);
}

/** Parse a whole export payload (header + P line + events). */
export function parsePayload(text: string): SessionPayload {
  const lines = text.split("\n");
  if (lines.length && lines[lines.length - 1] === "") lines.pop();
  if (!lines.length) throw new EfsError(1, "empty payload");
  const head = lines[0].split(" ");
  if (head[0] !== "EFS1" || (head.length !== 3 && head.length !== 5)) {
    throw new EfsError(1, `bad header ${JSON.stringify(lines[0])}`);
  }
  const t0Ms = parseIntStrict(head[2], 1, "t0");
  const window: [number, number] | null = head.length === 5
    ? [parseIntStrict(head[3], 1, "from"), parseIntStrict(head[4], 1, "to")]
    : null;
  if (lines.length < 2 || !lines[1].startsWith("P|")) {
    throw new EfsError(2, "expected patient line after header");
  }
  const pf = splitFields(lines[1].slice(2));
  if (pf.length !== 4) throw new EfsError(2, `patient line needs 4 fields, got ${pf.length}`);
  const card: PatientCard = {
    patientId: unescapeText(pf[0], 2),
    displayName: unescapeText(pf[1], 2),
    age: parseIntStrict(pf[2], 2, "age"),
    notes: unescapeText(pf[3], 2),
  };
  const frames: FrameEvent[] = [];
  const activities: ActivityEvent[] = [];
  for (let i = 2; i < lines.length; i++) {
    const ev = parseLine(lines[i], i + 1);
    if (ev.kind === "frame") frames.push(ev);
    else activities.push(ev);
  }
  return { sessionId: head[1], t0Ms, window, card, frames, activities };
}

/** Keep only events with dtMs in [fromMs, toMs] (the client-side mirror of
 * the server's export filter). */
export function filterEvents<T extends { dtMs: number }>(
  events: T[], fromMs: number, toMs: number,
): T[] {
  return events.filter((e) => e.dtMs >= fromMs && e.dtMs <= toMs);
}

export function formatClock(dtMs: number): string {
  const totalS = Math.floor(dtMs / 1000);
  const mm = Math.floor(totalS / 60).toString().padStart(2, "0");
  const ss = (totalS % 60).toString().padStart(2, "0");
  return `${mm}:${ss}`;
}
