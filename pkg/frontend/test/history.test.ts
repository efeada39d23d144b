import { describe, expect, test } from "vitest";

import { filterEvents, parsePayload } from "../src/efs.js";

/** Build an export payload the way the server does: header (with window
 * when filtered), patient line, then F/A lines merged by dt. */
function buildExport(
  frames: { dtMs: number; percents: number[] }[],
  activities: { dtMs: number; text: string }[],
  window?: [number, number],
): string {
  let f = frames;
  let a = activities;
  let head = "EFS1 s7 1690000000000";
  if (window) {
    head += ` ${window[0]} ${window[1]}`;
    f = f.filter((x) => x.dtMs >= window[0] && x.dtMs <= window[1]);
    a = a.filter((x) => x.dtMs >= window[0] && x.dtMs <= window[1]);
  }
  const lines = [head, "P|p7|Pat Seven|52|longitudinal study"];
  let fi = 0, ai = 0;
  while (fi < f.length || ai < a.length) {
    if (ai >= a.length || (fi < f.length && f[fi].dtMs <= a[ai].dtMs)) {
      lines.push(`F|${f[fi].dtMs}|${f[fi].percents.join(",")}`);
      fi++;
    } else {
      lines.push(`A|${a[ai].dtMs}|${a[ai].text}`);
      ai++;
    }
  }
  return lines.join("\n") + "\n";
}

function sampleData() {
  const frames = [];
  for (let i = 0; i < 90; i++) {
    const percents = [10, 10, 10, 10, 10, 10, 10];
    percents[i % 7] += 30;
    frames.push({ dtMs: i * 1000, percents });
  }
  const activities = [
    { dtMs: 5_000, text: "intro" },
    { dtMs: 30_000, text: "exercise" },
    { dtMs: 70_500, text: "wrap-up" },
  ];
  return { frames, activities };
}

describe("range-filtered history", () => {
  test("server-filtered export equals client-side filtering of the full export",
       () => {
    const { frames, activities } = sampleData();
    const fullText = buildExport(frames, activities);
    const full = parsePayload(fullText);

    for (const [fromMs, toMs] of [[10_000, 40_000], [0, 89_000],
                                  [70_000, 71_000], [85_000, 200_000]] as const) {
      const filteredText = buildExport(frames, activities, [fromMs, toMs]);
      const filtered = parsePayload(filteredText);

      expect(filtered.frames).toEqual(filterEvents(full.frames, fromMs, toMs));
      expect(filtered.activities).toEqual(
        filterEvents(full.activities, fromMs, toMs));
      expect(filtered.window).toEqual([fromMs, toMs]);
    }
  });

  test("empty range leaves header and card only", () => {
    const { frames, activities } = sampleData();
    const payload = parsePayload(buildExport(frames, activities,
                                             [500_000, 600_000]));
    expect(payload.frames).toEqual([]);
    expect(payload.activities).toEqual([]);
    expect(payload.card.patientId).toBe("p7");
  });

  test("full range equals the unfiltered export's events", () => {
    const { frames, activities } = sampleData();
    const full = parsePayload(buildExport(frames, activities));
    const ranged = parsePayload(buildExport(frames, activities, [0, 89_000]));
    expect(ranged.frames).toEqual(full.frames);
    expect(ranged.activities).toEqual(full.activities);
  });
});
