import { describe, expect, it } from "vitest";
import { mkdtempSync, readFileSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";

import { aggregate, parseMetricsCsv } from "../src/csv.js";
import { BUILTIN_SPECS } from "../src/figspec.js";
import { render, renderSvg } from "../src/render.js";
import { REQUIRED_COLUMNS, SchemaError, assertSchema } from "../src/schema.js";

const HEADER = REQUIRED_COLUMNS.join(",");

function row(over: Partial<Record<string, string | number>> = {}): string {
  const base: Record<string, string | number> = {
    n: 64, alpha: 3, config: "config1", tau_s: 20.0, block_bytes: 1000000,
    malicious_frac: 0.0, seed: 1, slots: 30, throughput_tps: 2.5,
    latency_min_s: 78.0, latency_avg_s: 95.0, latency_max_s: 140.0,
    orphan_rate: 0.02, avg_round_s: 0.6, avg_blocks_per_cblock: 6.5,
  };
  Object.assign(base, over);
  return REQUIRED_COLUMNS.map((c) => String(base[c])).join(",");
}

/** A three-configuration sweep like the orphan-ordering experiment CSV. */
function threeConfigCsv(): string {
  const lines = [HEADER];
  for (const [config, orphan] of [
    ["config1", 0.031],
    ["config2", 0.038],
    ["config3", 0.044],
  ] as const) {
    for (const seed of [1, 2]) {
      lines.push(row({ config, seed, orphan_rate: orphan, throughput_tps: 2 + seed / 10 }));
    }
    lines.push(row({ config, seed: -1, orphan_rate: orphan, throughput_tps: 2.15 }));
  }
  return lines.join("\n") + "\n";
}

describe("schema", () => {
  it("accepts the full contract", () => {
    expect(() => assertSchema([...REQUIRED_COLUMNS])).not.toThrow();
  });

  it("names the missing column", () => {
    const headers = REQUIRED_COLUMNS.filter((c) => c !== "orphan_rate");
    try {
      assertSchema([...headers]);
      expect.unreachable("should have thrown");
    } catch (err) {
      expect(err).toBeInstanceOf(SchemaError);
      expect((err as SchemaError).message).toContain("orphan_rate");
    }
  });

  it("rejects a csv with a dropped column at parse time", () => {
    const cols = REQUIRED_COLUMNS.filter((c) => c !== "avg_round_s");
    const text = cols.join(",") + "\n" + cols.map(() => "1").join(",") + "\n";
    expect(() => parseMetricsCsv(text)).toThrowError(/avg_round_s/);
  });
});

describe("aggregation", () => {
  it("prefers mean rows when present", () => {
    const rows = parseMetricsCsv(threeConfigCsv());
    const grouped = aggregate(rows, "n", "throughput_tps", "config");
    expect([...grouped.keys()]).toEqual(["config1", "config2", "config3"]);
    for (const points of grouped.values()) {
      expect(points).toHaveLength(1);
      expect(points[0].y).toBeCloseTo(2.15);
    }
  });

  it("averages per-seed rows otherwise", () => {
    const text = [HEADER, row({ seed: 1, throughput_tps: 2 }),
                  row({ seed: 2, throughput_tps: 4 })].join("\n");
    const rows = parseMetricsCsv(text);
    const grouped = aggregate(rows, "n", "throughput_tps", "config");
    expect(grouped.get("config1")![0].y).toBeCloseTo(3);
  });
});

describe("fig5 rendering", () => {
  it("emits one image with exactly three series and labeled axes", () => {
    const rows = parseMetricsCsv(threeConfigCsv());
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    const out = render(rows, BUILTIN_SPECS.fig5, dir);
    expect(out).not.toBeNull();
    const svg = readFileSync(out!, "utf8");
    const series = svg.match(/<polyline class="series"/g) ?? [];
    expect(series).toHaveLength(3);
    expect(svg).toContain('class="axis-label x-label"');
    expect(svg).toContain('class="axis-label y-label"');
    expect(svg).toContain(">nodes<");
    expect(svg).toContain("throughput (tx/s)");
  });

  it("is deterministic for identical input", () => {
    const rows = parseMetricsCsv(threeConfigCsv());
    const a = renderSvg(rows, BUILTIN_SPECS.fig5);
    const b = renderSvg(rows, BUILTIN_SPECS.fig5);
    expect(a).toBe(b);
  });

  it("renders a single-row csv as a single-point plot", () => {
    const rows = parseMetricsCsv(HEADER + "\n" + row());
    const svg = renderSvg(rows, BUILTIN_SPECS.fig5);
    expect(svg.match(/<polyline class="series"/g)).toHaveLength(1);
    expect(svg.match(/<circle /g)).toHaveLength(1);
  });

  it("skips rendering for an empty csv", () => {
    const rows = parseMetricsCsv(HEADER + "\n");
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    expect(render(rows, BUILTIN_SPECS.fig5, dir)).toBeNull();
  });
});

describe("fig7 rendering", () => {
  it("has three panels: round time, blocks per converging block, latency trio", () => {
    const lines = [HEADER];
    for (const frac of [0.0, 0.1, 0.2, 0.3]) {
      lines.push(row({
        malicious_frac: frac,
        avg_round_s: 0.5 + frac,
        avg_blocks_per_cblock: 4 - 5 * frac,
        latency_min_s: 70 + 50 * frac,
        latency_avg_s: 80 + 100 * frac,
        latency_max_s: 120 + 200 * frac,
      }));
    }
    const rows = parseMetricsCsv(lines.join("\n"));
    const svg = renderSvg(rows, BUILTIN_SPECS.fig7);
    const panels = svg.match(/<g class="panel"/g) ?? [];
    expect(panels).toHaveLength(3);
    // the latency panel carries three series, the others one each
    const series = svg.match(/<polyline class="series"/g) ?? [];
    expect(series).toHaveLength(5);
    expect(svg).toContain("malicious fraction");
    expect(svg).toContain("round time (s)");
  });
});

describe("cli", () => {
  it("fails with the offending column name on schema violations", async () => {
    const { main } = await import("../src/cli.js");
    const cols = REQUIRED_COLUMNS.filter((c) => c !== "latency_avg_s");
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    const bad = join(dir, "bad.csv");
    writeFileSync(bad, cols.join(",") + "\n");
    const messages: string[] = [];
    const original = console.error;
    console.error = (msg: unknown) => void messages.push(String(msg));
    try {
      const rc = main([bad, "--spec", "fig5", "--out", dir]);
      expect(rc).toBe(1);
    } finally {
      console.error = original;
    }
    expect(messages.join("\n")).toContain("latency_avg_s");
  });

  it("writes the requested figures", async () => {
    const { main } = await import("../src/cli.js");
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    const csv = join(dir, "metrics.csv");
    writeFileSync(csv, threeConfigCsv());
    const rc = main([csv, "--spec", "fig5", "--spec", "fig6", "--out", dir]);
    expect(rc).toBe(0);
    expect(readFileSync(join(dir, "fig5.svg"), "utf8")).toContain("<svg");
    expect(readFileSync(join(dir, "fig6.svg"), "utf8")).toContain("<svg");
  });
});
