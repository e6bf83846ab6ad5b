/** CSV loading and aggregation for figure rendering. */

import { readFileSync } from "fs";
import Papa from "papaparse";
import { assertSchema, MEAN_SEED, MetricsRow, REQUIRED_COLUMNS } from "./schema.js";

export function parseMetricsCsv(text: string): MetricsRow[] {
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  const headers = parsed.meta.fields ?? [];
  assertSchema(headers);
  return parsed.data.map((raw) => {
    const row: Record<string, number | string> = {};
    for (const col of REQUIRED_COLUMNS) {
      const value = raw[col];
      row[col] = col === "config" ? value : Number(value);
    }
    return row as unknown as MetricsRow;
  });
}

export function loadMetricsCsv(path: string): MetricsRow[] {
  return parseMetricsCsv(readFileSync(path, "utf8"));
}

/**
 * Collapse per-seed rows to one point per (x, series) pair.
 *
 * When the driver wrote mean rows (seed = -1) those are taken verbatim;
 * otherwise the per-seed rows are averaged here. Points come out sorted
 * by x so polylines are monotone in the x coordinate.
 */
export function aggregate(
  rows: MetricsRow[],
  xColumn: keyof MetricsRow,
  yColumn: keyof MetricsRow,
  seriesBy?: keyof MetricsRow,
): Map<string, Array<{ x: number; y: number }>> {
  const meanRows = rows.filter((r) => r.seed === MEAN_SEED);
  const source = meanRows.length > 0 ? meanRows : rows;
  const groups = new Map<string, Map<number, number[]>>();
  for (const row of source) {
    const series = seriesBy ? String(row[seriesBy]) : "";
    const x = Number(row[xColumn]);
    const y = Number(row[yColumn]);
    if (!Number.isFinite(x) || !Number.isFinite(y)) continue;
    let byX = groups.get(series);
    if (!byX) {
      byX = new Map();
      groups.set(series, byX);
    }
    const ys = byX.get(x) ?? [];
    ys.push(y);
    byX.set(x, ys);
  }
  const out = new Map<string, Array<{ x: number; y: number }>>();
  for (const series of [...groups.keys()].sort()) {
    const byX = groups.get(series)!;
    const points = [...byX.entries()]
      .map(([x, ys]) => ({ x, y: ys.reduce((a, b) => a + b, 0) / ys.length }))
      .sort((a, b) => a.x - b.x);
    out.set(series, points);
  }
  return out;
}
