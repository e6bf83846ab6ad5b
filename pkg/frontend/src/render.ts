/** Deterministic SVG line charts from metrics rows. No DOM, no clock. */

import { mkdirSync, writeFileSync } from "fs";
import { dirname, join } from "path";
import { aggregate } from "./csv.js";
import type { FigureSpec, PanelSpec } from "./figspec.js";
import type { MetricsRow } from "./schema.js";

const PANEL_W = 360;
const PANEL_H = 300;
const MARGIN = { top: 36, right: 16, bottom: 48, left: 64 };
const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

interface Scale {
  (v: number): number;
}

function linearScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const span = d1 - d0 || 1;
  return (v: number) => r0 + ((v - d0) / span) * (r1 - r0);
}

function niceTicks(lo: number, hi: number, count = 5): number[] {
  if (lo === hi) {
    return [lo];
  }
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const err = (span / count) / step;
  const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = step * mult;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / s) * s; v <= hi + 1e-12; v += s) {
    ticks.push(Number(v.toPrecision(12)));
  }
  return ticks;
}

function fmt(v: number): string {
  if (Number.isInteger(v)) return String(v);
  return String(Number(v.toPrecision(6)));
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function renderPanel(
  rows: MetricsRow[],
  spec: FigureSpec,
  panel: PanelSpec,
  offsetX: number,
): string {
  // one series per seriesBy value and y column combination
  const seriesData: Array<{ label: string; points: Array<{ x: number; y: number }> }> = [];
  for (const yColumn of panel.yColumns) {
    const grouped = aggregate(rows, spec.xColumn, yColumn, spec.seriesBy);
    for (const [key, points] of grouped) {
      if (points.length === 0) continue;
      const label =
        panel.yColumns.length > 1 ? (key ? `${key} ${yColumn}` : yColumn) : key || yColumn;
      seriesData.push({ label, points });
    }
  }

  const xs = seriesData.flatMap((s) => s.points.map((p) => p.x));
  const ys = seriesData.flatMap((s) => s.points.map((p) => p.y));
  const x0 = Math.min(...xs, 0 === xs.length ? 0 : Infinity);
  const x1 = Math.max(...xs, 0 === xs.length ? 1 : -Infinity);
  const yMin = Math.min(...ys, 0);
  const yMax = Math.max(...ys, 1e-9);

  const plotX0 = offsetX + MARGIN.left;
  const plotX1 = offsetX + PANEL_W - MARGIN.right;
  const plotY0 = PANEL_H - MARGIN.bottom;
  const plotY1 = MARGIN.top;
  const sx = linearScale(x0, x1, plotX0, plotX1);
  const sy = linearScale(yMin, yMax, plotY0, plotY1);

  const parts: string[] = [];
  parts.push(`<g class="panel" data-title="${esc(panel.title)}">`);
  parts.push(
    `<text class="panel-title" x="${offsetX + PANEL_W / 2}" y="${MARGIN.top - 16}" text-anchor="middle" font-size="13">${esc(panel.title)}</text>`,
  );
  // frame
  parts.push(
    `<rect x="${plotX0}" y="${plotY1}" width="${plotX1 - plotX0}" height="${plotY0 - plotY1}" fill="none" stroke="#999"/>`,
  );
  // axis ticks and labels
  for (const t of niceTicks(x0, x1)) {
    const px = sx(t);
    parts.push(`<line x1="${px}" y1="${plotY0}" x2="${px}" y2="${plotY0 + 4}" stroke="#333"/>`);
    parts.push(
      `<text x="${px}" y="${plotY0 + 16}" text-anchor="middle" font-size="10">${fmt(t)}</text>`,
    );
  }
  for (const t of niceTicks(yMin, yMax)) {
    const py = sy(t);
    parts.push(`<line x1="${plotX0 - 4}" y1="${py}" x2="${plotX0}" y2="${py}" stroke="#333"/>`);
    parts.push(
      `<text x="${plotX0 - 8}" y="${py + 3}" text-anchor="end" font-size="10">${fmt(t)}</text>`,
    );
  }
  parts.push(
    `<text class="axis-label x-label" x="${(plotX0 + plotX1) / 2}" y="${PANEL_H - 12}" text-anchor="middle" font-size="12">${esc(spec.xLabel)}</text>`,
  );
  parts.push(
    `<text class="axis-label y-label" x="${offsetX + 14}" y="${(plotY0 + plotY1) / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 ${offsetX + 14} ${(plotY0 + plotY1) / 2})">${esc(panel.yLabel)}</text>`,
  );

  // series lines, points and legend
  seriesData.forEach((series, idx) => {
    const color = PALETTE[idx % PALETTE.length];
    const coords = series.points.map((p) => `${sx(p.x).toFixed(2)},${sy(p.y).toFixed(2)}`);
    parts.push(
      `<polyline class="series" data-label="${esc(series.label)}" fill="none" stroke="${color}" stroke-width="1.5" points="${coords.join(" ")}"/>`,
    );
    for (const p of series.points) {
      parts.push(
        `<circle cx="${sx(p.x).toFixed(2)}" cy="${sy(p.y).toFixed(2)}" r="2.5" fill="${color}"/>`,
      );
    }
    const ly = plotY1 + 12 + idx * 14;
    parts.push(
      `<line x1="${plotX1 - 86}" y1="${ly - 3}" x2="${plotX1 - 70}" y2="${ly - 3}" stroke="${color}" stroke-width="2"/>`,
    );
    parts.push(
      `<text class="legend" x="${plotX1 - 66}" y="${ly}" font-size="10">${esc(series.label)}</text>`,
    );
  });
  parts.push("</g>");
  return parts.join("\n");
}

export function renderSvg(rows: MetricsRow[], spec: FigureSpec): string {
  const width = PANEL_W * spec.panels.length;
  const body = spec.panels
    .map((panel, i) => renderPanel(rows, spec, panel, i * PANEL_W))
    .join("\n");
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${PANEL_H}" viewBox="0 0 ${width} ${PANEL_H}" font-family="sans-serif">`,
    `<rect width="${width}" height="${PANEL_H}" fill="white"/>`,
    body,
    "</svg>",
    "",
  ].join("\n");
}

/** Render one figure; returns the output path, or null for an empty CSV. */
export function render(
  rows: MetricsRow[],
  spec: FigureSpec,
  outDir: string,
): string | null {
  if (rows.length === 0) {
    console.warn(`no data rows; skipping ${spec.name}`);
    return null;
  }
  const svg = renderSvg(rows, spec);
  const outPath = join(outDir, spec.outputFilename);
  mkdirSync(dirname(outPath), { recursive: true });
  writeFileSync(outPath, svg);
  return outPath;
}
