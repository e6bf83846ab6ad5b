/** Figure descriptions: which columns land on which axis, per panel. */

import type { ColumnName } from "./schema.js";

export interface PanelSpec {
  /** One line series per y column when seriesBy is absent. */
  yColumns: ColumnName[];
  yLabel: string;
  title: string;
}

export interface FigureSpec {
  name: string;
  xColumn: ColumnName;
  xLabel: string;
  /** Distinct values of this column become separate series per panel. */
  seriesBy?: ColumnName;
  panels: PanelSpec[];
  outputFilename: string;
}

export const BUILTIN_SPECS: Record<string, FigureSpec> = {
  // throughput against network size, one series per configuration
  fig5: {
    name: "fig5",
    xColumn: "n",
    xLabel: "nodes",
    seriesBy: "config",
    panels: [
      {
        yColumns: ["throughput_tps"],
        yLabel: "throughput (tx/s)",
        title: "Throughput",
      },
    ],
    outputFilename: "fig5.svg",
  },
  // confirmation latency and orphan rate against network size
  fig6: {
    name: "fig6",
    xColumn: "n",
    xLabel: "nodes",
    seriesBy: "config",
    panels: [
      {
        yColumns: ["latency_avg_s"],
        yLabel: "latency (s)",
        title: "Confirmation latency",
      },
      {
        yColumns: ["orphan_rate"],
        yLabel: "orphan rate",
        title: "Orphan rate",
      },
    ],
    outputFilename: "fig6.svg",
  },
  // tournament health against the fraction of misbehaving nodes
  fig7: {
    name: "fig7",
    xColumn: "malicious_frac",
    xLabel: "malicious fraction",
    panels: [
      {
        yColumns: ["avg_round_s"],
        yLabel: "round time (s)",
        title: "Average round time",
      },
      {
        yColumns: ["avg_blocks_per_cblock"],
        yLabel: "blocks per converging block",
        title: "Blocks per converging block",
      },
      {
        yColumns: ["latency_min_s", "latency_avg_s", "latency_max_s"],
        yLabel: "latency (s)",
        title: "Min / avg / max latency",
      },
    ],
    outputFilename: "fig7.svg",
  },
};

export function resolveSpec(nameOrJson: string): FigureSpec {
  const builtin = BUILTIN_SPECS[nameOrJson];
  if (builtin) return builtin;
  throw new Error(
    `unknown figure spec '${nameOrJson}' (built-ins: ${Object.keys(BUILTIN_SPECS).join(", ")})`,
  );
}
