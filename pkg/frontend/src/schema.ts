/**
 * The metrics CSV contract shared with the simulator's experiment driver.
 * Column names and order are fixed; renderers assert them before reading
 * anything else so schema drift fails loudly with the offending column.
 */

export const REQUIRED_COLUMNS = [
  "n",
  "alpha",
  "config",
  "tau_s",
  "block_bytes",
  "malicious_frac",
  "seed",
  "slots",
  "throughput_tps",
  "latency_min_s",
  "latency_avg_s",
  "latency_max_s",
  "orphan_rate",
  "avg_round_s",
  "avg_blocks_per_cblock",
] as const;

export type ColumnName = (typeof REQUIRED_COLUMNS)[number];

export const MEAN_SEED = -1;

export class SchemaError extends Error {
  constructor(public readonly column: string) {
    super(`metrics CSV is missing required column '${column}'`);
    this.name = "SchemaError";
  }
}

/** Throws a SchemaError naming the first missing column. */
export function assertSchema(headers: string[]): void {
  for (const column of REQUIRED_COLUMNS) {
    if (!headers.includes(column)) {
      throw new SchemaError(column);
    }
  }
}

export interface MetricsRow {
  n: number;
  alpha: number;
  config: string;
  tau_s: number;
  block_bytes: number;
  malicious_frac: number;
  seed: number;
  slots: number;
  throughput_tps: number;
  latency_min_s: number;
  latency_avg_s: number;
  latency_max_s: number;
  orphan_rate: number;
  avg_round_s: number;
  avg_blocks_per_cblock: number;
}
