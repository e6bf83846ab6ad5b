#!/usr/bin/env node
/** Usage: cdag-plots <metrics.csv> --spec fig5|fig6|fig7 [--out DIR] */

import { loadMetricsCsv } from "./csv.js";
import { BUILTIN_SPECS, resolveSpec } from "./figspec.js";
import { render } from "./render.js";
import { SchemaError } from "./schema.js";

function usage(): never {
  console.error(
    "usage: cdag-plots <metrics.csv> [--spec name ...] [--out dir]\n" +
      `built-in specs: ${Object.keys(BUILTIN_SPECS).join(", ")}`,
  );
  process.exit(2);
}

export function main(argv: string[]): number {
  const args = [...argv];
  const positional: string[] = [];
  const specNames: string[] = [];
  let outDir = ".";
  while (args.length > 0) {
    const arg = args.shift()!;
    if (arg === "--spec") {
      const name = args.shift();
      if (!name) usage();
      specNames.push(name);
    } else if (arg === "--out") {
      const dir = args.shift();
      if (!dir) usage();
      outDir = dir;
    } else if (arg === "--help" || arg === "-h") {
      usage();
    } else {
      positional.push(arg);
    }
  }
  if (positional.length !== 1) usage();
  if (specNames.length === 0) specNames.push("fig5");

  let rows;
  try {
    rows = loadMetricsCsv(positional[0]);
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(err.message);
      return 1;
    }
    throw err;
  }
  for (const name of specNames) {
    const spec = resolveSpec(name);
    const out = render(rows, spec, outDir);
    if (out) {
      console.error(`wrote ${out}`);
    }
  }
  return 0;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
