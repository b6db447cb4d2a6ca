#!/usr/bin/env node
/**
 * CLI: pifsim-report <run_dir> [<run_dir> ...] --out <figure_dir>
 */

import { SchemaError, UsageError } from "./schema.js";
import { renderReport } from "./report.js";

function parseArgs(argv: string[]): { dirs: string[]; out: string } {
  const dirs: string[] = [];
  let out = "figures";
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--out") {
      const v = argv[++i];
      if (!v) {
        throw new UsageError("--out needs a directory");
      }
      out = v;
    } else if (arg.startsWith("-")) {
      throw new UsageError(`unknown flag ${arg}`);
    } else {
      dirs.push(arg);
    }
  }
  return { dirs, out };
}

export function main(argv: string[]): number {
  try {
    const { dirs, out } = parseArgs(argv);
    const result = renderReport(dirs, out);
    for (const f of result.files) {
      console.log(f);
    }
    return 0;
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`usage error: ${err.message}`);
      console.error("usage: pifsim-report <run_dir> [...] --out <figure_dir>");
      return 2;
    }
    if (err instanceof SchemaError) {
      console.error(`schema error: ${err.message}`);
      return 3;
    }
    throw err;
  }
}

process.exitCode = main(process.argv.slice(2));
