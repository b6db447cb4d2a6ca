/**
 * Parsing and validation of pifsim run outputs.
 *
 * A run directory holds exactly three files written by the simulator:
 *   diagnostics.csv — per-step physics diagnostics
 *   timers.csv      — per-rank, per-category wall times
 *   meta.json       — effective configuration and run summary
 *
 * The column sets are a fixed contract; any mismatch is an error naming the
 * offending file and column so schema drift fails loudly.
 */

import { readFileSync } from "fs";
import path from "path";

export const DIAGNOSTICS_COLUMNS = [
  "step",
  "t",
  "field_energy",
  "kinetic_energy",
  "total_energy",
  "px",
  "py",
  "pz",
  "total_charge",
] as const;

export const TIMERS_COLUMNS = [
  "rank",
  "category",
  "seconds_inclusive",
  "seconds_exclusive",
  "calls",
] as const;

export interface DiagnosticsRow {
  step: number;
  t: number;
  field_energy: number;
  kinetic_energy: number;
  total_energy: number;
  px: number;
  py: number;
  pz: number;
  total_charge: number;
}

export interface TimerRow {
  rank: number;
  category: string;
  seconds_inclusive: number;
  seconds_exclusive: number;
  calls: number;
}

export interface RunMeta {
  config: {
    benchmark: string;
    strategy: string;
    ranks_space: number;
    ranks_time: number;
    [key: string]: unknown;
  };
  rank_layout: { space: number; time: number; total: number };
  time_per_step: number;
  category_seconds_avg: Record<string, number>;
  [key: string]: unknown;
}

export interface RunArtifact {
  dir: string;
  diagnostics: DiagnosticsRow[];
  timers: TimerRow[];
  meta: RunMeta;
}

export class SchemaError extends Error {}
export class UsageError extends Error {}

function parseCsv(file: string, expected: readonly string[]): Record<string, string>[] {
  const text = readFileSync(file, "utf-8");
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${file}: empty file`);
  }
  const header = lines[0].split(",");
  for (const col of expected) {
    if (!header.includes(col)) {
      throw new SchemaError(`${file}: missing column ${col}`);
    }
  }
  for (const col of header) {
    if (!expected.includes(col)) {
      throw new SchemaError(`${file}: unexpected column ${col}`);
    }
  }
  return lines.slice(1).map((line, i) => {
    const cells = line.split(",");
    if (cells.length !== header.length) {
      throw new SchemaError(`${file}: row ${i + 1} has ${cells.length} cells`);
    }
    return Object.fromEntries(header.map((h, j) => [h, cells[j]]));
  });
}

function num(file: string, column: string, raw: string): number {
  const v = Number(raw);
  if (!Number.isFinite(v)) {
    throw new SchemaError(`${file}: column ${column} has non-numeric value ${raw}`);
  }
  return v;
}

export function loadRunArtifact(dir: string): RunArtifact {
  const dpath = path.join(dir, "diagnostics.csv");
  const diagnostics = parseCsv(dpath, DIAGNOSTICS_COLUMNS).map((r) => ({
    step: num(dpath, "step", r.step),
    t: num(dpath, "t", r.t),
    field_energy: num(dpath, "field_energy", r.field_energy),
    kinetic_energy: num(dpath, "kinetic_energy", r.kinetic_energy),
    total_energy: num(dpath, "total_energy", r.total_energy),
    px: num(dpath, "px", r.px),
    py: num(dpath, "py", r.py),
    pz: num(dpath, "pz", r.pz),
    total_charge: num(dpath, "total_charge", r.total_charge),
  }));

  const tpath = path.join(dir, "timers.csv");
  const timers = parseCsv(tpath, TIMERS_COLUMNS).map((r) => ({
    rank: num(tpath, "rank", r.rank),
    category: r.category,
    seconds_inclusive: num(tpath, "seconds_inclusive", r.seconds_inclusive),
    seconds_exclusive: num(tpath, "seconds_exclusive", r.seconds_exclusive),
    calls: num(tpath, "calls", r.calls),
  }));

  const mpath = path.join(dir, "meta.json");
  let meta: RunMeta;
  try {
    meta = JSON.parse(readFileSync(mpath, "utf-8"));
  } catch (err) {
    throw new SchemaError(`${mpath}: ${(err as Error).message}`);
  }
  for (const key of ["config", "rank_layout", "time_per_step", "category_seconds_avg"]) {
    if (!(key in meta)) {
      throw new SchemaError(`${mpath}: missing key ${key}`);
    }
  }
  for (const key of ["benchmark", "strategy"]) {
    if (typeof meta.config[key] !== "string") {
      throw new SchemaError(`${mpath}: missing config.${key}`);
    }
  }
  return { dir, diagnostics, timers, meta };
}

/** Short deterministic label for a run, e.g. "landau pd x4". */
export function runLabel(a: RunArtifact): string {
  const ranks = a.meta.rank_layout.total;
  return `${a.meta.config.benchmark} ${a.meta.config.strategy} x${ranks}`;
}
