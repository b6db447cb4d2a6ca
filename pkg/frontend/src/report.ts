/**
 * Figure generation from one or more run directories:
 *
 *   energy.svg              field-energy traces over time, one per run
 *   scaling.svg             wall time per step against total rank count,
 *                           grouped by strategy
 *   components-<name>.svg   per-category timing breakdown per strategy
 *
 * Inputs are never modified and rendering is idempotent: identical inputs
 * yield byte-identical files.
 */

import { mkdirSync, writeFileSync } from "fs";
import path from "path";

import { RunArtifact, UsageError, loadRunArtifact, runLabel } from "./schema.js";
import { PALETTE, PlotSpec, Series, renderSvg } from "./svg.js";

const COMPONENT_CATEGORIES = [
  "Scatter",
  "Gather",
  "ParticleUpdate",
  "Allreduce",
  "FieldHalo",
  "FftAlltoall",
  "FinePropagator",
  "CoarsePropagator",
  "TimeComm",
];

function sortedArtifacts(runDirs: string[]): RunArtifact[] {
  const artifacts = runDirs.map(loadRunArtifact);
  artifacts.sort((a, b) => runLabel(a).localeCompare(runLabel(b)) ||
    a.dir.localeCompare(b.dir));
  return artifacts;
}

export function energyPlot(artifacts: RunArtifact[]): PlotSpec {
  const series: Series[] = artifacts.map((a, i) => ({
    label: runLabel(a),
    color: PALETTE[i % PALETTE.length],
    points: a.diagnostics.map((r) => [r.t, r.field_energy] as [number, number]),
  }));
  return {
    title: "Field energy over time",
    xlabel: "t",
    ylabel: "field energy",
    series,
    logY: true,
  };
}

export function scalingPlot(artifacts: RunArtifact[]): PlotSpec {
  const byStrategy = new Map<string, Array<[number, number]>>();
  for (const a of artifacts) {
    const key = a.meta.config.strategy;
    const pts = byStrategy.get(key) ?? [];
    pts.push([a.meta.rank_layout.total, a.meta.time_per_step]);
    byStrategy.set(key, pts);
  }
  const strategies = [...byStrategy.keys()].sort();
  const series: Series[] = strategies.map((s, i) => ({
    label: s,
    color: PALETTE[i % PALETTE.length],
    markers: true,
    points: byStrategy
      .get(s)!
      .sort((p, q) => p[0] - q[0]),
  }));
  return {
    title: "Wall time per step vs ranks",
    xlabel: "total ranks",
    ylabel: "seconds per step",
    series,
    logY: true,
  };
}

export function componentPlot(strategy: string, artifacts: RunArtifact[]): PlotSpec {
  const series: Series[] = [];
  let ci = 0;
  for (const cat of COMPONENT_CATEGORIES) {
    const pts: Array<[number, number]> = [];
    for (const a of artifacts) {
      const avg = a.meta.category_seconds_avg[cat] ?? 0;
      if (avg > 0) {
        pts.push([a.meta.rank_layout.total, avg]);
      }
    }
    if (pts.length > 0) {
      series.push({
        label: cat,
        color: PALETTE[ci++ % PALETTE.length],
        markers: true,
        points: pts.sort((p, q) => p[0] - q[0]),
      });
    }
  }
  return {
    title: `Component timings (${strategy})`,
    xlabel: "total ranks",
    ylabel: "seconds (inclusive)",
    series,
    logY: true,
  };
}

export interface ReportResult {
  files: string[];
  artifacts: RunArtifact[];
}

export function renderReport(runDirs: string[], outDir: string): ReportResult {
  if (runDirs.length === 0) {
    throw new UsageError("no run directories given");
  }
  const artifacts = sortedArtifacts(runDirs);
  mkdirSync(outDir, { recursive: true });
  const files: string[] = [];

  const write = (name: string, spec: PlotSpec) => {
    const file = path.join(outDir, name);
    writeFileSync(file, renderSvg(spec));
    files.push(file);
  };

  write("energy.svg", energyPlot(artifacts));
  write("scaling.svg", scalingPlot(artifacts));
  const strategies = [...new Set(artifacts.map((a) => a.meta.config.strategy))].sort();
  for (const s of strategies) {
    const subset = artifacts.filter((a) => a.meta.config.strategy === s);
    write(`components-${s}.svg`, componentPlot(s, subset));
  }
  return { files, artifacts };
}
