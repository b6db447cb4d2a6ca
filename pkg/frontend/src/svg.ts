/**
 * Minimal deterministic SVG plotting: line/marker charts with linear or log
 * axes.  All coordinates are emitted with fixed precision so identical
 * inputs produce byte-identical files.
 */

export interface Series {
  label: string;
  points: Array<[number, number]>;
  color: string;
  markers?: boolean;
  dash?: string;
}

export interface PlotSpec {
  title: string;
  xlabel: string;
  ylabel: string;
  series: Series[];
  logY?: boolean;
  logX?: boolean;
  width?: number;
  height?: number;
}

export const PALETTE = [
  "#268bd2",
  "#859900",
  "#6c71c4",
  "#b58900",
  "#dc322f",
  "#2aa198",
  "#d33682",
  "#657b83",
];

const MARGIN = { left: 64, right: 16, top: 28, bottom: 42 };

function fmt(v: number): string {
  return v.toFixed(2);
}

function niceTicks(lo: number, hi: number, n = 5): number[] {
  if (!(hi > lo)) {
    return [lo];
  }
  const span = hi - lo;
  const step0 = span / n;
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  const norm = step0 / mag;
  const step = (norm >= 5 ? 5 : norm >= 2 ? 2 : 1) * mag;
  const start = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= hi + 1e-12 * span; v += step) {
    ticks.push(v);
  }
  return ticks;
}

function logTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.ceil(Math.log10(lo)); Math.pow(10, e) <= hi * (1 + 1e-12); e++) {
    ticks.push(Math.pow(10, e));
  }
  return ticks.length ? ticks : [lo];
}

function tickLabel(v: number): string {
  if (v === 0) {
    return "0";
  }
  const a = Math.abs(v);
  if (a >= 0.01 && a < 10000) {
    return String(Number(v.toPrecision(4)));
  }
  return v.toExponential(1);
}

function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

/** Render a plot spec to a standalone SVG document. */
export function renderSvg(spec: PlotSpec): string {
  const width = spec.width ?? 640;
  const height = spec.height ?? 420;
  const innerW = width - MARGIN.left - MARGIN.right;
  const innerH = height - MARGIN.top - MARGIN.bottom;

  const xs = spec.series.flatMap((s) => s.points.map((p) => p[0]));
  const ys = spec.series.flatMap((s) => s.points.map((p) => p[1]));
  const finiteY = ys.filter((y) => Number.isFinite(y) && (!spec.logY || y > 0));
  if (xs.length === 0 || finiteY.length === 0) {
    throw new Error(`plot "${spec.title}" has no finite data`);
  }
  let xLo = Math.min(...xs);
  let xHi = Math.max(...xs);
  let yLo = Math.min(...finiteY);
  let yHi = Math.max(...finiteY);
  if (xLo === xHi) {
    xLo -= 0.5;
    xHi += 0.5;
  }
  if (yLo === yHi) {
    yLo = spec.logY ? yLo / 2 : yLo - 0.5;
    yHi = spec.logY ? yHi * 2 : yHi + 0.5;
  }

  const xT = (x: number) => (spec.logX ? Math.log10(x) : x);
  const yT = (y: number) => (spec.logY ? Math.log10(y) : y);
  const sx = (x: number) =>
    MARGIN.left + ((xT(x) - xT(xLo)) / (xT(xHi) - xT(xLo))) * innerW;
  const sy = (y: number) =>
    MARGIN.top + innerH - ((yT(y) - yT(yLo)) / (yT(yHi) - yT(yLo))) * innerH;

  const xTicks = spec.logX ? logTicks(xLo, xHi) : niceTicks(xLo, xHi, 6);
  const yTicks = spec.logY ? logTicks(yLo, yHi) : niceTicks(yLo, yHi, 5);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="Helvetica,Arial,sans-serif">`,
  );
  parts.push(`<rect width="${width}" height="${height}" fill="#fdf6e3"/>`);
  parts.push(
    `<text x="${fmt(width / 2)}" y="18" text-anchor="middle" font-size="14">` +
      `${escapeXml(spec.title)}</text>`,
  );

  for (const v of xTicks) {
    const x = fmt(sx(v));
    parts.push(
      `<line x1="${x}" y1="${MARGIN.top}" x2="${x}" y2="${MARGIN.top + innerH}" ` +
        `stroke="#eee8d5" stroke-width="1"/>`,
    );
    parts.push(
      `<text x="${x}" y="${MARGIN.top + innerH + 16}" text-anchor="middle" ` +
        `font-size="10">${tickLabel(v)}</text>`,
    );
  }
  for (const v of yTicks) {
    const y = fmt(sy(v));
    parts.push(
      `<line x1="${MARGIN.left}" y1="${y}" x2="${MARGIN.left + innerW}" y2="${y}" ` +
        `stroke="#eee8d5" stroke-width="1"/>`,
    );
    parts.push(
      `<text x="${MARGIN.left - 6}" y="${y}" text-anchor="end" dominant-baseline="middle" ` +
        `font-size="10">${tickLabel(v)}</text>`,
    );
  }
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${innerW}" height="${innerH}" ` +
      `fill="none" stroke="#586e75" stroke-width="1"/>`,
  );
  parts.push(
    `<text x="${fmt(MARGIN.left + innerW / 2)}" y="${height - 8}" text-anchor="middle" ` +
      `font-size="12">${escapeXml(spec.xlabel)}</text>`,
  );
  parts.push(
    `<text x="14" y="${fmt(MARGIN.top + innerH / 2)}" text-anchor="middle" font-size="12" ` +
      `transform="rotate(-90 14 ${fmt(MARGIN.top + innerH / 2)})">` +
      `${escapeXml(spec.ylabel)}</text>`,
  );

  spec.series.forEach((s) => {
    const pts = s.points.filter(
      ([x, y]) => Number.isFinite(y) && (!spec.logY || y > 0) && (!spec.logX || x > 0),
    );
    if (pts.length === 0) {
      return;
    }
    const coords = pts.map(([x, y]) => `${fmt(sx(x))},${fmt(sy(y))}`).join(" ");
    const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : "";
    if (pts.length > 1) {
      parts.push(
        `<polyline points="${coords}" fill="none" stroke="${s.color}" ` +
          `stroke-width="1.5"${dash} data-series="${escapeXml(s.label)}"/>`,
      );
    }
    if (s.markers || pts.length === 1) {
      for (const [x, y] of pts) {
        parts.push(
          `<circle cx="${fmt(sx(x))}" cy="${fmt(sy(y))}" r="3" fill="${s.color}" ` +
            `data-series="${escapeXml(s.label)}"/>`,
        );
      }
    }
  });

  spec.series.forEach((s, i) => {
    const y = MARGIN.top + 12 + 14 * i;
    const x = MARGIN.left + innerW - 150;
    parts.push(
      `<line x1="${x}" y1="${y - 4}" x2="${x + 18}" y2="${y - 4}" ` +
        `stroke="${s.color}" stroke-width="2"/>`,
    );
    parts.push(
      `<text x="${x + 24}" y="${y}" font-size="10">${escapeXml(s.label)}</text>`,
    );
  });

  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
