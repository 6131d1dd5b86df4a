/**
 * The five figure kinds built from the pipeline's evaluation CSVs:
 * hexbin moment comparisons with a diagonal reference, coverage bars with
 * the nominal-level line, interval-width boxes, quantile-quantile panels
 * with a simultaneous KS band, and iteration-sensitivity dots.
 */

import { CoverageRow, MomentRow, SensitivityRow, WidthRow } from "./csv.js";
import { densityColor, hexagonPoints, Mark, Scene } from "./scene.js";
import { formatTick, qqData, ticks } from "./stats.js";

export const SIZE_ORDER = ["0", "1-4", "5-10", "11-24", "25-99", "100-499",
                           "500-999", "1000+"];

export const CI_ORDER = ["np", "BCnp", "z", "t", "BCz", "BCt", "cz", "ct"];

const AXIS = "#444444";
const REFERENCE = "#c03030";

interface Frame {
  x0: number;
  y0: number;
  w: number;
  h: number;
  xLo: number;
  xHi: number;
  yLo: number;
  yHi: number;
}

const px = (f: Frame, x: number) =>
  f.x0 + ((x - f.xLo) / (f.xHi - f.xLo || 1)) * f.w;
const py = (f: Frame, y: number) =>
  f.y0 + f.h - ((y - f.yLo) / (f.yHi - f.yLo || 1)) * f.h;

function panelFrame(marks: Mark[], f: Frame, title: string): void {
  marks.push({ kind: "rect", x: f.x0, y: f.y0, w: f.w, h: 1, fill: AXIS });
  marks.push({ kind: "rect", x: f.x0, y: f.y0 + f.h, w: f.w, h: 1, fill: AXIS });
  marks.push({ kind: "rect", x: f.x0, y: f.y0, w: 1, h: f.h, fill: AXIS });
  marks.push({ kind: "rect", x: f.x0 + f.w, y: f.y0, w: 1, h: f.h, fill: AXIS });
  marks.push({ kind: "text", x: f.x0 + f.w / 2, y: f.y0 - 5, s: title,
               size: 11, anchor: "middle" });
}

function numericAxes(marks: Mark[], f: Frame): void {
  for (const t of ticks(f.xLo, f.xHi)) {
    marks.push({ kind: "line", x1: px(f, t), y1: f.y0 + f.h, x2: px(f, t),
                 y2: f.y0 + f.h + 4, stroke: AXIS });
    marks.push({ kind: "text", x: px(f, t), y: f.y0 + f.h + 14,
                 s: formatTick(t), size: 8, anchor: "middle" });
  }
  for (const t of ticks(f.yLo, f.yHi)) {
    marks.push({ kind: "line", x1: f.x0 - 4, y1: py(f, t), x2: f.x0,
                 y2: py(f, t), stroke: AXIS });
    marks.push({ kind: "text", x: f.x0 - 6, y: py(f, t) + 3,
                 s: formatTick(t), size: 8, anchor: "end" });
  }
}

function grid(n: number, perRow: number, panelW: number, panelH: number,
              marginX: number, marginY: number):
    { frames: Array<{ x0: number; y0: number }>; width: number; height: number } {
  const rows = Math.ceil(n / perRow);
  const frames = [];
  for (let i = 0; i < n; i++) {
    const r = Math.floor(i / perRow);
    const c = i % perRow;
    frames.push({ x0: marginX + c * (panelW + marginX),
                  y0: marginY + r * (panelH + marginY) });
  }
  return {
    frames,
    width: marginX + perRow * (panelW + marginX),
    height: marginY + rows * (panelH + marginY) + 10,
  };
}

function sizeGroupsPresent(groups: Iterable<string>): string[] {
  const present = new Set(groups);
  return SIZE_ORDER.filter((g) => present.has(g));
}

export type MomentMetric = "rmse" | "bias" | "sd";

/** Hexbin comparison of per-query moment estimates, faceted by size group. */
export function momentsHex(rows: MomentRow[], metric: MomentMetric = "rmse"): Scene {
  const pick = (r: MomentRow): [number, number] =>
    metric === "rmse" ? [r.rmseMc, r.rmseAmc] :
    metric === "bias" ? [r.biasMc, r.biasAmc] : [r.sdMc, r.sdAmc];
  const groups = sizeGroupsPresent(rows.map((r) => r.sizeGroup));
  const panelW = 170;
  const panelH = 150;
  const layout = grid(groups.length, 4, panelW, panelH, 52, 40);
  const marks: Mark[] = [];
  groups.forEach((group, gi) => {
    const pts = rows.filter((r) => r.sizeGroup === group).map(pick);
    const xs = pts.map((p) => p[0]);
    const ys = pts.map((p) => p[1]);
    const lo = Math.min(...xs, ...ys, 0);
    const hi = Math.max(...xs, ...ys, 1e-9) * 1.05;
    const f: Frame = { ...layout.frames[gi], w: panelW, h: panelH,
                       xLo: lo, xHi: hi, yLo: lo, yHi: hi };
    // axial hex grid over the panel; shade by bin density
    const r = 6;
    const bins = new Map<string, number>();
    for (const [x, y] of pts) {
      const cx = px(f, x);
      const cy = py(f, y);
      const row = Math.round((cy - f.y0) / (r * 1.5));
      const col = Math.round((cx - f.x0) / (r * Math.sqrt(3)) - (row % 2) / 2);
      bins.set(`${row}:${col}`, (bins.get(`${row}:${col}`) ?? 0) + 1);
    }
    const peak = Math.max(...bins.values(), 1);
    for (const [key, count] of [...bins.entries()].sort()) {
      const [row, col] = key.split(":").map(Number);
      const cx = f.x0 + (col + (row % 2) / 2) * r * Math.sqrt(3);
      const cy = f.y0 + row * r * 1.5;
      marks.push({ kind: "polygon", points: hexagonPoints(cx, cy, r),
                   fill: densityColor(0.25 + 0.75 * (count / peak)),
                   role: "hexbin" });
    }
    marks.push({ kind: "line", x1: px(f, lo), y1: py(f, lo), x2: px(f, hi),
                 y2: py(f, hi), stroke: REFERENCE, role: "diagonal" });
    panelFrame(marks, f, `size ${group}`);
    numericAxes(marks, f);
  });
  marks.push({ kind: "text", x: layout.width / 2, y: layout.height - 2,
               s: `${metric} from confidential-input runs`, size: 10,
               anchor: "middle" });
  marks.push({ kind: "text", x: 12, y: 12,
               s: `${metric} from protected-input runs (y) vs gold standard (x)`,
               size: 10, anchor: "start" });
  return { width: layout.width, height: layout.height + 16, marks };
}

/** Coverage proportions per interval type, faceted by size group. */
export function coverageBars(rows: CoverageRow[], level = 0.9): Scene {
  const groups = sizeGroupsPresent(rows.map((r) => r.sizeGroup));
  const panelW = 180;
  const panelH = 140;
  const layout = grid(groups.length, 4, panelW, panelH, 48, 40);
  const marks: Mark[] = [];
  groups.forEach((group, gi) => {
    const f: Frame = { ...layout.frames[gi], w: panelW, h: panelH,
                       xLo: 0, xHi: 1, yLo: 0, yHi: 1 };
    const inGroup = rows.filter((r) => r.sizeGroup === group);
    const slot = panelW / CI_ORDER.length;
    CI_ORDER.forEach((ciType, i) => {
      const row = inGroup.find((r) => r.ciType === ciType);
      if (!row) return;
      const h = row.proportion * panelH;
      marks.push({ kind: "rect", x: f.x0 + i * slot + 3, y: f.y0 + panelH - h,
                   w: slot - 6, h, fill: "#5b8ac6", role: "bar" });
      marks.push({ kind: "text", x: f.x0 + i * slot + slot / 2,
                   y: f.y0 + panelH + 12, s: ciType, size: 7, anchor: "middle" });
    });
    marks.push({ kind: "line", x1: f.x0, y1: py(f, level), x2: f.x0 + panelW,
                 y2: py(f, level), stroke: REFERENCE, dashed: true,
                 role: "reference" });
    const share = inGroup[0]?.groupShare ?? 0;
    marks.push({ kind: "text", x: f.x0 + panelW - 4, y: f.y0 + panelH - 5,
                 s: `[${share.toFixed(2)}]`, size: 8, anchor: "end",
                 role: "group-share" });
    panelFrame(marks, f, `size ${group}`);
    for (const t of [0, 0.5, level, 1]) {
      marks.push({ kind: "text", x: f.x0 - 6, y: py(f, t) + 3,
                   s: formatTick(t), size: 8, anchor: "end" });
    }
  });
  marks.push({ kind: "text", x: layout.width / 2, y: layout.height - 2,
               s: "proportion of intervals containing the confidential value",
               size: 10, anchor: "middle" });
  return { width: layout.width, height: layout.height + 14, marks };
}

/** Five-number interval-width boxes per type, faceted by size group. */
export function widthBox(rows: WidthRow[]): Scene {
  const groups = sizeGroupsPresent(rows.map((r) => r.sizeGroup));
  const panelW = 180;
  const panelH = 150;
  const layout = grid(groups.length, 4, panelW, panelH, 52, 40);
  const marks: Mark[] = [];
  groups.forEach((group, gi) => {
    const inGroup = rows.filter((r) => r.sizeGroup === group);
    const hi = Math.max(...inGroup.map((r) => r.max), 1) * 1.08;
    const f: Frame = { ...layout.frames[gi], w: panelW, h: panelH,
                       xLo: 0, xHi: 1, yLo: 0, yHi: hi };
    const slot = panelW / CI_ORDER.length;
    CI_ORDER.forEach((ciType, i) => {
      const row = inGroup.find((r) => r.ciType === ciType);
      if (!row) return;
      const cx = f.x0 + i * slot + slot / 2;
      const half = slot * 0.3;
      marks.push({ kind: "line", x1: cx, y1: py(f, row.min), x2: cx,
                   y2: py(f, row.max), stroke: AXIS, role: "whisker" });
      const top = py(f, row.q3);
      marks.push({ kind: "rect", x: cx - half, y: top, w: 2 * half,
                   h: Math.max(1, py(f, row.q1) - top), fill: "#9dbbdd",
                   role: "box" });
      marks.push({ kind: "line", x1: cx - half, y1: py(f, row.median),
                   x2: cx + half, y2: py(f, row.median), stroke: "#1c3a5e",
                   width: 2, role: "median" });
      marks.push({ kind: "text", x: cx, y: f.y0 + panelH + 12, s: ciType,
                   size: 7, anchor: "middle" });
    });
    panelFrame(marks, f, `size ${group}`);
    for (const t of ticks(0, hi)) {
      marks.push({ kind: "text", x: f.x0 - 6, y: py(f, t) + 3,
                   s: formatTick(t), size: 8, anchor: "end" });
    }
  });
  marks.push({ kind: "text", x: layout.width / 2, y: layout.height - 2,
               s: "interval width by type and query size", size: 10,
               anchor: "middle" });
  return { width: layout.width, height: layout.height + 14, marks };
}

/** Quantile-quantile panels for selected queries' replicate values. */
export function qqPanels(series: Array<{ id: string; values: number[];
                                         reference: number }>): Scene {
  const panelW = 190;
  const panelH = 170;
  const layout = grid(series.length, 2, panelW, panelH, 58, 42);
  const marks: Mark[] = [];
  series.forEach((s, si) => {
    const qq = qqData(s.values);
    const all = [...qq.points.flat(), ...qq.bandLow, ...qq.bandHigh, s.reference];
    const lo = Math.min(...all);
    const hi = Math.max(...all);
    const pad = (hi - lo || 1) * 0.06;
    const f: Frame = { ...layout.frames[si], w: panelW, h: panelH,
                       xLo: lo - pad, xHi: hi + pad, yLo: lo - pad, yHi: hi + pad };
    // simultaneous band drawn as a polygon around the diagonal
    const band: Array<[number, number]> = [];
    qq.points.forEach(([t], i) => band.push([px(f, t), py(f, qq.bandHigh[i])]));
    for (let i = qq.points.length - 1; i >= 0; i--) {
      band.push([px(f, qq.points[i][0]), py(f, qq.bandLow[i])]);
    }
    marks.push({ kind: "polygon", points: band, fill: "#e4ecf5", role: "ks-band" });
    marks.push({ kind: "line", x1: px(f, lo), y1: py(f, lo), x2: px(f, hi),
                 y2: py(f, hi), stroke: REFERENCE, role: "diagonal" });
    marks.push({ kind: "line", x1: px(f, f.xLo), y1: py(f, s.reference),
                 x2: px(f, f.xHi), y2: py(f, s.reference), stroke: AXIS,
                 dashed: true, role: "point-estimate" });
    for (const [t, v] of qq.points) {
      marks.push({ kind: "circle", cx: px(f, t), cy: py(f, v), r: 1.6,
                   fill: "#2b5d8f", role: "qq-point" });
    }
    panelFrame(marks, f, s.id);
    numericAxes(marks, f);
  });
  marks.push({ kind: "text", x: layout.width / 2, y: layout.height - 2,
               s: "replicate quantiles vs fitted normal quantiles", size: 10,
               anchor: "middle" });
  return { width: layout.width, height: layout.height + 14, marks };
}

/** Conditional-t coverage by size group, one dot colour per replicate count. */
export function sensitivityDots(rows: SensitivityRow[], level = 0.9,
                                 ciType = "ct"): Scene {
  const data = rows.filter((r) => r.ciType === ciType);
  const geolevels = [...new Set(data.map((r) => r.geolevel))].sort();
  const sizes = [...new Set(data.map((r) => r.nIterations))].sort((a, b) => a - b);
  const palette = ["#7fc8f8", "#4a90d9", "#2b5d8f", "#12263a"];
  const panelW = 210;
  const panelH = 140;
  const layout = grid(geolevels.length, 3, panelW, panelH, 50, 44);
  const marks: Mark[] = [];
  geolevels.forEach((geo, gi) => {
    const inGeo = data.filter((r) => r.geolevel === geo);
    const groups = sizeGroupsPresent(inGeo.map((r) => r.sizeGroup));
    const f: Frame = { ...layout.frames[gi], w: panelW, h: panelH,
                       xLo: 0, xHi: 1, yLo: 0, yHi: 1.02 };
    const slot = panelW / Math.max(groups.length, 1);
    groups.forEach((group, xi) => {
      sizes.forEach((n, ni) => {
        const row = inGeo.find((r) => r.sizeGroup === group && r.nIterations === n);
        if (!row) return;
        const jitter = (ni - (sizes.length - 1) / 2) * 4;
        marks.push({ kind: "circle", cx: f.x0 + xi * slot + slot / 2 + jitter,
                     cy: py(f, row.proportion), r: 3,
                     fill: palette[ni % palette.length], role: "dot" });
      });
      marks.push({ kind: "text", x: f.x0 + xi * slot + slot / 2,
                   y: f.y0 + panelH + 12, s: group, size: 7, anchor: "middle" });
    });
    marks.push({ kind: "line", x1: f.x0, y1: py(f, level), x2: f.x0 + panelW,
                 y2: py(f, level), stroke: REFERENCE, dashed: true,
                 role: "reference" });
    panelFrame(marks, f, geo);
    for (const t of [0, 0.5, level, 1]) {
      marks.push({ kind: "text", x: f.x0 - 6, y: py(f, t) + 3,
                   s: formatTick(t), size: 8, anchor: "end" });
    }
  });
  sizes.forEach((n, ni) => {
    const x = 50 + ni * 90;
    marks.push({ kind: "circle", cx: x, cy: layout.height - 4, r: 3,
                 fill: palette[ni % palette.length] });
    marks.push({ kind: "text", x: x + 7, y: layout.height - 1,
                 s: `${n} iterations`, size: 8, anchor: "start" });
  });
  return { width: layout.width, height: layout.height + 12, marks };
}

/** Pick a spread of queries for the qq figure: nonzero spread, sorted by
 *  point estimate, sampled across the range. */
export function pickQqQueries(values: Map<string, number[]>,
                              references: Map<string, number>,
                              count = 4): Array<{ id: string; values: number[];
                                                  reference: number }> {
  const candidates = [...values.entries()]
    .filter(([, v]) => new Set(v).size > 1)
    .map(([id, v]) => ({ id, values: v, reference: references.get(id) ?? 0 }))
    .sort((a, b) => a.reference - b.reference || (a.id < b.id ? -1 : 1));
  if (candidates.length === 0) {
    throw new Error("no queries with nonzero spread to plot");
  }
  const out = [];
  const n = Math.min(count, candidates.length);
  for (let i = 0; i < n; i++) {
    const idx = Math.min(candidates.length - 1,
                         Math.round((i / Math.max(n - 1, 1)) * (candidates.length - 1)));
    out.push(candidates[idx]);
  }
  return out;
}
