/**
 * Figure builders. Each reads documented files from a run directory, renders
 * into a raster, and returns the PNG bytes plus machine-checkable metadata.
 * Rendering never writes into the run directory and is deterministic for
 * fixed inputs.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { parseCollapse, parseReport, parseTrajectory, Trajectory } from "./csv.js";
import { viridis } from "./colormap.js";
import { encodePng } from "./png.js";
import {
  BLACK,
  Color,
  GREY,
  LIGHT_GREY,
  Raster,
  SERIES_COLORS,
  formatTick,
  ticks,
} from "./raster.js";
import { decodeSnapshot, sliceMagnitude } from "./snapshot.js";

export interface Frame {
  x0: number;
  y0: number;
  width: number;
  height: number;
  xLo: number;
  xHi: number;
  yLo: number;
  yHi: number;
}

export interface FigureResult {
  png: Buffer;
  meta: Record<string, unknown>;
  frame?: Frame;
}

function mustRead(file: string): string {
  if (!fs.existsSync(file)) throw new Error(`missing input file: ${file}`);
  return fs.readFileSync(file, "utf8");
}

function frameTransform(frame: Frame): {
  px: (x: number) => number;
  py: (y: number) => number;
} {
  const { x0, y0, width, height, xLo, xHi, yLo, yHi } = frame;
  return {
    px: (x) => x0 + ((x - xLo) / (xHi - xLo || 1)) * width,
    py: (y) => y0 + height - ((y - yLo) / (yHi - yLo || 1)) * height,
  };
}

function drawFrame(r: Raster, frame: Frame, xLabel: string, yLabel: string): void {
  const { x0, y0, width, height } = frame;
  r.fillRect(x0, y0, width, 1, GREY);
  r.fillRect(x0, y0 + height, width + 1, 1, BLACK);
  r.fillRect(x0, y0, 1, height, BLACK);
  r.fillRect(x0 + width, y0, 1, height + 1, GREY);
  const { px, py } = frameTransform(frame);
  for (const tx of ticks(frame.xLo, frame.xHi)) {
    const x = Math.round(px(tx));
    r.fillRect(x, y0 + height, 1, 4, BLACK);
    const label = formatTick(tx);
    r.text(x - r.textWidth(label) / 2, y0 + height + 6, label);
  }
  for (const ty of ticks(frame.yLo, frame.yHi)) {
    const y = Math.round(py(ty));
    r.fillRect(x0 - 4, y, 4, 1, BLACK);
    const label = formatTick(ty);
    r.text(x0 - 6 - r.textWidth(label), y - 3, label);
  }
  r.text(x0 + width / 2 - r.textWidth(xLabel) / 2, y0 + height + 18, xLabel);
  r.text(4, y0 - 14, yLabel);
}

function polyline(
  r: Raster,
  frame: Frame,
  xs: number[],
  ys: number[],
  color: Color,
  dash = 0
): void {
  const { px, py } = frameTransform(frame);
  for (let i = 1; i < xs.length; i++) {
    r.line(px(xs[i - 1]), py(ys[i - 1]), px(xs[i]), py(ys[i]), color, dash);
  }
}

function span(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!(hi > lo)) {
    hi = lo + 1;
  }
  const pad = 0.05 * (hi - lo);
  return [lo - pad, hi + pad];
}

// ---------------------------------------------------------------------------

export function renderOverlay(runDir: string): FigureResult {
  const main = parseTrajectory(
    mustRead(path.join(runDir, "trajectory.csv")),
    "trajectory.csv"
  );
  const refPath = path.join(runDir, "reference.csv");
  const reference: Trajectory | null = fs.existsSync(refPath)
    ? parseTrajectory(fs.readFileSync(refPath, "utf8"), "reference.csv")
    : null;

  const W = 640;
  const H = 420;
  const r = new Raster(W, H);
  const frame: Frame = { x0: 70, y0: 40, width: W - 100, height: H - 100, xLo: 0, xHi: 1, yLo: 0, yHi: 1 };
  const allQ = main.q.flat().concat(reference ? reference.q.flat() : []);
  [frame.xLo, frame.xHi] = span(main.t);
  [frame.yLo, frame.yHi] = span(allQ);
  drawFrame(r, frame, "t", "q");
  const labels = ["qx", "qy", "qz"];
  for (let axis = 0; axis < 3; axis++) {
    polyline(r, frame, main.t, main.q[axis], SERIES_COLORS[axis]);
    if (reference) polyline(r, frame, reference.t, reference.q[axis], SERIES_COLORS[axis], 3);
    r.text(frame.x0 + frame.width - 120 + axis * 40, 18, labels[axis], SERIES_COLORS[axis]);
  }
  r.text(frame.x0, 18, reference ? "trajectory (solid) vs reference (dashed)" : "trajectory");
  return {
    png: encodePng(W, H, r.rgb),
    meta: {
      kind: "overlay",
      samples: main.t.length,
      hasReference: reference !== null,
    },
    frame,
  };
}

export function renderSlice(
  runDir: string,
  axis: 0 | 1 | 2 = 2,
  index: number | null = null,
  snapshot: string | null = null
): FigureResult {
  const snapDir = path.join(runDir, "snapshots");
  if (!fs.existsSync(snapDir)) throw new Error(`missing input file: ${snapDir}`);
  const files = fs.readdirSync(snapDir).filter((f) => f.endsWith(".fld")).sort();
  if (files.length === 0) throw new Error(`missing input file: ${snapDir}/*.fld`);
  const chosen = snapshot ?? files[files.length - 1];
  const snapPath = path.join(snapDir, chosen);
  if (!fs.existsSync(snapPath)) throw new Error(`missing input file: ${snapPath}`);
  const snap = decodeSnapshot(fs.readFileSync(snapPath), chosen);
  const dims = [snap.nx, snap.ny, snap.nz];
  const idx = index ?? Math.floor(dims[axis] / 2);
  const slice = sliceMagnitude(snap, axis, idx);

  const scale = Math.max(1, Math.floor(360 / Math.max(slice.width, slice.height)));
  const panelW = slice.width * scale;
  const panelH = slice.height * scale;
  const W = panelW + 140;
  const H = panelH + 70;
  const r = new Raster(W, H);
  let peak = 0;
  for (const v of slice.values) peak = Math.max(peak, v);
  const x0 = 50;
  const y0 = 45;
  for (let v = 0; v < slice.height; v++) {
    for (let u = 0; u < slice.width; u++) {
      const c = viridis(peak > 0 ? slice.values[v * slice.width + u] / peak : 0);
      // image rows grow downward; value rows grow upward
      r.fillRect(x0 + u * scale, y0 + (slice.height - 1 - v) * scale, scale, scale, c);
    }
  }
  // colorbar
  const cbX = x0 + panelW + 20;
  for (let i = 0; i < panelH; i++) {
    const c = viridis(1 - i / (panelH - 1));
    r.fillRect(cbX, y0 + i, 16, 1, c);
  }
  r.text(cbX + 20, y0 - 3, formatTick(peak));
  r.text(cbX + 20, y0 + panelH - 4, "0");
  const axisName = "xyz"[axis];
  r.text(x0, 18, `abs(psi) slice ${axisName}=${idx}  t=${formatTick(snap.time)}`);
  r.text(x0, y0 + panelH + 10, `file ${chosen}`);
  return {
    png: encodePng(W, H, r.rgb),
    meta: {
      kind: "slice",
      snapshot: chosen,
      axis: axisName,
      index: idx,
      time: snap.time,
      peak,
    },
  };
}

export function renderCollapse(runDir: string): FigureResult {
  const series = parseCollapse(
    mustRead(path.join(runDir, "collapse.csv")),
    "collapse.csv"
  );
  const W = 640;
  const H = 420;
  const r = new Raster(W, H);
  const frame: Frame = { x0: 80, y0: 40, width: W - 120, height: H - 100, xLo: 0, xHi: 1, yLo: 0, yHi: 1 };
  [frame.xLo, frame.xHi] = span(series.t);
  [frame.yLo, frame.yHi] = span(series.norms.flat());
  frame.yLo = Math.min(0, frame.yLo);
  drawFrame(r, frame, "t", "cell norm");
  const finals: number[] = [];
  series.norms.forEach((norms, i) => {
    polyline(r, frame, series.t, norms, SERIES_COLORS[i % SERIES_COLORS.length]);
    finals.push(norms[norms.length - 1]);
    r.text(
      frame.x0 + 10 + i * 90,
      18,
      `cell ${i}`,
      SERIES_COLORS[i % SERIES_COLORS.length]
    );
  });
  return {
    png: encodePng(W, H, r.rgb),
    meta: {
      kind: "collapse",
      cells: series.norms.length,
      finalNorms: finals,
      initialNorms: series.norms.map((n) => n[0]),
    },
    frame,
  };
}

export function renderConvergence(runDir: string): FigureResult {
  const report = parseReport(mustRead(path.join(runDir, "report.csv")), "report.csv");
  const x = report.U.map((u, i) => Math.log10(u / report.c[i]));
  const y = report.supDev.map(Math.log10);
  const W = 640;
  const H = 420;
  const r = new Raster(W, H);
  const frame: Frame = { x0: 80, y0: 40, width: W - 120, height: H - 100, xLo: 0, xHi: 1, yLo: 0, yHi: 1 };
  [frame.xLo, frame.xHi] = span(x);
  [frame.yLo, frame.yHi] = span(y);
  drawFrame(r, frame, "log10(U/c)", "log10(sup dev)");
  const { px, py } = frameTransform(frame);
  // fitted line through the mean point with the reported slope
  const mx = x.reduce((a, b) => a + b, 0) / x.length;
  const my = y.reduce((a, b) => a + b, 0) / y.length;
  const slope = report.fittedOrder;
  polyline(
    r,
    frame,
    [frame.xLo, frame.xHi],
    [my + slope * (frame.xLo - mx), my + slope * (frame.xHi - mx)],
    GREY
  );
  x.forEach((xi, i) => r.marker(px(xi), py(y[i]), SERIES_COLORS[0], 3));
  const annotation = `order=${slope.toFixed(3)}`;
  r.text(frame.x0 + 12, frame.y0 + 8, annotation);
  return {
    png: encodePng(W, H, r.rgb),
    meta: {
      kind: "convergence",
      points: x.length,
      fittedOrder: slope,
      annotation,
    },
    frame,
  };
}

export type FigureKind = "overlay" | "slice" | "collapse" | "convergence";

export function render(
  runDir: string,
  kind: FigureKind,
  options: { axis?: 0 | 1 | 2; index?: number | null; snapshot?: string | null } = {}
): FigureResult {
  switch (kind) {
    case "overlay":
      return renderOverlay(runDir);
    case "slice":
      return renderSlice(runDir, options.axis ?? 2, options.index ?? null, options.snapshot ?? null);
    case "collapse":
      return renderCollapse(runDir);
    case "convergence":
      return renderConvergence(runDir);
    default:
      throw new Error(`unknown figure kind: ${kind}`);
  }
}
