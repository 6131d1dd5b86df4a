#!/usr/bin/env node
/**
 * reports render-all <artifact-dir> [--format png|svg] [--out <dir>]
 *
 * Renders every figure kind the artifact directory supports. Reading is
 * strictly read-only; figures land in <artifact-dir>/figures by default.
 */

import { existsSync, mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { pathToFileURL } from "node:url";

import { readCoverage, readMomentComparison, readSensitivity, readTabulation,
         readWidths } from "./csv.js";
import { coverageBars, momentsHex, pickQqQueries, qqPanels, sensitivityDots,
         widthBox } from "./figures.js";
import { toPng } from "./raster.js";
import { Scene, toSvg } from "./scene.js";

export type FigureKind = "moments_hex" | "coverage_bars" | "width_box" | "qq"
  | "sensitivity";

export interface FigureSpec {
  kind: FigureKind;
  input: string;            // CSV path (the amc tabulation for qq)
  output: string;           // image path without extension
  facet?: string;           // geolevel filter for the per-level figures
  metric?: "rmse" | "bias" | "sd";
}

function writeScene(scene: Scene, base: string, format: "svg" | "png"): string {
  const path = base + (format === "svg" ? ".svg" : ".png");
  if (format === "svg") {
    writeFileSync(path, toSvg(scene));
  } else {
    writeFileSync(path, toPng(scene));
  }
  return path;
}

function buildScene(spec: FigureSpec): Scene {
  switch (spec.kind) {
    case "moments_hex":
      return momentsHex(readMomentComparison(spec.input), spec.metric ?? "rmse");
    case "coverage_bars":
      return coverageBars(readCoverage(spec.input)
        .filter((r) => !spec.facet || r.geolevel === spec.facet));
    case "width_box":
      return widthBox(readWidths(spec.input)
        .filter((r) => !spec.facet || r.geolevel === spec.facet));
    case "qq": {
      const values = readTabulation(spec.input);
      const refPath = join(spec.input, "..", "answers_ppmf0.csv");
      const refs = readTabulation(refPath);
      const references = new Map([...refs.entries()].map(([k, v]) => [k, v[0]]));
      return qqPanels(pickQqQueries(values, references));
    }
    case "sensitivity":
      return sensitivityDots(readSensitivity(spec.input));
  }
}

export function render(spec: FigureSpec, format: "svg" | "png" = "svg"): string {
  return writeScene(buildScene(spec), spec.output, format);
}

export function renderAll(artifactDir: string, format: "svg" | "png",
                          outDir?: string): string[] {
  const out = outDir ?? join(artifactDir, "figures");
  mkdirSync(out, { recursive: true });
  const specs: FigureSpec[] = [];
  for (const metric of ["rmse", "bias", "sd"] as const) {
    specs.push({ kind: "moments_hex", metric,
                 input: join(artifactDir, "moment_comparison.csv"),
                 output: join(out, `moments_hex_${metric}`) });
  }
  const coverage = readCoverage(join(artifactDir, "coverage.csv"));
  for (const geo of [...new Set(coverage.map((r) => r.geolevel))].sort()) {
    specs.push({ kind: "coverage_bars", facet: geo,
                 input: join(artifactDir, "coverage.csv"),
                 output: join(out, `coverage_bars_${geo}`) });
  }
  const widths = readWidths(join(artifactDir, "widths.csv"));
  for (const geo of [...new Set(widths.map((r) => r.geolevel))].sort()) {
    specs.push({ kind: "width_box", facet: geo,
                 input: join(artifactDir, "widths.csv"),
                 output: join(out, `width_box_${geo}`) });
  }
  specs.push({ kind: "qq", input: join(artifactDir, "tabulation_amc.csv"),
               output: join(out, "qq") });
  specs.push({ kind: "sensitivity", input: join(artifactDir, "sensitivity.csv"),
               output: join(out, "sensitivity") });
  return specs.map((s) => render(s, format));
}

function usage(): never {
  console.error("usage: reports render-all <artifact-dir> [--format png|svg] [--out <dir>]");
  process.exit(2);
}

export function main(argv: string[]): number {
  if (argv.length < 2 || argv[0] !== "render-all") usage();
  const dir = argv[1];
  let format: "svg" | "png" = "svg";
  let out: string | undefined;
  for (let i = 2; i < argv.length; i++) {
    if (argv[i] === "--format") {
      const v = argv[++i];
      if (v !== "svg" && v !== "png") usage();
      format = v;
    } else if (argv[i] === "--out") {
      out = argv[++i];
    } else {
      usage();
    }
  }
  if (!existsSync(dir)) {
    console.error(`error: no such artifact directory: ${dir}`);
    return 1;
  }
  try {
    const written = renderAll(dir, format, out);
    for (const p of written) console.log(p);
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)));
}
