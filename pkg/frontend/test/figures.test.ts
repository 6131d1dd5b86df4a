import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, test } from "vitest";

import { main, renderAll } from "../src/cli.js";
import { CsvSchemaError, readCoverage, readMomentComparison, readSensitivity,
         readTabulation, readWidths } from "../src/csv.js";
import { coverageBars, momentsHex, pickQqQueries, qqPanels, sensitivityDots,
         widthBox } from "../src/figures.js";
import { toPng } from "../src/raster.js";
import { toSvg } from "../src/scene.js";

const FIXTURE = join(__dirname, "fixtures", "desk");


describe("csv contracts", () => {
  test("renamed column is a schema error naming the column", () => {
    const dir = mkdtempSync(join(tmpdir(), "reports-"));
    const bad = join(dir, "coverage.csv");
    writeFileSync(bad, "geolevel,size_group,ci_type,n_queries,prop,group_share\n");
    expect(() => readCoverage(bad)).toThrow(CsvSchemaError);
    expect(() => readCoverage(bad)).toThrow(/proportion_containing_cef/);
  });

  test("fixture files parse", () => {
    expect(readCoverage(join(FIXTURE, "coverage.csv")).length).toBeGreaterThan(0);
    expect(readWidths(join(FIXTURE, "widths.csv")).length).toBeGreaterThan(0);
    expect(readMomentComparison(join(FIXTURE, "moment_comparison.csv")).length)
      .toBeGreaterThan(0);
    expect(readSensitivity(join(FIXTURE, "sensitivity.csv")).length)
      .toBeGreaterThan(0);
    const tab = readTabulation(join(FIXTURE, "tabulation_amc.csv"));
    expect([...tab.values()][0].length).toBe(25);
  });
});

describe("figure scenes", () => {
  test("moments hexbin draws a diagonal reference per facet", () => {
    const rows = readMomentComparison(join(FIXTURE, "moment_comparison.csv"));
    const scene = momentsHex(rows, "rmse");
    const diagonals = scene.marks.filter((m) => m.role === "diagonal");
    const facets = new Set(rows.map((r) => r.sizeGroup)).size;
    expect(diagonals.length).toBe(facets);
    expect(scene.marks.some((m) => m.role === "hexbin")).toBe(true);
  });

  test("identical moments put every hexbin on the diagonal", () => {
    const rows = readMomentComparison(join(FIXTURE, "moment_comparison.csv"))
      .map((r) => ({ ...r, rmseAmc: r.rmseMc }));
    const scene = momentsHex(rows, "rmse");
    for (const m of scene.marks) {
      if (m.role !== "hexbin" || m.kind !== "polygon") continue;
      const cx = m.points.reduce((s, p) => s + p[0], 0) / m.points.length;
      const cy = m.points.reduce((s, p) => s + p[1], 0) / m.points.length;
      const diag = scene.marks.find(
        (d) => d.role === "diagonal" && d.kind === "line" &&
               d.x1 - 20 <= cx && cx <= d.x2 + 20 &&
               Math.min(d.y1, d.y2) - 20 <= cy &&
               cy <= Math.max(d.y1, d.y2) + 20) as
        { x1: number; y1: number; x2: number; y2: number } | undefined;
      expect(diag).toBeDefined();
      // distance from the bin centre to the 45-degree line, in pixels
      const t = (cx - diag!.x1) / (diag!.x2 - diag!.x1 || 1);
      const yOnLine = diag!.y1 + t * (diag!.y2 - diag!.y1);
      expect(Math.abs(cy - yOnLine)).toBeLessThan(12);
    }
  });

  test("coverage bars draw the nominal-level line in every facet", () => {
    const rows = readCoverage(join(FIXTURE, "coverage.csv"))
      .filter((r) => r.geolevel === "state");
    const scene = coverageBars(rows, 0.9);
    const refs = scene.marks.filter((m) => m.role === "reference");
    expect(refs.length).toBe(new Set(rows.map((r) => r.sizeGroup)).size);
    expect(scene.marks.filter((m) => m.role === "bar").length)
      .toBeGreaterThanOrEqual(rows.length);
    expect(scene.marks.some((m) => m.role === "group-share")).toBe(true);
  });

  test("single-row coverage still renders", () => {
    const scene = coverageBars([{ geolevel: "state", sizeGroup: "0",
                                  ciType: "ct", nQueries: 5, proportion: 1.0,
                                  groupShare: 1.0 }]);
    expect(scene.marks.filter((m) => m.role === "bar").length).toBe(1);
    expect(toSvg(scene)).toContain("data-role=\"reference\"");
  });

  test("width boxes cover all interval types present", () => {
    const rows = readWidths(join(FIXTURE, "widths.csv"))
      .filter((r) => r.geolevel === "county");
    const scene = widthBox(rows);
    expect(scene.marks.filter((m) => m.role === "box").length).toBe(rows.length);
  });

  test("qq panels include band, diagonal, and the point-estimate line", () => {
    const values = readTabulation(join(FIXTURE, "tabulation_amc.csv"));
    const refs = readTabulation(join(FIXTURE, "answers_ppmf0.csv"));
    const references = new Map([...refs.entries()].map(([k, v]) => [k, v[0]]));
    const picked = pickQqQueries(values, references);
    expect(picked.length).toBe(4);
    const scene = qqPanels(picked);
    expect(scene.marks.filter((m) => m.role === "ks-band").length).toBe(4);
    expect(scene.marks.filter((m) => m.role === "diagonal").length).toBe(4);
    expect(scene.marks.filter((m) => m.role === "point-estimate").length).toBe(4);
    expect(scene.marks.filter((m) => m.role === "qq-point").length).toBe(4 * 25);
  });

  test("sensitivity dots carry one colour per replicate count", () => {
    const rows = readSensitivity(join(FIXTURE, "sensitivity.csv"));
    const scene = sensitivityDots(rows);
    const sizes = new Set(rows.map((r) => r.nIterations));
    const dots = scene.marks.filter((m) => m.role === "dot" && m.kind === "circle");
    expect(new Set(dots.map((d) => (d as { fill: string }).fill)).size)
      .toBe(sizes.size);
    expect(scene.marks.some((m) => m.role === "reference")).toBe(true);
  });

  test("rendering is deterministic", () => {
    const rows = readCoverage(join(FIXTURE, "coverage.csv"));
    const a = toSvg(coverageBars(rows));
    const b = toSvg(coverageBars(rows));
    expect(a).toBe(b);
    expect(toPng(coverageBars(rows)).equals(toPng(coverageBars(rows)))).toBe(true);
  });
});

describe("png encoding", () => {
  test("valid signature and declared dimensions", () => {
    const scene = coverageBars(readCoverage(join(FIXTURE, "coverage.csv"))
      .filter((r) => r.geolevel === "root"));
    const png = toPng(scene);
    expect([...png.subarray(0, 8)]).toEqual([0x89, 0x50, 0x4e, 0x47,
                                             0x0d, 0x0a, 0x1a, 0x0a]);
    expect(png.readUInt32BE(16)).toBe(Math.ceil(scene.width));
    expect(png.readUInt32BE(20)).toBe(Math.ceil(scene.height));
  });
});

describe("render-all", () => {
  test("writes every figure kind in svg", () => {
    const out = mkdtempSync(join(tmpdir(), "figs-"));
    const written = renderAll(FIXTURE, "svg", out);
    const names = written.map((p) => p.split("/").pop());
    expect(names).toContain("moments_hex_rmse.svg");
    expect(names).toContain("qq.svg");
    expect(names).toContain("sensitivity.svg");
    expect(names.some((n) => n!.startsWith("coverage_bars_"))).toBe(true);
    expect(names.some((n) => n!.startsWith("width_box_"))).toBe(true);
    for (const p of written) {
      expect(readFileSync(p, "utf-8")).toContain("<svg");
    }
  });

  test("writes png when asked", () => {
    const out = mkdtempSync(join(tmpdir(), "figs-"));
    const written = renderAll(FIXTURE, "png", out);
    for (const p of written) {
      expect(readFileSync(p).subarray(1, 4).toString("ascii")).toBe("PNG");
    }
  });

  test("cli entry point", () => {
    const out = mkdtempSync(join(tmpdir(), "figs-"));
    expect(main(["render-all", FIXTURE, "--format", "svg", "--out", out])).toBe(0);
    expect(main(["render-all", join(FIXTURE, "missing")])).toBe(1);
  });
});
