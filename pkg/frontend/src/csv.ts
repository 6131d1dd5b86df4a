/**
 * Strict readers for the pipeline's CSV contracts.
 *
 * The upstream files never quote fields (ids are plain tokens), so rows
 * split on commas. Header mismatches fail loudly, naming the column and
 * file, since a renamed column upstream must not silently shift data.
 */

import { readFileSync } from "node:fs";

export class CsvSchemaError extends Error {}

export function readCsv(path: string, expectedHeader: string[]): string[][] {
  const text = readFileSync(path, "utf-8");
  const lines = text.split("\n").map((l) => l.replace(/\r$/, ""))
    .filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new CsvSchemaError(`${path}: empty file`);
  }
  const header = lines[0].split(",");
  for (const col of expectedHeader) {
    if (!header.includes(col)) {
      throw new CsvSchemaError(`${path}: missing column "${col}" (header: ${header.join(",")})`);
    }
  }
  for (const col of header) {
    if (!expectedHeader.includes(col)) {
      throw new CsvSchemaError(`${path}: unexpected column "${col}"`);
    }
  }
  const index = expectedHeader.map((c) => header.indexOf(c));
  return lines.slice(1).map((line) => {
    const parts = line.split(",");
    return index.map((i) => parts[i]);
  });
}

export interface CoverageRow {
  geolevel: string;
  sizeGroup: string;
  ciType: string;
  nQueries: number;
  proportion: number;
  groupShare: number;
}

export function readCoverage(path: string): CoverageRow[] {
  return readCsv(path, ["geolevel", "size_group", "ci_type", "n_queries",
    "proportion_containing_cef", "group_share"]).map((r) => ({
    geolevel: r[0],
    sizeGroup: r[1],
    ciType: r[2],
    nQueries: Number(r[3]),
    proportion: Number(r[4]),
    groupShare: Number(r[5]),
  }));
}

export interface WidthRow {
  geolevel: string;
  sizeGroup: string;
  ciType: string;
  min: number;
  q1: number;
  median: number;
  q3: number;
  max: number;
  mean: number;
}

export function readWidths(path: string): WidthRow[] {
  return readCsv(path, ["geolevel", "size_group", "ci_type", "min", "q1",
    "median", "q3", "max", "mean"]).map((r) => ({
    geolevel: r[0],
    sizeGroup: r[1],
    ciType: r[2],
    min: Number(r[3]),
    q1: Number(r[4]),
    median: Number(r[5]),
    q3: Number(r[6]),
    max: Number(r[7]),
    mean: Number(r[8]),
  }));
}

export interface MomentRow {
  queryId: string;
  geolevel: string;
  sizeGroup: string;
  rmseMc: number;
  rmseAmc: number;
  biasMc: number;
  biasAmc: number;
  sdMc: number;
  sdAmc: number;
}

export function readMomentComparison(path: string): MomentRow[] {
  return readCsv(path, ["query_id", "geolevel", "size_group", "rmse_mc",
    "rmse_amc", "bias_mc", "bias_amc", "sd_mc", "sd_amc"]).map((r) => ({
    queryId: r[0],
    geolevel: r[1],
    sizeGroup: r[2],
    rmseMc: Number(r[3]),
    rmseAmc: Number(r[4]),
    biasMc: Number(r[5]),
    biasAmc: Number(r[6]),
    sdMc: Number(r[7]),
    sdAmc: Number(r[8]),
  }));
}

export interface SensitivityRow extends CoverageRow {
  nIterations: number;
}

export function readSensitivity(path: string): SensitivityRow[] {
  return readCsv(path, ["n_iterations", "geolevel", "size_group", "ci_type",
    "n_queries", "proportion_containing_cef", "group_share"]).map((r) => ({
    nIterations: Number(r[0]),
    geolevel: r[1],
    sizeGroup: r[2],
    ciType: r[3],
    nQueries: Number(r[4]),
    proportion: Number(r[5]),
    groupShare: Number(r[6]),
  }));
}

/** Replicate values per query from a tabulation file, replicate order. */
export function readTabulation(path: string): Map<string, number[]> {
  const rows = readCsv(path, ["query_id", "replicate", "value"]);
  const byQuery = new Map<string, Array<[number, number]>>();
  for (const [qid, rep, value] of rows) {
    let entry = byQuery.get(qid);
    if (!entry) {
      entry = [];
      byQuery.set(qid, entry);
    }
    entry.push([Number(rep), Number(value)]);
  }
  const out = new Map<string, number[]>();
  for (const [qid, pairs] of byQuery) {
    pairs.sort((a, b) => a[0] - b[0]);
    out.set(qid, pairs.map((p) => p[1]));
  }
  return out;
}
