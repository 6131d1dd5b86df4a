/** Small numeric helpers: normal distribution, quantile-quantile data,
 *  and the simultaneous Kolmogorov-Smirnov band. */

/** Standard normal quantile (Acklam's rational approximation, ~1e-9). */
export function normalQuantile(p: number): number {
  if (p <= 0 || p >= 1) {
    if (p === 0) return -Infinity;
    if (p === 1) return Infinity;
    throw new RangeError(`quantile probability out of range: ${p}`);
  }
  const a = [-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
             1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00];
  const b = [-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
             6.680131188771972e+01, -1.328068155288572e+01];
  const c = [-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
             -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00];
  const d = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
             3.754408661907416e+00];
  const plow = 0.02425;
  let q: number, r: number;
  if (p < plow) {
    q = Math.sqrt(-2 * Math.log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > 1 - plow) {
    q = Math.sqrt(-2 * Math.log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

/** Standard normal CDF via Abramowitz-Stegun 7.1.26 erf (|err| < 1.5e-7). */
export function normalCdf(z: number): number {
  const t = 1 / (1 + 0.3275911 * Math.abs(z) / Math.SQRT2);
  const erf = 1 - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t
    - 0.284496736) * t + 0.254829592) * t * Math.exp(-(z * z) / 2);
  return z >= 0 ? 0.5 * (1 + erf) : 0.5 * (1 - erf);
}

export function mean(values: number[]): number {
  return values.reduce((s, v) => s + v, 0) / values.length;
}

export function sampleSd(values: number[]): number {
  const m = mean(values);
  const ss = values.reduce((s, v) => s + (v - m) * (v - m), 0);
  return Math.sqrt(ss / (values.length - 1));
}

export interface QqData {
  /** (theoretical, sample) quantile pairs, one per observation */
  points: Array<[number, number]>;
  /** simultaneous band around the theoretical quantiles, same order */
  bandLow: number[];
  bandHigh: number[];
  mean: number;
  sd: number;
}

/** Half-width of the simultaneous KS band at confidence 1 - alpha. */
export function ksRadius(n: number, alpha = 0.01): number {
  return Math.sqrt(-0.5 * Math.log(alpha / 2)) / Math.sqrt(n);
}

/** KS distance between the sample and Normal(mu, sd). */
export function ksStatistic(values: number[], mu: number, sd: number): number {
  const sorted = [...values].sort((a, b) => a - b);
  const n = sorted.length;
  let worst = 0;
  for (let i = 0; i < n; i++) {
    const f = normalCdf((sorted[i] - mu) / sd);
    worst = Math.max(worst, (i + 1) / n - f, f - i / n);
  }
  return worst;
}

/**
 * Quantile-quantile pairs against the normal fitted by moments, plus the
 * KS band mapped to the quantile scale.
 */
export function qqData(values: number[], alpha = 0.01): QqData {
  const sorted = [...values].sort((a, b) => a - b);
  const n = sorted.length;
  const m = mean(sorted);
  const sd = sampleSd(sorted);
  const r = ksRadius(n, alpha);
  const points: Array<[number, number]> = [];
  const bandLow: number[] = [];
  const bandHigh: number[] = [];
  const eps = 1 / (10 * n);
  for (let i = 0; i < n; i++) {
    const p = (i + 0.5) / n;
    points.push([m + sd * normalQuantile(p), sorted[i]]);
    bandLow.push(m + sd * normalQuantile(Math.max(eps, p - r)));
    bandHigh.push(m + sd * normalQuantile(Math.min(1 - eps, p + r)));
  }
  return { points, bandLow, bandHigh, mean: m, sd };
}

/** Nice round tick values covering [lo, hi]. */
export function ticks(lo: number, hi: number, count = 4): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step0 = span / count;
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((s) => span / s <= count + 1) ?? 10 * mag;
  const start = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = start; v <= hi + 1e-12; v += step) {
    out.push(Number(v.toFixed(10)));
  }
  return out;
}

export function formatTick(v: number): string {
  if (Number.isInteger(v)) return String(v);
  const s = v.toFixed(2);
  return s.replace(/0+$/, "").replace(/\.$/, "");
}
