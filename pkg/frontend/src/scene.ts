/**
 * Figures are built as flat lists of primitive marks so one figure
 * definition can serialize to SVG or paint to a raster for PNG output.
 * The optional `role` tags structural elements (reference lines, bands)
 * so tests can find them without parsing output files.
 */

export type Mark =
  | { kind: "rect"; x: number; y: number; w: number; h: number; fill: string;
      role?: string }
  | { kind: "line"; x1: number; y1: number; x2: number; y2: number;
      stroke: string; width?: number; dashed?: boolean; role?: string }
  | { kind: "circle"; cx: number; cy: number; r: number; fill: string;
      role?: string }
  | { kind: "polygon"; points: Array<[number, number]>; fill: string;
      role?: string }
  | { kind: "text"; x: number; y: number; s: string; size?: number;
      anchor?: "start" | "middle" | "end"; fill?: string; role?: string };

export interface Scene {
  width: number;
  height: number;
  marks: Mark[];
}

const round = (v: number) => Math.round(v * 100) / 100;

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function toSvg(scene: Scene): string {
  const out: string[] = [];
  out.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${scene.width}" ` +
           `height="${scene.height}" viewBox="0 0 ${scene.width} ${scene.height}">`);
  out.push(`<rect x="0" y="0" width="${scene.width}" height="${scene.height}" fill="#ffffff"/>`);
  for (const m of scene.marks) {
    const role = m.role ? ` data-role="${m.role}"` : "";
    switch (m.kind) {
      case "rect":
        out.push(`<rect x="${round(m.x)}" y="${round(m.y)}" width="${round(m.w)}" ` +
                 `height="${round(m.h)}" fill="${m.fill}"${role}/>`);
        break;
      case "line": {
        const dash = m.dashed ? ` stroke-dasharray="4 3"` : "";
        out.push(`<line x1="${round(m.x1)}" y1="${round(m.y1)}" x2="${round(m.x2)}" ` +
                 `y2="${round(m.y2)}" stroke="${m.stroke}" ` +
                 `stroke-width="${m.width ?? 1}"${dash}${role}/>`);
        break;
      }
      case "circle":
        out.push(`<circle cx="${round(m.cx)}" cy="${round(m.cy)}" r="${round(m.r)}" ` +
                 `fill="${m.fill}"${role}/>`);
        break;
      case "polygon": {
        const pts = m.points.map(([x, y]) => `${round(x)},${round(y)}`).join(" ");
        out.push(`<polygon points="${pts}" fill="${m.fill}"${role}/>`);
        break;
      }
      case "text": {
        const anchor = m.anchor ?? "start";
        const size = m.size ?? 10;
        out.push(`<text x="${round(m.x)}" y="${round(m.y)}" font-size="${size}" ` +
                 `font-family="Helvetica, Arial, sans-serif" text-anchor="${anchor}" ` +
                 `fill="${m.fill ?? "#000000"}"${role}>${esc(m.s)}</text>`);
        break;
      }
    }
  }
  out.push("</svg>");
  return out.join("\n") + "\n";
}

/** Regular hexagon (pointy-top) centred at (cx, cy) with circumradius r. */
export function hexagonPoints(cx: number, cy: number, r: number): Array<[number, number]> {
  const pts: Array<[number, number]> = [];
  for (let i = 0; i < 6; i++) {
    const angle = (Math.PI / 3) * i - Math.PI / 6;
    pts.push([cx + r * Math.cos(angle), cy + r * Math.sin(angle)]);
  }
  return pts;
}

/** Shade from light to dark blue for densities in [0, 1]. */
export function densityColor(t: number): string {
  const clamp = Math.max(0, Math.min(1, t));
  const from = [222, 235, 247];
  const to = [8, 48, 107];
  const rgb = from.map((f, i) => Math.round(f + (to[i] - f) * clamp));
  return `#${rgb.map((c) => c.toString(16).padStart(2, "0")).join("")}`;
}
