/**
 * Dependency-free PNG output: marks are painted into an RGBA buffer
 * (scanline polygon fill, Bresenham lines, a classic 5x7 bitmap font for
 * labels) and encoded with node's zlib. Rendering is deterministic, so the
 * same scene always produces identical bytes.
 */

import { deflateSync } from "node:zlib";
import type { Mark, Scene } from "./scene.js";

// column-encoded 5x7 glyphs, least significant bit = top row
const FONT: Record<string, number[]> = {
  " ": [0x00, 0x00, 0x00, 0x00, 0x00],
  "0": [0x3e, 0x51, 0x49, 0x45, 0x3e],
  "1": [0x00, 0x42, 0x7f, 0x40, 0x00],
  "2": [0x42, 0x61, 0x51, 0x49, 0x46],
  "3": [0x21, 0x41, 0x45, 0x4b, 0x31],
  "4": [0x18, 0x14, 0x12, 0x7f, 0x10],
  "5": [0x27, 0x45, 0x45, 0x45, 0x39],
  "6": [0x3c, 0x4a, 0x49, 0x49, 0x30],
  "7": [0x01, 0x71, 0x09, 0x05, 0x03],
  "8": [0x36, 0x49, 0x49, 0x49, 0x36],
  "9": [0x06, 0x49, 0x49, 0x29, 0x1e],
  A: [0x7e, 0x11, 0x11, 0x11, 0x7e],
  B: [0x7f, 0x49, 0x49, 0x49, 0x36],
  C: [0x3e, 0x41, 0x41, 0x41, 0x22],
  D: [0x7f, 0x41, 0x41, 0x22, 0x1c],
  E: [0x7f, 0x49, 0x49, 0x49, 0x41],
  F: [0x7f, 0x09, 0x09, 0x09, 0x01],
  G: [0x3e, 0x41, 0x49, 0x49, 0x7a],
  H: [0x7f, 0x08, 0x08, 0x08, 0x7f],
  I: [0x00, 0x41, 0x7f, 0x41, 0x00],
  J: [0x20, 0x40, 0x41, 0x3f, 0x01],
  K: [0x7f, 0x08, 0x14, 0x22, 0x41],
  L: [0x7f, 0x40, 0x40, 0x40, 0x40],
  M: [0x7f, 0x02, 0x0c, 0x02, 0x7f],
  N: [0x7f, 0x04, 0x08, 0x10, 0x7f],
  O: [0x3e, 0x41, 0x41, 0x41, 0x3e],
  P: [0x7f, 0x09, 0x09, 0x09, 0x06],
  Q: [0x3e, 0x41, 0x51, 0x21, 0x5e],
  R: [0x7f, 0x09, 0x19, 0x29, 0x46],
  S: [0x46, 0x49, 0x49, 0x49, 0x31],
  T: [0x01, 0x01, 0x7f, 0x01, 0x01],
  U: [0x3f, 0x40, 0x40, 0x40, 0x3f],
  V: [0x1f, 0x20, 0x40, 0x20, 0x1f],
  W: [0x3f, 0x40, 0x38, 0x40, 0x3f],
  X: [0x63, 0x14, 0x08, 0x14, 0x63],
  Y: [0x07, 0x08, 0x70, 0x08, 0x07],
  Z: [0x61, 0x51, 0x49, 0x45, 0x43],
  ".": [0x00, 0x60, 0x60, 0x00, 0x00],
  ",": [0x00, 0x50, 0x30, 0x00, 0x00],
  ":": [0x00, 0x36, 0x36, 0x00, 0x00],
  "-": [0x08, 0x08, 0x08, 0x08, 0x08],
  "+": [0x08, 0x08, 0x3e, 0x08, 0x08],
  "=": [0x14, 0x14, 0x14, 0x14, 0x14],
  "%": [0x23, 0x13, 0x08, 0x64, 0x62],
  "(": [0x00, 0x1c, 0x22, 0x41, 0x00],
  ")": [0x00, 0x41, 0x22, 0x1c, 0x00],
  "[": [0x00, 0x7f, 0x41, 0x41, 0x00],
  "]": [0x00, 0x41, 0x41, 0x7f, 0x00],
  "/": [0x20, 0x10, 0x08, 0x04, 0x02],
  "&": [0x36, 0x49, 0x55, 0x22, 0x50],
  "_": [0x40, 0x40, 0x40, 0x40, 0x40],
  "|": [0x00, 0x00, 0x7f, 0x00, 0x00],
  "<": [0x08, 0x14, 0x22, 0x41, 0x00],
  ">": [0x00, 0x41, 0x22, 0x14, 0x08],
};
const UNKNOWN = [0x7f, 0x41, 0x41, 0x41, 0x7f];

function parseColor(c: string): [number, number, number] {
  if (c.startsWith("#") && c.length === 7) {
    return [parseInt(c.slice(1, 3), 16), parseInt(c.slice(3, 5), 16),
            parseInt(c.slice(5, 7), 16)];
  }
  const named: Record<string, [number, number, number]> = {
    black: [0, 0, 0], white: [255, 255, 255], red: [200, 30, 30],
    gray: [128, 128, 128], grey: [128, 128, 128],
  };
  return named[c] ?? [0, 0, 0];
}

class Canvas {
  readonly w: number;
  readonly h: number;
  readonly data: Uint8Array;

  constructor(w: number, h: number) {
    this.w = w;
    this.h = h;
    this.data = new Uint8Array(w * h * 4).fill(255);
  }

  set(x: number, y: number, rgb: [number, number, number]): void {
    const xi = Math.round(x);
    const yi = Math.round(y);
    if (xi < 0 || yi < 0 || xi >= this.w || yi >= this.h) return;
    const o = (yi * this.w + xi) * 4;
    this.data[o] = rgb[0];
    this.data[o + 1] = rgb[1];
    this.data[o + 2] = rgb[2];
    this.data[o + 3] = 255;
  }

  fillRect(x: number, y: number, w: number, h: number, rgb: [number, number, number]): void {
    for (let yy = Math.round(y); yy < Math.round(y + h); yy++) {
      for (let xx = Math.round(x); xx < Math.round(x + w); xx++) {
        this.set(xx, yy, rgb);
      }
    }
  }

  line(x1: number, y1: number, x2: number, y2: number,
       rgb: [number, number, number], width = 1, dashed = false): void {
    let x = Math.round(x1);
    let y = Math.round(y1);
    const xe = Math.round(x2);
    const ye = Math.round(y2);
    const dx = Math.abs(xe - x);
    const dy = -Math.abs(ye - y);
    const sx = x < xe ? 1 : -1;
    const sy = y < ye ? 1 : -1;
    let err = dx + dy;
    let step = 0;
    const r = Math.max(0, Math.floor(width / 2));
    for (;;) {
      const on = !dashed || step % 7 < 4;
      if (on) {
        for (let ox = -r; ox <= r; ox++) {
          for (let oy = -r; oy <= r; oy++) {
            this.set(x + ox, y + oy, rgb);
          }
        }
      }
      if (x === xe && y === ye) break;
      const e2 = 2 * err;
      if (e2 >= dy) { err += dy; x += sx; }
      if (e2 <= dx) { err += dx; y += sy; }
      step++;
    }
  }

  fillCircle(cx: number, cy: number, radius: number, rgb: [number, number, number]): void {
    for (let y = Math.floor(cy - radius); y <= Math.ceil(cy + radius); y++) {
      const dy = y - cy;
      const span = radius * radius - dy * dy;
      if (span < 0) continue;
      const half = Math.sqrt(span);
      for (let x = Math.round(cx - half); x <= Math.round(cx + half); x++) {
        this.set(x, y, rgb);
      }
    }
  }

  fillPolygon(points: Array<[number, number]>, rgb: [number, number, number]): void {
    const ys = points.map((p) => p[1]);
    const y0 = Math.floor(Math.min(...ys));
    const y1 = Math.ceil(Math.max(...ys));
    for (let y = y0; y <= y1; y++) {
      const cuts: number[] = [];
      for (let i = 0; i < points.length; i++) {
        const [ax, ay] = points[i];
        const [bx, by] = points[(i + 1) % points.length];
        if ((ay <= y && by > y) || (by <= y && ay > y)) {
          cuts.push(ax + ((y - ay) / (by - ay)) * (bx - ax));
        }
      }
      cuts.sort((a, b) => a - b);
      for (let i = 0; i + 1 < cuts.length; i += 2) {
        for (let x = Math.round(cuts[i]); x <= Math.round(cuts[i + 1]); x++) {
          this.set(x, y, rgb);
        }
      }
    }
  }

  textWidth(s: string, scale: number): number {
    return s.length * 6 * scale - scale;
  }

  text(x: number, y: number, s: string, rgb: [number, number, number],
       size: number, anchor: "start" | "middle" | "end"): void {
    // size is the SVG font-size; the 7-row glyph maps to roughly that height
    const scale = Math.max(1, Math.round(size / 8));
    const width = this.textWidth(s, scale);
    let ox = Math.round(x);
    if (anchor === "middle") ox -= Math.round(width / 2);
    if (anchor === "end") ox -= width;
    const oy = Math.round(y) - 7 * scale + scale; // y is the text baseline
    for (const ch of s.toUpperCase()) {
      const glyph = FONT[ch] ?? UNKNOWN;
      for (let col = 0; col < 5; col++) {
        for (let row = 0; row < 7; row++) {
          if ((glyph[col] >> row) & 1) {
            this.fillRect(ox + col * scale, oy + row * scale, scale, scale, rgb);
          }
        }
      }
      ox += 6 * scale;
    }
  }
}

// --- PNG encoding ---------------------------------------------------------

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(buf: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < buf.length; i++) {
    c = CRC_TABLE[(c ^ buf[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, body: Uint8Array): Buffer {
  const head = Buffer.alloc(4);
  head.writeUInt32BE(body.length);
  const typed = Buffer.concat([Buffer.from(type, "ascii"), body]);
  const crc = Buffer.alloc(4);
  crc.writeUInt32BE(crc32(typed));
  return Buffer.concat([head, typed, crc]);
}

function encodePng(canvas: Canvas): Buffer {
  const { w, h, data } = canvas;
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(w, 0);
  ihdr.writeUInt32BE(h, 4);
  ihdr[8] = 8;   // bit depth
  ihdr[9] = 6;   // RGBA
  const raw = Buffer.alloc(h * (1 + w * 4));
  for (let y = 0; y < h; y++) {
    raw[y * (1 + w * 4)] = 0; // filter: none
    raw.set(data.subarray(y * w * 4, (y + 1) * w * 4), y * (1 + w * 4) + 1);
  }
  return Buffer.concat([
    Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]),
    chunk("IHDR", ihdr),
    chunk("IDAT", deflateSync(raw, { level: 9 })),
    chunk("IEND", Buffer.alloc(0)),
  ]);
}

export function toPng(scene: Scene): Buffer {
  const canvas = new Canvas(Math.ceil(scene.width), Math.ceil(scene.height));
  for (const m of scene.marks as Mark[]) {
    switch (m.kind) {
      case "rect":
        canvas.fillRect(m.x, m.y, m.w, m.h, parseColor(m.fill));
        break;
      case "line":
        canvas.line(m.x1, m.y1, m.x2, m.y2, parseColor(m.stroke),
                    m.width ?? 1, m.dashed ?? false);
        break;
      case "circle":
        canvas.fillCircle(m.cx, m.cy, m.r, parseColor(m.fill));
        break;
      case "polygon":
        canvas.fillPolygon(m.points, parseColor(m.fill));
        break;
      case "text":
        canvas.text(m.x, m.y, m.s, parseColor(m.fill ?? "#000000"),
                    m.size ?? 10, m.anchor ?? "start");
        break;
    }
  }
  return encodePng(canvas);
}
