/** Procedural shapes dataset: bright square / circle / triangle on a textured
 * background.  Fixed seed means identical bytes, so the dataset is checked in
 * as this generator plus a seed, never as binaries. */

import * as fs from "node:fs";
import * as path from "node:path";

import { Rng } from "./rng.js";

export const LABELS = ["square", "circle", "triangle"];

export interface GeneratedImage {
  pixels: Uint8Array; // (size*size) grayscale
  label: number;
  box: [number, number, number, number]; // x0, y0, x1, y1 inclusive
}

export function genImage(rng: Rng, size = 24): GeneratedImage {
  const img = new Float32Array(size * size);
  for (let i = 0; i < img.length; i++) img[i] = rng.uniform(0.05, 0.25);
  const label = rng.int(0, 3);
  const side = rng.int(10, 17);
  const r0 = rng.int(0, size - side + 1);
  const c0 = rng.int(0, size - side + 1);
  const bright = () => rng.uniform(0.8, 0.95);
  if (label === 0) {
    for (let r = r0; r < r0 + side; r++) {
      for (let c = c0; c < c0 + side; c++) img[r * size + c] = bright();
    }
  } else if (label === 1) {
    const rad = side / 2;
    const cy = r0 + rad - 0.5;
    const cx = c0 + rad - 0.5;
    for (let r = r0; r < r0 + side; r++) {
      for (let c = c0; c < c0 + side; c++) {
        if ((r - cy) ** 2 + (c - cx) ** 2 <= rad * rad) img[r * size + c] = bright();
      }
    }
  } else {
    // upward triangle: row r spans a widening band around the center column
    const cx = c0 + (side - 1) / 2;
    for (let i = 0; i < side; i++) {
      const half = ((i + 1) / side) * (side / 2);
      const r = r0 + i;
      for (let c = Math.ceil(cx - half); c <= Math.floor(cx + half); c++) {
        if (c >= 0 && c < size) img[r * size + c] = bright();
      }
    }
  }
  const pixels = new Uint8Array(img.length);
  for (let i = 0; i < img.length; i++) pixels[i] = Math.floor(img[i] * 255 + 0.5);
  return { pixels, label, box: [c0, r0, c0 + side - 1, r0 + side - 1] };
}

export function encodePgm(pixels: Uint8Array, w: number, h: number): Buffer {
  return Buffer.concat([Buffer.from(`P5\n${w} ${h}\n255\n`, "ascii"), Buffer.from(pixels)]);
}

export function decodePgm(buf: Buffer): { w: number; h: number; pixels: Uint8Array } {
  const text = buf.subarray(0, 64).toString("latin1");
  const m = /^P5\s+(\d+)\s+(\d+)\s+255\s/.exec(text);
  if (!m) throw new Error("not a binary maxval-255 PGM");
  const w = Number(m[1]);
  const h = Number(m[2]);
  const start = m[0].length;
  if (buf.length < start + w * h) throw new Error("truncated PGM raster");
  return { w, h, pixels: new Uint8Array(buf.subarray(start, start + w * h)) };
}

export interface ManifestRecord {
  path: string;
  label_index: number;
  boxes: number[][];
}

/** Writes n PGM images plus the JSONL manifest the engine's eval consumes. */
export function genDataset(dir: string, n: number, seed: number, size = 24): string {
  fs.mkdirSync(dir, { recursive: true });
  const rng = new Rng(seed);
  const lines: string[] = [];
  for (let i = 0; i < n; i++) {
    const { pixels, label, box } = genImage(rng, size);
    const name = `shape_${String(i).padStart(4, "0")}.pgm`;
    const file = path.join(dir, name);
    fs.writeFileSync(file, encodePgm(pixels, size, size));
    const rec: ManifestRecord = { path: file, label_index: label, boxes: [box] };
    lines.push(JSON.stringify(rec));
  }
  const manifest = path.join(dir, "manifest.jsonl");
  fs.writeFileSync(manifest, lines.join("\n") + "\n");
  return manifest;
}

export function readManifest(manifest: string): ManifestRecord[] {
  return fs
    .readFileSync(manifest, "utf-8")
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line));
}

/** Loads manifest images back as [0,1] float samples for training. */
export function loadSamples(manifest: string): { image: Float32Array; label: number }[] {
  return readManifest(manifest).map((rec) => {
    const { pixels } = decodePgm(fs.readFileSync(rec.path));
    const image = new Float32Array(pixels.length);
    for (let i = 0; i < pixels.length; i++) image[i] = pixels[i] / 255;
    return { image, label: rec.label_index };
  });
}
