import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, describe, expect, it } from "vitest";

import { decodePgm, genDataset, genImage, readManifest, LABELS } from "../src/dataset.js";
import { Rng } from "../src/rng.js";

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "shapes-"));
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

describe("shapes dataset", () => {
  it("same seed, identical bytes", () => {
    const a = path.join(tmp, "a");
    const b = path.join(tmp, "b");
    genDataset(a, 20, 77);
    genDataset(b, 20, 77);
    for (const name of fs.readdirSync(a)) {
      const fa = fs.readFileSync(path.join(a, name));
      const fb = fs.readFileSync(path.join(b, name).replace("/a/", "/b/"));
      // manifests embed absolute paths; compare everything else byte-for-byte
      if (name.endsWith(".pgm")) expect(fa.equals(fb)).toBe(true);
    }
  });

  it("different seed, different images", () => {
    const c = path.join(tmp, "c");
    const d = path.join(tmp, "d");
    genDataset(c, 5, 1);
    genDataset(d, 5, 2);
    const fa = fs.readFileSync(path.join(c, "shape_0000.pgm"));
    const fb = fs.readFileSync(path.join(d, "shape_0000.pgm"));
    expect(fa.equals(fb)).toBe(false);
  });

  it("emits a valid manifest", () => {
    const dir = path.join(tmp, "m");
    const manifest = genDataset(dir, 30, 5);
    const records = readManifest(manifest);
    expect(records).toHaveLength(30);
    const seen = new Set<number>();
    for (const rec of records) {
      expect(fs.existsSync(rec.path)).toBe(true);
      expect(rec.label_index).toBeGreaterThanOrEqual(0);
      expect(rec.label_index).toBeLessThan(LABELS.length);
      seen.add(rec.label_index);
      const [x0, y0, x1, y1] = rec.boxes[0];
      expect(x0).toBeLessThanOrEqual(x1);
      expect(y0).toBeLessThanOrEqual(y1);
      expect(x1).toBeLessThan(24);
      expect(y1).toBeLessThan(24);
      const { w, h } = decodePgm(fs.readFileSync(rec.path));
      expect([w, h]).toEqual([24, 24]);
    }
    expect(seen.size).toBe(3); // all three classes appear
  });

  it("shape pixels are bright inside the box", () => {
    const rng = new Rng(9);
    for (let i = 0; i < 10; i++) {
      const { pixels, box } = genImage(rng);
      const [x0, y0, x1, y1] = box;
      let maxInside = 0;
      for (let r = y0; r <= y1; r++) {
        for (let c = x0; c <= x1; c++) maxInside = Math.max(maxInside, pixels[r * 24 + c]);
      }
      expect(maxInside).toBeGreaterThan(200);
    }
  });
});
