/** Offline pipeline driver: gen-data, train, export, dump-logits. */

import * as fs from "node:fs";

import { genDataset, loadSamples, decodePgm, readManifest } from "./dataset.js";
import { exportModel } from "./export.js";
import { accuracy, buildDemoNet, logits, modelFromJson, modelToJson, trainModel } from "./model.js";
import { volumeFrom, argmax } from "./tensor.js";

function parseArgs(argv: string[]): { command: string; opts: Record<string, string> } {
  const [command, ...rest] = argv;
  const opts: Record<string, string> = {};
  for (let i = 0; i < rest.length; i += 2) {
    if (!rest[i].startsWith("--") || i + 1 >= rest.length) {
      throw new Error(`bad argument ${rest[i]}`);
    }
    opts[rest[i].slice(2)] = rest[i + 1];
  }
  return { command, opts };
}

function need(opts: Record<string, string>, key: string): string {
  if (!(key in opts)) throw new Error(`--${key} is required`);
  return opts[key];
}

export function main(argv: string[]): number {
  const { command, opts } = parseArgs(argv);
  switch (command) {
    case "gen-data": {
      const manifest = genDataset(need(opts, "out"), Number(opts.n ?? 600),
                                  Number(opts.seed ?? 1234), Number(opts.size ?? 24));
      console.log(JSON.stringify({ manifest }));
      return 0;
    }
    case "train": {
      const samples = loadSamples(need(opts, "data"));
      const seed = Number(opts.seed ?? 42);
      const holdout = Number(opts.holdout ?? 100);
      const model = buildDemoNet(seed, Number(opts.size ?? 24));
      const train = samples.slice(0, samples.length - holdout);
      const test = samples.slice(samples.length - holdout);
      trainModel(model, train, {
        epochs: Number(opts.epochs ?? 14),
        batchSize: 16,
        lr: Number(opts.lr ?? 0.03),
        momentum: 0.9,
        seed: seed + 1,
        log: (msg) => console.error(msg),
      });
      const acc = accuracy(model, test);
      fs.writeFileSync(need(opts, "out"), modelToJson(model));
      console.log(JSON.stringify({ holdout_accuracy: acc, train: train.length, test: test.length }));
      return 0;
    }
    case "export": {
      exportModel({
        sourcePath: need(opts, "model"),
        outWeights: need(opts, "weights"),
        outConfig: need(opts, "config"),
        name: opts.name,
      });
      console.log(JSON.stringify({ weights: opts.weights, config: opts.config }));
      return 0;
    }
    case "dump-logits": {
      const model = modelFromJson(fs.readFileSync(need(opts, "model"), "utf-8"));
      const [c, h, w] = model.inputShape;
      const records = readManifest(need(opts, "manifest"));
      const out = records.map((rec) => {
        const { pixels } = decodePgm(fs.readFileSync(rec.path));
        const image = new Float32Array(pixels.length);
        for (let i = 0; i < pixels.length; i++) image[i] = pixels[i] / 255;
        const scores = logits(model, volumeFrom(c, h, w, image));
        return { path: rec.path, logits: Array.from(scores), top1: argmax(scores) };
      });
      fs.writeFileSync(need(opts, "out"), JSON.stringify(out, null, 1));
      console.log(JSON.stringify({ samples: out.length }));
      return 0;
    }
    default:
      console.error(`unknown command '${command}' (gen-data | train | export | dump-logits)`);
      return 1;
  }
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("cli.ts") || entry.endsWith("cli.js")) {
  try {
    process.exit(main(process.argv.slice(2)));
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    process.exit(1);
  }
}
