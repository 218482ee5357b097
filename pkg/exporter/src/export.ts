/** Convert a trained sequential model into the engine's on-disk formats:
 * an STNT weight file plus a network-config JSON.  Batch-norm layers are
 * folded into the preceding convolution so the engine needs no norm kind. */

import * as fs from "node:fs";

import { BatchNormLayer, ConvLayer, Layer } from "./layers.js";
import { Model, modelFromJson } from "./model.js";
import { NamedTensor, encodeStnt } from "./stnt.js";

export interface ExportManifest {
  /** Path to the source model JSON (the trainer's output). */
  sourcePath: string;
  outWeights: string;
  outConfig: string;
  /** Optional per-channel preprocessing constants copied into the config. */
  preprocess?: { mean?: number[]; scale?: number[] };
  name?: string;
}

const EXPORTABLE = new Set(["conv", "maxpool", "relu", "flatten", "fc", "batchnorm"]);

export function foldBatchNorm(conv: ConvLayer, bn: BatchNormLayer): ConvLayer {
  if (bn.gamma.length !== conv.outC) {
    throw new Error(`batchnorm ${bn.name}: ${bn.gamma.length} channels != conv ${conv.outC}`);
  }
  const w = new Float32Array(conv.w);
  const b = new Float32Array(conv.b);
  const per = conv.inC * conv.k * conv.k;
  for (let o = 0; o < conv.outC; o++) {
    const scale = bn.gamma[o] / Math.sqrt(bn.variance[o] + bn.eps);
    for (let i = 0; i < per; i++) w[o * per + i] = Math.fround(w[o * per + i] * scale);
    b[o] = Math.fround((b[o] - bn.mean[o]) * scale + bn.beta[o]);
  }
  return { ...conv, w, b };
}

/** Fold every batch-norm into its preceding conv; error when detached. */
export function foldModel(model: Model): Model {
  const layers: Layer[] = [];
  for (const layer of model.layers) {
    if (!EXPORTABLE.has(layer.kind)) {
      throw new Error(`unsupported layer type '${(layer as Layer).kind}'`);
    }
    if (layer.kind === "batchnorm") {
      const prev = layers[layers.length - 1];
      if (!prev || prev.kind !== "conv") {
        throw new Error(`batchnorm ${layer.name} is not preceded by a conv layer`);
      }
      layers[layers.length - 1] = foldBatchNorm(prev, layer);
    } else {
      layers.push(layer);
    }
  }
  return { ...model, layers };
}

export function modelTensors(model: Model): NamedTensor[] {
  const tensors: NamedTensor[] = [];
  for (const layer of model.layers) {
    if (layer.kind === "conv") {
      tensors.push({ name: `${layer.name}.w`, shape: [layer.outC, layer.inC, layer.k, layer.k],
                     data: layer.w });
      tensors.push({ name: `${layer.name}.b`, shape: [layer.outC], data: layer.b });
    } else if (layer.kind === "fc") {
      tensors.push({ name: `${layer.name}.w`, shape: [layer.outN, layer.inN], data: layer.w });
      tensors.push({ name: `${layer.name}.b`, shape: [layer.outN], data: layer.b });
    }
  }
  return tensors;
}

export function modelConfig(model: Model, name: string, preprocess?: ExportManifest["preprocess"]) {
  const [c, h, w] = model.inputShape;
  const config: Record<string, unknown> = {
    name,
    input: { height: h, width: w, channels: c },
    labels: model.labels,
    layers: model.layers.map((layer) => {
      switch (layer.kind) {
        case "conv":
          return { name: layer.name, kind: "conv", kernel: layer.k, stride: layer.stride,
                   padding: layer.pad, out_channels: layer.outC,
                   weights: `${layer.name}.w`, bias: `${layer.name}.b` };
        case "maxpool":
          return { name: layer.name, kind: "maxpool", kernel: layer.k, stride: layer.stride };
        case "relu":
        case "flatten":
          return { name: layer.name, kind: layer.kind };
        case "fc":
          return { name: layer.name, kind: "fc",
                   weights: `${layer.name}.w`, bias: `${layer.name}.b` };
        default:
          throw new Error(`unsupported layer type '${layer.kind}' after folding`);
      }
    }),
  };
  if (preprocess && (preprocess.mean || preprocess.scale)) {
    config.preprocess = preprocess;
  }
  return config;
}

/** Emit the STNT weight file and config JSON; every tensor name referenced by
 * the config exists in the weight file. */
export function exportModel(manifest: ExportManifest): { weights: Buffer; config: string } {
  const model = foldModel(modelFromJson(fs.readFileSync(manifest.sourcePath, "utf-8")));
  const weights = encodeStnt(modelTensors(model));
  const config = JSON.stringify(
    modelConfig(model, manifest.name ?? "exported-model", manifest.preprocess), null, 2);
  fs.writeFileSync(manifest.outWeights, weights);
  fs.writeFileSync(manifest.outConfig, config + "\n");
  return { weights, config };
}
