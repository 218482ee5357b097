/** Sequential model container, SGD training loop, JSON (de)serialization. */

import {
  BatchNormLayer,
  ConvLayer,
  FcLayer,
  Layer,
  batchnormForward,
  convBackward,
  convForward,
  fcBackward,
  fcForward,
  flattenForward,
  maxpoolBackward,
  maxpoolForward,
  outShape,
  reluBackward,
  reluForward,
  softmaxXent,
} from "./layers.js";
import { Rng } from "./rng.js";
import { Volume, argmax, volumeFrom } from "./tensor.js";

export interface Model {
  inputShape: [number, number, number]; // (c, h, w)
  labels: string[];
  layers: Layer[];
}

export function forward(model: Model, x: Volume): { volumes: Volume[]; switches: Map<number, Int32Array> } {
  const volumes: Volume[] = [x];
  const switches = new Map<number, Int32Array>();
  let cur = x;
  model.layers.forEach((layer, i) => {
    switch (layer.kind) {
      case "conv":
        cur = convForward(cur, layer);
        break;
      case "maxpool": {
        const r = maxpoolForward(cur, layer);
        switches.set(i, r.switches);
        cur = r.out;
        break;
      }
      case "relu":
        cur = reluForward(cur);
        break;
      case "flatten":
        cur = flattenForward(cur);
        break;
      case "fc":
        cur = fcForward(cur, layer);
        break;
      case "batchnorm":
        cur = batchnormForward(cur, layer);
        break;
    }
    volumes.push(cur);
  });
  return { volumes, switches };
}

export function logits(model: Model, x: Volume): Float32Array {
  const { volumes } = forward(model, x);
  return volumes[volumes.length - 1].data;
}

export function predict(model: Model, x: Volume): number {
  return argmax(logits(model, x));
}

interface GradStore {
  w: Map<number, Float64Array>;
  b: Map<number, Float64Array>;
}

function newGradStore(model: Model): GradStore {
  const store: GradStore = { w: new Map(), b: new Map() };
  model.layers.forEach((layer, i) => {
    if (layer.kind === "conv" || layer.kind === "fc") {
      store.w.set(i, new Float64Array(layer.w.length));
      store.b.set(i, new Float64Array(layer.b.length));
    }
  });
  return store;
}

function backward(model: Model, volumes: Volume[], switches: Map<number, Int32Array>,
                  gradTop: Float64Array, store: GradStore): void {
  let grad = gradTop;
  for (let i = model.layers.length - 1; i >= 0; i--) {
    const layer = model.layers[i];
    const x = volumes[i];
    switch (layer.kind) {
      case "conv":
        grad = convBackward(x, layer, grad, store.w.get(i)!, store.b.get(i)!);
        break;
      case "maxpool":
        grad = maxpoolBackward(x.data.length, switches.get(i)!, grad);
        break;
      case "relu":
        grad = reluBackward(x, grad);
        break;
      case "flatten":
        break; // same buffer, same order
      case "fc":
        grad = fcBackward(x, layer, grad, store.w.get(i)!, store.b.get(i)!);
        break;
      case "batchnorm":
        throw new Error("batchnorm layers are inference-only here");
    }
  }
}

export interface Sample {
  image: Float32Array; // (c*h*w) in [0,1]
  label: number;
}

export interface TrainOptions {
  epochs: number;
  batchSize: number;
  lr: number;
  momentum: number;
  seed: number;
  log?: (msg: string) => void;
}

export function trainModel(model: Model, train: Sample[], opts: TrainOptions): void {
  const rng = new Rng(opts.seed);
  const [c, h, w] = model.inputShape;
  const velocityW = new Map<number, Float64Array>();
  const velocityB = new Map<number, Float64Array>();
  model.layers.forEach((layer, i) => {
    if (layer.kind === "conv" || layer.kind === "fc") {
      velocityW.set(i, new Float64Array(layer.w.length));
      velocityB.set(i, new Float64Array(layer.b.length));
    }
  });
  const order = train.map((_, i) => i);
  for (let epoch = 0; epoch < opts.epochs; epoch++) {
    rng.shuffle(order);
    let lossSum = 0;
    for (let start = 0; start < order.length; start += opts.batchSize) {
      const batch = order.slice(start, start + opts.batchSize);
      const store = newGradStore(model);
      for (const idx of batch) {
        const sample = train[idx];
        const x = volumeFrom(c, h, w, sample.image);
        const { volumes, switches } = forward(model, x);
        const top = volumes[volumes.length - 1].data;
        const { loss, grad } = softmaxXent(top, sample.label);
        lossSum += loss;
        backward(model, volumes, switches, grad, store);
      }
      const scale = 1.0 / batch.length;
      model.layers.forEach((layer, i) => {
        if (layer.kind !== "conv" && layer.kind !== "fc") return;
        const gw = store.w.get(i)!;
        const gb = store.b.get(i)!;
        const vw = velocityW.get(i)!;
        const vb = velocityB.get(i)!;
        for (let j = 0; j < layer.w.length; j++) {
          vw[j] = opts.momentum * vw[j] - opts.lr * gw[j] * scale;
          layer.w[j] += vw[j];
        }
        for (let j = 0; j < layer.b.length; j++) {
          vb[j] = opts.momentum * vb[j] - opts.lr * gb[j] * scale;
          layer.b[j] += vb[j];
        }
      });
    }
    opts.log?.(`epoch ${epoch + 1}/${opts.epochs} mean loss ${(lossSum / order.length).toFixed(4)}`);
  }
}

export function accuracy(model: Model, samples: Sample[]): number {
  const [c, h, w] = model.inputShape;
  let hits = 0;
  for (const s of samples) {
    if (predict(model, volumeFrom(c, h, w, s.image)) === s.label) hits++;
  }
  return hits / samples.length;
}

// --- demo architecture -------------------------------------------------------

export function buildDemoNet(seed: number, size = 24, labels = ["square", "circle", "triangle"]): Model {
  const rng = new Rng(seed);
  const heInit = (n: number, fanIn: number) => {
    const arr = new Float32Array(n);
    const scale = Math.sqrt(2.0 / fanIn);
    for (let i = 0; i < n; i++) arr[i] = rng.normal() * scale;
    return arr;
  };
  const conv1: ConvLayer = {
    kind: "conv", name: "conv1", inC: 1, outC: 6, k: 5, stride: 1, pad: 2,
    w: heInit(6 * 1 * 25, 25), b: new Float32Array(6),
  };
  const conv2: ConvLayer = {
    kind: "conv", name: "conv2", inC: 6, outC: 12, k: 3, stride: 1, pad: 1,
    w: heInit(12 * 6 * 9, 54), b: new Float32Array(12),
  };
  const flatN = 12 * (size / 4) * (size / 4);
  const fc: FcLayer = {
    kind: "fc", name: "fc", inN: flatN, outN: labels.length,
    w: heInit(labels.length * flatN, flatN), b: new Float32Array(labels.length),
  };
  return {
    inputShape: [1, size, size],
    labels,
    layers: [
      conv1,
      { kind: "relu", name: "relu1" },
      { kind: "maxpool", name: "pool1", k: 2, stride: 2 },
      conv2,
      { kind: "relu", name: "relu2" },
      { kind: "maxpool", name: "pool2", k: 2, stride: 2 },
      { kind: "flatten", name: "flatten" },
      fc,
    ],
  };
}

// --- JSON (de)serialization -----------------------------------------------------

export function modelToJson(model: Model): string {
  return JSON.stringify({
    inputShape: model.inputShape,
    labels: model.labels,
    layers: model.layers.map((layer) => {
      switch (layer.kind) {
        case "conv":
          return { ...layer, w: Array.from(layer.w), b: Array.from(layer.b) };
        case "fc":
          return { ...layer, w: Array.from(layer.w), b: Array.from(layer.b) };
        case "batchnorm":
          return {
            ...layer,
            gamma: Array.from(layer.gamma), beta: Array.from(layer.beta),
            mean: Array.from(layer.mean), variance: Array.from(layer.variance),
          };
        default:
          return layer;
      }
    }),
  });
}

export function modelFromJson(text: string): Model {
  const raw = JSON.parse(text);
  const layers: Layer[] = raw.layers.map((l: any) => {
    switch (l.kind) {
      case "conv":
        return { ...l, w: Float32Array.from(l.w), b: Float32Array.from(l.b) } as ConvLayer;
      case "fc":
        return { ...l, w: Float32Array.from(l.w), b: Float32Array.from(l.b) } as FcLayer;
      case "batchnorm":
        return {
          ...l,
          gamma: Float32Array.from(l.gamma), beta: Float32Array.from(l.beta),
          mean: Float32Array.from(l.mean), variance: Float32Array.from(l.variance),
        } as BatchNormLayer;
      case "maxpool":
      case "relu":
      case "flatten":
        return l as Layer;
      default:
        throw new Error(`unsupported layer type '${l.kind}'`);
    }
  });
  return { inputShape: raw.inputShape, labels: raw.labels, layers };
}
