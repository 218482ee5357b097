/** Sequential CNN layers: forward for inference/export checks, backward for
 * the demo-net training loop.  Activations live in float32, accumulation in
 * float64, matching the inference engine the exported files target. */

import { Volume, volumeFrom, zeros } from "./tensor.js";

export interface ConvLayer {
  kind: "conv";
  name: string;
  inC: number;
  outC: number;
  k: number;
  stride: number;
  pad: number;
  w: Float32Array; // (outC, inC, k, k)
  b: Float32Array; // (outC)
}

export interface MaxPoolLayer {
  kind: "maxpool";
  name: string;
  k: number;
  stride: number;
}

export interface ReluLayer {
  kind: "relu";
  name: string;
}

export interface FlattenLayer {
  kind: "flatten";
  name: string;
}

export interface FcLayer {
  kind: "fc";
  name: string;
  inN: number;
  outN: number;
  w: Float32Array; // (outN, inN)
  b: Float32Array;
}

export interface BatchNormLayer {
  kind: "batchnorm";
  name: string;
  gamma: Float32Array;
  beta: Float32Array;
  mean: Float32Array;
  variance: Float32Array;
  eps: number;
}

export type Layer = ConvLayer | MaxPoolLayer | ReluLayer | FlattenLayer | FcLayer | BatchNormLayer;

export function outShape(layer: Layer, c: number, h: number, w: number): [number, number, number] {
  switch (layer.kind) {
    case "conv": {
      const oh = Math.floor((h + 2 * layer.pad - layer.k) / layer.stride) + 1;
      const ow = Math.floor((w + 2 * layer.pad - layer.k) / layer.stride) + 1;
      return [layer.outC, oh, ow];
    }
    case "maxpool": {
      const oh = Math.floor((h - layer.k) / layer.stride) + 1;
      const ow = Math.floor((w - layer.k) / layer.stride) + 1;
      return [c, oh, ow];
    }
    case "relu":
    case "batchnorm":
      return [c, h, w];
    case "flatten":
      return [c * h * w, 1, 1];
    case "fc":
      return [layer.outN, 1, 1];
  }
}

export function convForward(x: Volume, L: ConvLayer): Volume {
  const [oc, oh, ow] = outShape(L, x.c, x.h, x.w);
  const out = zeros(oc, oh, ow);
  const { k, stride, pad } = L;
  for (let co = 0; co < oc; co++) {
    const wBase = co * L.inC * k * k;
    for (let oy = 0; oy < oh; oy++) {
      for (let ox = 0; ox < ow; ox++) {
        let acc = L.b[co];
        for (let ci = 0; ci < L.inC; ci++) {
          for (let ky = 0; ky < k; ky++) {
            const iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= x.h) continue;
            for (let kx = 0; kx < k; kx++) {
              const ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= x.w) continue;
              acc += x.data[(ci * x.h + iy) * x.w + ix] * L.w[wBase + (ci * k + ky) * k + kx];
            }
          }
        }
        out.data[(co * oh + oy) * ow + ox] = acc;
      }
    }
  }
  return out;
}

export function convBackward(
  x: Volume,
  L: ConvLayer,
  gradOut: Float64Array,
  gradW: Float64Array,
  gradB: Float64Array,
): Float64Array {
  const [oc, oh, ow] = outShape(L, x.c, x.h, x.w);
  const gradIn = new Float64Array(x.data.length);
  const { k, stride, pad } = L;
  for (let co = 0; co < oc; co++) {
    const wBase = co * L.inC * k * k;
    for (let oy = 0; oy < oh; oy++) {
      for (let ox = 0; ox < ow; ox++) {
        const g = gradOut[(co * oh + oy) * ow + ox];
        if (g === 0) continue;
        gradB[co] += g;
        for (let ci = 0; ci < L.inC; ci++) {
          for (let ky = 0; ky < k; ky++) {
            const iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= x.h) continue;
            for (let kx = 0; kx < k; kx++) {
              const ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= x.w) continue;
              const xi = (ci * x.h + iy) * x.w + ix;
              const wi = wBase + (ci * k + ky) * k + kx;
              gradW[wi] += g * x.data[xi];
              gradIn[xi] += g * L.w[wi];
            }
          }
        }
      }
    }
  }
  return gradIn;
}

export function maxpoolForward(x: Volume, L: MaxPoolLayer): { out: Volume; switches: Int32Array } {
  const [c, oh, ow] = outShape(L, x.c, x.h, x.w);
  const out = zeros(c, oh, ow);
  const switches = new Int32Array(c * oh * ow);
  for (let ci = 0; ci < c; ci++) {
    for (let oy = 0; oy < oh; oy++) {
      for (let ox = 0; ox < ow; ox++) {
        let best = -Infinity;
        let bestIdx = -1;
        for (let ky = 0; ky < L.k; ky++) {
          const iy = oy * L.stride + ky;
          for (let kx = 0; kx < L.k; kx++) {
            const ix = ox * L.stride + kx;
            const v = x.data[(ci * x.h + iy) * x.w + ix];
            if (v > best) {
              best = v;
              bestIdx = (ci * x.h + iy) * x.w + ix;
            }
          }
        }
        const oi = (ci * oh + oy) * ow + ox;
        out.data[oi] = best;
        switches[oi] = bestIdx;
      }
    }
  }
  return { out, switches };
}

export function maxpoolBackward(xLen: number, switches: Int32Array, gradOut: Float64Array): Float64Array {
  const gradIn = new Float64Array(xLen);
  for (let i = 0; i < gradOut.length; i++) {
    gradIn[switches[i]] += gradOut[i];
  }
  return gradIn;
}

export function reluForward(x: Volume): Volume {
  const out = zeros(x.c, x.h, x.w);
  for (let i = 0; i < x.data.length; i++) out.data[i] = x.data[i] > 0 ? x.data[i] : 0;
  return out;
}

export function reluBackward(x: Volume, gradOut: Float64Array): Float64Array {
  const gradIn = new Float64Array(x.data.length);
  for (let i = 0; i < gradIn.length; i++) gradIn[i] = x.data[i] > 0 ? gradOut[i] : 0;
  return gradIn;
}

export function flattenForward(x: Volume): Volume {
  return volumeFrom(x.c * x.h * x.w, 1, 1, x.data);
}

export function fcForward(x: Volume, L: FcLayer): Volume {
  if (x.data.length !== L.inN) {
    throw new Error(`fc ${L.name}: expected ${L.inN} inputs, got ${x.data.length}`);
  }
  const out = zeros(L.outN, 1, 1);
  for (let o = 0; o < L.outN; o++) {
    let acc = L.b[o];
    const base = o * L.inN;
    for (let i = 0; i < L.inN; i++) acc += L.w[base + i] * x.data[i];
    out.data[o] = acc;
  }
  return out;
}

export function fcBackward(
  x: Volume,
  L: FcLayer,
  gradOut: Float64Array,
  gradW: Float64Array,
  gradB: Float64Array,
): Float64Array {
  const gradIn = new Float64Array(L.inN);
  for (let o = 0; o < L.outN; o++) {
    const g = gradOut[o];
    gradB[o] += g;
    const base = o * L.inN;
    for (let i = 0; i < L.inN; i++) {
      gradW[base + i] += g * x.data[i];
      gradIn[i] += g * L.w[base + i];
    }
  }
  return gradIn;
}

export function batchnormForward(x: Volume, L: BatchNormLayer): Volume {
  const out = zeros(x.c, x.h, x.w);
  const plane = x.h * x.w;
  for (let ci = 0; ci < x.c; ci++) {
    const scale = L.gamma[ci] / Math.sqrt(L.variance[ci] + L.eps);
    const shift = L.beta[ci] - L.mean[ci] * scale;
    for (let i = 0; i < plane; i++) {
      out.data[ci * plane + i] = x.data[ci * plane + i] * scale + shift;
    }
  }
  return out;
}

/** Softmax cross-entropy; returns the loss and d(loss)/d(logits). */
export function softmaxXent(logits: Float32Array, label: number): { loss: number; grad: Float64Array } {
  let max = -Infinity;
  for (const v of logits) max = Math.max(max, v);
  let sum = 0;
  const exps = new Float64Array(logits.length);
  for (let i = 0; i < logits.length; i++) {
    exps[i] = Math.exp(logits[i] - max);
    sum += exps[i];
  }
  const grad = new Float64Array(logits.length);
  for (let i = 0; i < logits.length; i++) {
    const p = exps[i] / sum;
    grad[i] = p - (i === label ? 1 : 0);
  }
  return { loss: -Math.log(exps[label] / sum), grad };
}
