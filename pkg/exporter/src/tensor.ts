/** Channel-major volumes: data[c*h*w + y*w + x], matching the engine layout. */

export interface Volume {
  c: number;
  h: number;
  w: number;
  data: Float32Array;
}

export function zeros(c: number, h: number, w: number): Volume {
  return { c, h, w, data: new Float32Array(c * h * w) };
}

export function volumeFrom(c: number, h: number, w: number, data: Float32Array): Volume {
  if (data.length !== c * h * w) {
    throw new Error(`volume data length ${data.length} != ${c}x${h}x${w}`);
  }
  return { c, h, w, data };
}

export function argmax(arr: ArrayLike<number>): number {
  let best = 0;
  for (let i = 1; i < arr.length; i++) {
    if (arr[i] > arr[best]) best = i;
  }
  return best;
}
