/** STNT binary weight format, byte-compatible with the inference engine.
 *
 * Little-endian throughout: magic "STNT", version u16, count u32, then per
 * tensor: name length u16 + UTF-8 name, rank u8, dims u32*rank, f32 payload.
 */

export interface NamedTensor {
  name: string;
  shape: number[];
  data: Float32Array;
}

const MAGIC = Buffer.from("STNT", "ascii");
const VERSION = 1;

export function encodeStnt(tensors: NamedTensor[]): Buffer {
  const parts: Buffer[] = [];
  const head = Buffer.alloc(10);
  MAGIC.copy(head, 0);
  head.writeUInt16LE(VERSION, 4);
  head.writeUInt32LE(tensors.length, 6);
  parts.push(head);
  for (const t of tensors) {
    const name = Buffer.from(t.name, "utf-8");
    const meta = Buffer.alloc(2 + name.length + 1 + 4 * t.shape.length);
    meta.writeUInt16LE(name.length, 0);
    name.copy(meta, 2);
    meta.writeUInt8(t.shape.length, 2 + name.length);
    t.shape.forEach((d, i) => meta.writeUInt32LE(d, 2 + name.length + 1 + 4 * i));
    const expect = t.shape.reduce((a, b) => a * b, 1);
    if (t.data.length !== expect) {
      throw new Error(`tensor ${t.name}: ${t.data.length} values != shape ${t.shape}`);
    }
    const payload = Buffer.alloc(4 * t.data.length);
    for (let i = 0; i < t.data.length; i++) payload.writeFloatLE(t.data[i], 4 * i);
    parts.push(meta, payload);
  }
  return Buffer.concat(parts);
}

export function decodeStnt(buf: Buffer): NamedTensor[] {
  if (buf.length < 10 || !buf.subarray(0, 4).equals(MAGIC)) {
    throw new Error("bad magic at offset 0");
  }
  const version = buf.readUInt16LE(4);
  if (version !== VERSION) throw new Error(`unsupported version ${version}`);
  const count = buf.readUInt32LE(6);
  let pos = 10;
  const out: NamedTensor[] = [];
  const seen = new Set<string>();
  for (let i = 0; i < count; i++) {
    if (pos + 2 > buf.length) throw new Error(`truncated name length at offset ${pos}`);
    const nameLen = buf.readUInt16LE(pos);
    pos += 2;
    if (pos + nameLen + 1 > buf.length) throw new Error(`truncated header at offset ${pos}`);
    const name = buf.subarray(pos, pos + nameLen).toString("utf-8");
    pos += nameLen;
    if (seen.has(name)) throw new Error(`duplicate tensor name '${name}'`);
    seen.add(name);
    const rank = buf.readUInt8(pos);
    pos += 1;
    if (pos + 4 * rank > buf.length) throw new Error(`truncated dims of '${name}' at offset ${pos}`);
    const shape: number[] = [];
    for (let d = 0; d < rank; d++) {
      shape.push(buf.readUInt32LE(pos));
      pos += 4;
    }
    const n = shape.reduce((a, b) => a * b, 1);
    if (pos + 4 * n > buf.length) throw new Error(`truncated payload of '${name}' at offset ${pos}`);
    const data = new Float32Array(n);
    for (let v = 0; v < n; v++) data[v] = buf.readFloatLE(pos + 4 * v);
    pos += 4 * n;
    out.push({ name, shape, data });
  }
  if (pos !== buf.length) throw new Error(`${buf.length - pos} trailing bytes at offset ${pos}`);
  return out;
}
