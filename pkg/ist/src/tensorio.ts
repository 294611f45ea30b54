/**
 * Reader/writer for the .ipnt tensor interchange format.
 *
 * Layout: "IPNT" magic | u32 LE version=1 | u32 LE header length | JSON
 * header {dtype: "c64"|"f32", shape, axes, frame_ids, meta} | little-endian
 * float32 payload, complex entries interleaved (re, im), row-major.
 */

import * as fs from "fs";

export interface TensorHeader {
  dtype: "c64" | "f32";
  shape: number[];
  axes: string[];
  frame_ids: number[];
  meta: Record<string, unknown>;
}

export interface IpntTensor {
  header: TensorHeader;
  /** Raw float payload exactly as stored (re/im interleaved for c64). */
  values: Float32Array;
}

export class TensorFormatError extends Error {
  constructor(public code: string, message: string) {
    super(`${code}: ${message}`);
  }
}

const MAGIC = "IPNT";
const VERSION = 1;

export function readTensorFile(path: string): IpntTensor {
  const raw = fs.readFileSync(path);
  if (raw.length < 4 || raw.toString("latin1", 0, 4) !== MAGIC) {
    throw new TensorFormatError("bad magic", `expected ${MAGIC}`);
  }
  if (raw.length < 12) throw new TensorFormatError("truncated header", "short fixed header");
  const version = raw.readUInt32LE(4);
  if (version !== VERSION) throw new TensorFormatError("bad version", `version ${version}`);
  const hlen = raw.readUInt32LE(8);
  if (raw.length < 12 + hlen) throw new TensorFormatError("truncated header", "JSON cut short");
  let header: TensorHeader;
  try {
    header = JSON.parse(raw.toString("utf-8", 12, 12 + hlen));
  } catch (err) {
    throw new TensorFormatError("bad header", String(err));
  }
  if (!header.dtype || !header.shape) throw new TensorFormatError("bad header", "missing fields");
  const count = header.shape.reduce((a, b) => a * b, 1);
  const nfloats = header.dtype === "c64" ? 2 * count : count;
  const payload = raw.subarray(12 + hlen);
  if (payload.length < 4 * nfloats) {
    throw new TensorFormatError("truncated payload", `need ${4 * nfloats} bytes, have ${payload.length}`);
  }
  if (payload.length > 4 * nfloats) {
    throw new TensorFormatError("shape mismatch", `payload ${payload.length} bytes for shape ${header.shape}`);
  }
  const values = new Float32Array(nfloats);
  for (let i = 0; i < nfloats; i++) values[i] = payload.readFloatLE(4 * i);
  return { header, values };
}

export function writeTensorFile(path: string, tensor: IpntTensor): void {
  const { header, values } = tensor;
  const count = header.shape.reduce((a, b) => a * b, 1);
  const expected = header.dtype === "c64" ? 2 * count : count;
  if (values.length !== expected) {
    throw new TensorFormatError("shape mismatch", `${values.length} floats for shape ${header.shape}`);
  }
  const blob = Buffer.from(JSON.stringify(header), "utf-8");
  const out = Buffer.alloc(12 + blob.length + 4 * values.length);
  out.write(MAGIC, 0, "latin1");
  out.writeUInt32LE(VERSION, 4);
  out.writeUInt32LE(blob.length, 8);
  blob.copy(out, 12);
  for (let i = 0; i < values.length; i++) out.writeFloatLE(values[i], 12 + blob.length + 4 * i);
  fs.writeFileSync(path, out);
}

/** Convenience for writing a complex tensor given separate re/im planes. */
export function complexTensor(
  shape: number[],
  re: Float64Array,
  im: Float64Array,
  extra: Partial<TensorHeader> = {},
): IpntTensor {
  const count = shape.reduce((a, b) => a * b, 1);
  if (re.length !== count || im.length !== count) {
    throw new TensorFormatError("shape mismatch", "re/im planes disagree with shape");
  }
  const values = new Float32Array(2 * count);
  for (let i = 0; i < count; i++) {
    values[2 * i] = Math.fround(re[i]);
    values[2 * i + 1] = Math.fround(im[i]);
  }
  return {
    header: {
      dtype: "c64",
      shape: shape.slice(),
      axes: extra.axes ?? shape.map((_, i) => `axis${i}`),
      frame_ids: extra.frame_ids ?? [],
      meta: extra.meta ?? {},
    },
    values,
  };
}
