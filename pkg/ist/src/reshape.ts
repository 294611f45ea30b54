/**
 * Window reshaping between the complex covariance stack and the real-valued
 * CNN tensor: a (T, X, Ka, Ka) complex window becomes a real tensor indexed
 * [d, h, w, c] = [2Ka, Ka, X, T] with the real part in rows 0..Ka-1 and the
 * imaginary part in rows Ka..2Ka-1; the inverse reconstruction is exact.
 */

import { Tensor } from "./tensor";

export interface ComplexWindow {
  frames: number; // T
  subcarriers: number; // X
  ka: number;
  re: Float64Array; // (T, X, Ka, Ka) row-major
  im: Float64Array;
}

export function windowFromInterleaved(
  values: Float32Array | Float64Array,
  frames: number,
  subcarriers: number,
  ka: number,
): ComplexWindow {
  const count = frames * subcarriers * ka * ka;
  if (values.length !== 2 * count) {
    throw new Error(`expected ${2 * count} interleaved floats, got ${values.length}`);
  }
  const re = new Float64Array(count);
  const im = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    re[i] = values[2 * i];
    im[i] = values[2 * i + 1];
  }
  return { frames, subcarriers, ka, re, im };
}

export function reshapeReal(win: ComplexWindow): Tensor {
  const { frames: t, subcarriers: x, ka } = win;
  const out = new Tensor([2 * ka, ka, x, t]);
  const d = out.data;
  for (let i = 0; i < ka; i++) {
    for (let j = 0; j < ka; j++) {
      for (let xx = 0; xx < x; xx++) {
        for (let tt = 0; tt < t; tt++) {
          const src = ((tt * x + xx) * ka + i) * ka + j;
          const dstRe = ((i * ka + j) * x + xx) * t + tt;
          const dstIm = (((i + ka) * ka + j) * x + xx) * t + tt;
          d[dstRe] = win.re[src];
          d[dstIm] = win.im[src];
        }
      }
    }
  }
  return out;
}

export function reshapeComplex(tensor: Tensor, ka: number): ComplexWindow {
  const [dd, hh, x, t] = tensor.shape;
  if (dd !== 2 * ka || hh !== ka) throw new Error("tensor shape disagrees with ka");
  const count = t * x * ka * ka;
  const re = new Float64Array(count);
  const im = new Float64Array(count);
  const d = tensor.data;
  for (let i = 0; i < ka; i++) {
    for (let j = 0; j < ka; j++) {
      for (let xx = 0; xx < x; xx++) {
        for (let tt = 0; tt < t; tt++) {
          const dst = ((tt * x + xx) * ka + i) * ka + j;
          re[dst] = d[((i * ka + j) * x + xx) * t + tt];
          im[dst] = d[(((i + ka) * ka + j) * x + xx) * t + tt];
        }
      }
    }
  }
  return { frames: t, subcarriers: x, ka, re, im };
}

/** Frame t of the real tensor flattened to the transformer's column vector
 * [vec(Re); vec(Im)] of length 2*Ka*Ka*X (column-major over (i, j, x)). */
export function frameVector(tensor: Tensor, frame: number): Float64Array {
  const [dd, ka, x, t] = tensor.shape;
  const out = new Float64Array(dd * ka * x);
  const d = tensor.data;
  let idx = 0;
  for (let i = 0; i < dd; i++) {
    for (let j = 0; j < ka; j++) {
      for (let xx = 0; xx < x; xx++) {
        out[idx++] = d[((i * ka + j) * x + xx) * t + frame];
      }
    }
  }
  return out;
}

/** Inverse of frameVector: scatter a column vector back into frame t. */
export function scatterFrameVector(tensor: Tensor, frame: number, vec: Float64Array): void {
  const [dd, ka, x, t] = tensor.shape;
  const d = tensor.data;
  let idx = 0;
  for (let i = 0; i < dd; i++) {
    for (let j = 0; j < ka; j++) {
      for (let xx = 0; xx < x; xx++) {
        d[((i * ka + j) * x + xx) * t + frame] = vec[idx++];
      }
    }
  }
}
