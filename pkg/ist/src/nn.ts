/**
 * Minimal trainable layers: parameters, linear maps over column matrices,
 * 3-D convolution (channels last, same padding), batch normalization, ReLU,
 * per-column layer normalization, sinusoidal positional encoding and Adam.
 *
 * Forward passes return explicit caches consumed by the matching backward;
 * parameter gradients accumulate until zeroGrads().
 */

import { makeRng, matmul, matmulTA, matmulTB, randn } from "./tensor";

export class Param {
  value: Float64Array;
  grad: Float64Array;

  constructor(public name: string, public shape: number[], init?: Float64Array) {
    const size = shape.reduce((a, b) => a * b, 1);
    this.value = init ?? new Float64Array(size);
    this.grad = new Float64Array(size);
  }
}

export function glorot(name: string, shape: number[], fanIn: number, fanOut: number, rng: () => number): Param {
  const size = shape.reduce((a, b) => a * b, 1);
  const bound = Math.sqrt(6.0 / (fanIn + fanOut));
  const v = new Float64Array(size);
  for (let i = 0; i < size; i++) v[i] = (2 * rng() - 1) * bound;
  return new Param(name, shape, v);
}

// ---- linear over column matrices -------------------------------------------------

/** y (Mout x T) = W (Mout x Min) @ x (Min x T) + b. */
export class Linear {
  w: Param;
  b: Param | null;

  constructor(name: string, public mIn: number, public mOut: number, bias: boolean, rng: () => number) {
    this.w = glorot(`${name}.w`, [mOut, mIn], mIn, mOut, rng);
    this.b = bias ? new Param(`${name}.b`, [mOut]) : null;
  }

  params(): Param[] {
    return this.b ? [this.w, this.b] : [this.w];
  }

  forward(x: Float64Array, cols: number): { out: Float64Array; x: Float64Array; cols: number } {
    const out = matmul(this.w.value, x, this.mOut, this.mIn, cols);
    if (this.b) {
      const b = this.b.value;
      for (let i = 0; i < this.mOut; i++) {
        const row = i * cols;
        for (let j = 0; j < cols; j++) out[row + j] += b[i];
      }
    }
    return { out, x, cols };
  }

  backward(dOut: Float64Array, cache: { x: Float64Array; cols: number }): Float64Array {
    const { x, cols } = cache;
    // dW += dOut @ x^T ; dx = W^T @ dOut
    const dw = matmulTB(dOut, x, this.mOut, cols, this.mIn);
    for (let i = 0; i < dw.length; i++) this.w.grad[i] += dw[i];
    if (this.b) {
      for (let i = 0; i < this.mOut; i++) {
        let acc = 0;
        const row = i * cols;
        for (let j = 0; j < cols; j++) acc += dOut[row + j];
        this.b.grad[i] += acc;
      }
    }
    return matmulTA(this.w.value, dOut, this.mOut, this.mIn, cols);
  }
}

// ---- 3-D convolution ---------------------------------------------------------------

export interface ConvShape {
  b: number;
  d: number;
  h: number;
  w: number;
  c: number;
}

/** Stride-1 same-padding conv over [B, D, H, W, Cin] -> [B, D, H, W, Cout]. */
export class Conv3d {
  weight: Param; // [kd, kh, kw, cin, cout]
  bias: Param;

  constructor(
    name: string,
    public kernel: [number, number, number],
    public cIn: number,
    public cOut: number,
    rng: () => number,
  ) {
    const [kd, kh, kw] = kernel;
    if (kd % 2 === 0 || kh % 2 === 0 || kw % 2 === 0) {
      throw new Error("kernel must be odd in each axis for same padding");
    }
    const fanIn = kd * kh * kw * cIn;
    this.weight = glorot(`${name}.w`, [kd, kh, kw, cIn, cOut], fanIn, cOut, rng);
    this.bias = new Param(`${name}.b`, [cOut]);
  }

  params(): Param[] {
    return [this.weight, this.bias];
  }

  forward(x: Float64Array, s: ConvShape): { out: Float64Array; x: Float64Array; s: ConvShape } {
    const { b, d, h, w } = s;
    const cIn = this.cIn;
    const cOut = this.cOut;
    const [kd, kh, kw] = this.kernel;
    const pd = (kd - 1) >> 1;
    const ph = (kh - 1) >> 1;
    const pw = (kw - 1) >> 1;
    const out = new Float64Array(b * d * h * w * cOut);
    const wt = this.weight.value;
    const bias = this.bias.value;
    for (let bb = 0; bb < b; bb++) {
      const inB = bb * d * h * w * cIn;
      const outB = bb * d * h * w * cOut;
      for (let od = 0; od < d; od++) {
        for (let oh = 0; oh < h; oh++) {
          for (let ow = 0; ow < w; ow++) {
            const outIdx = outB + ((od * h + oh) * w + ow) * cOut;
            for (let co = 0; co < cOut; co++) out[outIdx + co] = bias[co];
            for (let dk = 0; dk < kd; dk++) {
              const id = od + dk - pd;
              if (id < 0 || id >= d) continue;
              for (let hk = 0; hk < kh; hk++) {
                const ih = oh + hk - ph;
                if (ih < 0 || ih >= h) continue;
                for (let wk = 0; wk < kw; wk++) {
                  const iw = ow + wk - pw;
                  if (iw < 0 || iw >= w) continue;
                  const inIdx = inB + ((id * h + ih) * w + iw) * cIn;
                  const wIdx = ((dk * kh + hk) * kw + wk) * cIn * cOut;
                  for (let ci = 0; ci < cIn; ci++) {
                    const v = x[inIdx + ci];
                    if (v === 0) continue;
                    const wRow = wIdx + ci * cOut;
                    for (let co = 0; co < cOut; co++) {
                      out[outIdx + co] += v * wt[wRow + co];
                    }
                  }
                }
              }
            }
          }
        }
      }
    }
    return { out, x, s };
  }

  backward(dOut: Float64Array, cache: { x: Float64Array; s: ConvShape }): Float64Array {
    const { x, s } = cache;
    const { b, d, h, w } = s;
    const cIn = this.cIn;
    const cOut = this.cOut;
    const [kd, kh, kw] = this.kernel;
    const pd = (kd - 1) >> 1;
    const ph = (kh - 1) >> 1;
    const pw = (kw - 1) >> 1;
    const dx = new Float64Array(x.length);
    const wt = this.weight.value;
    const dw = this.weight.grad;
    const db = this.bias.grad;
    for (let bb = 0; bb < b; bb++) {
      const inB = bb * d * h * w * cIn;
      const outB = bb * d * h * w * cOut;
      for (let od = 0; od < d; od++) {
        for (let oh = 0; oh < h; oh++) {
          for (let ow = 0; ow < w; ow++) {
            const outIdx = outB + ((od * h + oh) * w + ow) * cOut;
            for (let co = 0; co < cOut; co++) db[co] += dOut[outIdx + co];
            for (let dk = 0; dk < kd; dk++) {
              const id = od + dk - pd;
              if (id < 0 || id >= d) continue;
              for (let hk = 0; hk < kh; hk++) {
                const ih = oh + hk - ph;
                if (ih < 0 || ih >= h) continue;
                for (let wk = 0; wk < kw; wk++) {
                  const iw = ow + wk - pw;
                  if (iw < 0 || iw >= w) continue;
                  const inIdx = inB + ((id * h + ih) * w + iw) * cIn;
                  const wIdx = ((dk * kh + hk) * kw + wk) * cIn * cOut;
                  for (let ci = 0; ci < cIn; ci++) {
                    const v = x[inIdx + ci];
                    const wRow = wIdx + ci * cOut;
                    let acc = 0;
                    for (let co = 0; co < cOut; co++) {
                      const g = dOut[outIdx + co];
                      dw[wRow + co] += v * g;
                      acc += wt[wRow + co] * g;
                    }
                    dx[inIdx + ci] += acc;
                  }
                }
              }
            }
          }
        }
      }
    }
    return dx;
  }
}

// ---- batch normalization (channels last, stats over batch x spatial) -----------------

export class BatchNorm {
  gamma: Param;
  beta: Param;
  runningMean: Float64Array;
  runningVar: Float64Array;
  momentum = 0.9;
  eps = 1e-5;

  constructor(name: string, public channels: number) {
    this.gamma = new Param(`${name}.gamma`, [channels], new Float64Array(channels).fill(1));
    this.beta = new Param(`${name}.beta`, [channels]);
    this.runningMean = new Float64Array(channels);
    this.runningVar = new Float64Array(channels).fill(1);
  }

  params(): Param[] {
    return [this.gamma, this.beta];
  }

  forward(x: Float64Array, training: boolean): {
    out: Float64Array;
    xhat: Float64Array;
    invStd: Float64Array;
    n: number;
  } {
    const c = this.channels;
    const n = x.length / c;
    const mean = new Float64Array(c);
    const variance = new Float64Array(c);
    if (training) {
      for (let i = 0; i < x.length; i += c) {
        for (let ch = 0; ch < c; ch++) mean[ch] += x[i + ch];
      }
      for (let ch = 0; ch < c; ch++) mean[ch] /= n;
      for (let i = 0; i < x.length; i += c) {
        for (let ch = 0; ch < c; ch++) {
          const dv = x[i + ch] - mean[ch];
          variance[ch] += dv * dv;
        }
      }
      for (let ch = 0; ch < c; ch++) variance[ch] /= n;
      for (let ch = 0; ch < c; ch++) {
        this.runningMean[ch] = this.momentum * this.runningMean[ch] + (1 - this.momentum) * mean[ch];
        this.runningVar[ch] = this.momentum * this.runningVar[ch] + (1 - this.momentum) * variance[ch];
      }
    } else {
      mean.set(this.runningMean);
      variance.set(this.runningVar);
    }
    const invStd = new Float64Array(c);
    for (let ch = 0; ch < c; ch++) invStd[ch] = 1.0 / Math.sqrt(variance[ch] + this.eps);
    const xhat = new Float64Array(x.length);
    const out = new Float64Array(x.length);
    const g = this.gamma.value;
    const b = this.beta.value;
    for (let i = 0; i < x.length; i += c) {
      for (let ch = 0; ch < c; ch++) {
        const xh = (x[i + ch] - mean[ch]) * invStd[ch];
        xhat[i + ch] = xh;
        out[i + ch] = g[ch] * xh + b[ch];
      }
    }
    return { out, xhat, invStd, n };
  }

  backward(dOut: Float64Array, cache: { xhat: Float64Array; invStd: Float64Array; n: number }): Float64Array {
    const { xhat, invStd, n } = cache;
    const c = this.channels;
    const g = this.gamma.value;
    const sumDy = new Float64Array(c);
    const sumDyXhat = new Float64Array(c);
    for (let i = 0; i < dOut.length; i += c) {
      for (let ch = 0; ch < c; ch++) {
        sumDy[ch] += dOut[i + ch];
        sumDyXhat[ch] += dOut[i + ch] * xhat[i + ch];
      }
    }
    for (let ch = 0; ch < c; ch++) {
      this.gamma.grad[ch] += sumDyXhat[ch];
      this.beta.grad[ch] += sumDy[ch];
    }
    const dx = new Float64Array(dOut.length);
    for (let i = 0; i < dOut.length; i += c) {
      for (let ch = 0; ch < c; ch++) {
        dx[i + ch] =
          (g[ch] * invStd[ch]) *
          (dOut[i + ch] - sumDy[ch] / n - (xhat[i + ch] * sumDyXhat[ch]) / n);
      }
    }
    return dx;
  }
}

// ---- pointwise and normalization helpers -------------------------------------------

export function relu(x: Float64Array): { out: Float64Array; mask: Uint8Array } {
  const out = new Float64Array(x.length);
  const mask = new Uint8Array(x.length);
  for (let i = 0; i < x.length; i++) {
    if (x[i] > 0) {
      out[i] = x[i];
      mask[i] = 1;
    }
  }
  return { out, mask };
}

export function reluBackward(dOut: Float64Array, mask: Uint8Array): Float64Array {
  const dx = new Float64Array(dOut.length);
  for (let i = 0; i < dOut.length; i++) if (mask[i]) dx[i] = dOut[i];
  return dx;
}

/** Per-column layer normalization of an (M x T) matrix with affine params. */
export class LayerNorm {
  gamma: Param;
  beta: Param;
  eps = 1e-6;

  constructor(name: string, public m: number) {
    this.gamma = new Param(`${name}.gamma`, [m], new Float64Array(m).fill(1));
    this.beta = new Param(`${name}.beta`, [m]);
  }

  params(): Param[] {
    return [this.gamma, this.beta];
  }

  forward(x: Float64Array, cols: number): {
    out: Float64Array;
    xhat: Float64Array;
    invStd: Float64Array;
    cols: number;
  } {
    const m = this.m;
    const xhat = new Float64Array(x.length);
    const invStd = new Float64Array(cols);
    const out = new Float64Array(x.length);
    const g = this.gamma.value;
    const b = this.beta.value;
    for (let j = 0; j < cols; j++) {
      let mean = 0;
      for (let i = 0; i < m; i++) mean += x[i * cols + j];
      mean /= m;
      let variance = 0;
      for (let i = 0; i < m; i++) {
        const dv = x[i * cols + j] - mean;
        variance += dv * dv;
      }
      variance /= m;
      const inv = 1.0 / Math.sqrt(variance + this.eps);
      invStd[j] = inv;
      for (let i = 0; i < m; i++) {
        const idx = i * cols + j;
        const xh = (x[idx] - mean) * inv;
        xhat[idx] = xh;
        out[idx] = g[i] * xh + b[i];
      }
    }
    return { out, xhat, invStd, cols };
  }

  backward(dOut: Float64Array, cache: { xhat: Float64Array; invStd: Float64Array; cols: number }): Float64Array {
    const { xhat, invStd, cols } = cache;
    const m = this.m;
    const g = this.gamma.value;
    const dx = new Float64Array(dOut.length);
    for (let j = 0; j < cols; j++) {
      let sumDy = 0;
      let sumDyXhat = 0;
      for (let i = 0; i < m; i++) {
        const idx = i * cols + j;
        const dyg = dOut[idx] * g[i];
        sumDy += dyg;
        sumDyXhat += dyg * xhat[idx];
      }
      for (let i = 0; i < m; i++) {
        const idx = i * cols + j;
        this.gamma.grad[i] += dOut[idx] * xhat[idx];
        this.beta.grad[i] += dOut[idx];
        const dyg = dOut[idx] * g[i];
        dx[idx] = invStd[j] * (dyg - sumDy / m - (xhat[idx] * sumDyXhat) / m);
      }
    }
    return dx;
  }
}

/** Sinusoidal positional encoding as an (M x T) matrix: rows pair (2i, 2i+1)
 * share the frequency 1/10000^(2i/M); values lie in [-1, 1]. */
export function positionalEncoding(m: number, cols: number): Float64Array {
  if (m % 2 !== 0) throw new Error("embedding dimension must be even");
  const pe = new Float64Array(m * cols);
  for (let i = 0; i < m / 2; i++) {
    const freq = 1.0 / Math.pow(10000, (2 * i) / m);
    for (let pos = 0; pos < cols; pos++) {
      pe[(2 * i) * cols + pos] = Math.sin(pos * freq);
      pe[(2 * i + 1) * cols + pos] = Math.cos(pos * freq);
    }
  }
  return pe;
}

// ---- optimizer -----------------------------------------------------------------------

export class Adam {
  private m = new Map<Param, Float64Array>();
  private v = new Map<Param, Float64Array>();
  private t = 0;

  constructor(
    public params: Param[],
    public lr: number,
    public beta1 = 0.9,
    public beta2 = 0.999,
    public eps = 1e-8,
  ) {
    for (const p of params) {
      this.m.set(p, new Float64Array(p.value.length));
      this.v.set(p, new Float64Array(p.value.length));
    }
  }

  step(): void {
    this.t += 1;
    const bc1 = 1 - Math.pow(this.beta1, this.t);
    const bc2 = 1 - Math.pow(this.beta2, this.t);
    for (const p of this.params) {
      const m = this.m.get(p)!;
      const v = this.v.get(p)!;
      for (let i = 0; i < p.value.length; i++) {
        const g = p.grad[i];
        m[i] = this.beta1 * m[i] + (1 - this.beta1) * g;
        v[i] = this.beta2 * v[i] + (1 - this.beta2) * g * g;
        p.value[i] -= (this.lr * (m[i] / bc1)) / (Math.sqrt(v[i] / bc2) + this.eps);
      }
    }
  }

  zeroGrads(): void {
    for (const p of this.params) p.grad.fill(0);
  }
}

export { makeRng, randn };
