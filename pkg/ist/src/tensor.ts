/** Dense row-major tensors over Float64Array plus the few helpers the model needs. */

export class Tensor {
  data: Float64Array;
  shape: number[];

  constructor(shape: number[], data?: Float64Array) {
    this.shape = shape.slice();
    const size = shape.reduce((a, b) => a * b, 1);
    if (data !== undefined) {
      if (data.length !== size) throw new Error(`data length ${data.length} != shape size ${size}`);
      this.data = data;
    } else {
      this.data = new Float64Array(size);
    }
  }

  get size(): number {
    return this.data.length;
  }

  clone(): Tensor {
    return new Tensor(this.shape, this.data.slice());
  }

  fill(v: number): Tensor {
    this.data.fill(v);
    return this;
  }

  static zerosLike(t: Tensor): Tensor {
    return new Tensor(t.shape);
  }
}

/** Deterministic 32-bit PRNG (mulberry32). */
export function makeRng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randn(rng: () => number): number {
  // Box-Muller; rejects the origin to stay finite.
  let u = 0;
  while (u === 0) u = rng();
  const v = rng();
  return Math.sqrt(-2.0 * Math.log(u)) * Math.cos(2.0 * Math.PI * v);
}

/** C = A (m x k) @ B (k x n), row-major. */
export function matmul(a: Float64Array, b: Float64Array, m: number, k: number, n: number): Float64Array {
  const out = new Float64Array(m * n);
  for (let i = 0; i < m; i++) {
    const arow = i * k;
    const orow = i * n;
    for (let p = 0; p < k; p++) {
      const av = a[arow + p];
      if (av === 0) continue;
      const brow = p * n;
      for (let j = 0; j < n; j++) {
        out[orow + j] += av * b[brow + j];
      }
    }
  }
  return out;
}

/** C = A^T (k x m -> m x k transposed on the fly) @ B (k x n). */
export function matmulTA(a: Float64Array, b: Float64Array, k: number, m: number, n: number): Float64Array {
  const out = new Float64Array(m * n);
  for (let p = 0; p < k; p++) {
    const arow = p * m;
    const brow = p * n;
    for (let i = 0; i < m; i++) {
      const av = a[arow + i];
      if (av === 0) continue;
      const orow = i * n;
      for (let j = 0; j < n; j++) {
        out[orow + j] += av * b[brow + j];
      }
    }
  }
  return out;
}

/** C = A (m x k) @ B^T (n x k transposed on the fly). */
export function matmulTB(a: Float64Array, b: Float64Array, m: number, k: number, n: number): Float64Array {
  const out = new Float64Array(m * n);
  for (let i = 0; i < m; i++) {
    const arow = i * k;
    const orow = i * n;
    for (let j = 0; j < n; j++) {
      const brow = j * k;
      let acc = 0;
      for (let p = 0; p < k; p++) acc += a[arow + p] * b[brow + p];
      out[orow + j] = acc;
    }
  }
  return out;
}

/** Column-wise softmax of an (rows x cols) matrix, in place on a copy. */
export function softmaxColumns(s: Float64Array, rows: number, cols: number): Float64Array {
  const out = new Float64Array(rows * cols);
  for (let j = 0; j < cols; j++) {
    let max = -Infinity;
    for (let i = 0; i < rows; i++) {
      const v = s[i * cols + j];
      if (v > max) max = v;
    }
    let sum = 0;
    for (let i = 0; i < rows; i++) {
      const e = Math.exp(s[i * cols + j] - max);
      out[i * cols + j] = e;
      sum += e;
    }
    for (let i = 0; i < rows; i++) out[i * cols + j] /= sum;
  }
  return out;
}

/** Backward of column-wise softmax: given E = softmax(S) and dE, return dS. */
export function softmaxColumnsBackward(
  e: Float64Array,
  de: Float64Array,
  rows: number,
  cols: number,
): Float64Array {
  const ds = new Float64Array(rows * cols);
  for (let j = 0; j < cols; j++) {
    let dot = 0;
    for (let i = 0; i < rows; i++) dot += e[i * cols + j] * de[i * cols + j];
    for (let i = 0; i < rows; i++) {
      const idx = i * cols + j;
      ds[idx] = e[idx] * (de[idx] - dot);
    }
  }
  return ds;
}
