import { describe, expect, it } from "vitest";

import {
  makeRng,
  matmul,
  matmulTA,
  matmulTB,
  softmaxColumns,
  softmaxColumnsBackward,
} from "../src/tensor";

function naiveMatmul(a: Float64Array, b: Float64Array, m: number, k: number, n: number): Float64Array {
  const out = new Float64Array(m * n);
  for (let i = 0; i < m; i++) {
    for (let j = 0; j < n; j++) {
      let acc = 0;
      for (let p = 0; p < k; p++) acc += a[i * k + p] * b[p * n + j];
      out[i * n + j] = acc;
    }
  }
  return out;
}

function rand(rng: () => number, size: number): Float64Array {
  const out = new Float64Array(size);
  for (let i = 0; i < size; i++) out[i] = 2 * rng() - 1;
  return out;
}

describe("matmul variants", () => {
  const rng = makeRng(1);
  const m = 4, k = 5, n = 3;
  const a = rand(rng, m * k);
  const b = rand(rng, k * n);

  it("matmul matches the naive triple loop", () => {
    const got = matmul(a, b, m, k, n);
    const want = naiveMatmul(a, b, m, k, n);
    got.forEach((v, i) => expect(v).toBeCloseTo(want[i], 12));
  });

  it("matmulTA computes A^T B", () => {
    const at = new Float64Array(k * m);
    for (let i = 0; i < m; i++) for (let p = 0; p < k; p++) at[p * m + i] = a[i * k + p];
    const got = matmulTA(at, b, k, m, n);
    const want = naiveMatmul(a, b, m, k, n);
    got.forEach((v, i) => expect(v).toBeCloseTo(want[i], 12));
  });

  it("matmulTB computes A B^T", () => {
    const bt = new Float64Array(n * k);
    for (let p = 0; p < k; p++) for (let j = 0; j < n; j++) bt[j * k + p] = b[p * n + j];
    const got = matmulTB(a, bt, m, k, n);
    const want = naiveMatmul(a, b, m, k, n);
    got.forEach((v, i) => expect(v).toBeCloseTo(want[i], 12));
  });
});

describe("column softmax", () => {
  it("columns sum to one", () => {
    const rng = makeRng(2);
    const rows = 6, cols = 4;
    const s = rand(rng, rows * cols);
    const e = softmaxColumns(s, rows, cols);
    for (let j = 0; j < cols; j++) {
      let sum = 0;
      for (let i = 0; i < rows; i++) sum += e[i * cols + j];
      expect(sum).toBeCloseTo(1.0, 10);
    }
  });

  it("handles -Infinity masks exactly", () => {
    const s = new Float64Array([0.5, 1.0, -Infinity, -Infinity]);
    const e = softmaxColumns(s, 2, 2);
    expect(e[2]).toBe(0);
    expect(e[3]).toBe(0);
    expect(e[0]).toBeCloseTo(1);
    expect(e[1]).toBeCloseTo(1);
  });

  it("backward matches finite differences", () => {
    const rng = makeRng(3);
    const rows = 5, cols = 3;
    const s = rand(rng, rows * cols);
    const dE = rand(rng, rows * cols);
    const e = softmaxColumns(s, rows, cols);
    const dS = softmaxColumnsBackward(e, dE, rows, cols);
    const h = 1e-6;
    for (let idx = 0; idx < s.length; idx++) {
      const plus = s.slice();
      plus[idx] += h;
      const minus = s.slice();
      minus[idx] -= h;
      const ep = softmaxColumns(plus, rows, cols);
      const em = softmaxColumns(minus, rows, cols);
      let fd = 0;
      for (let i = 0; i < s.length; i++) fd += ((ep[i] - em[i]) / (2 * h)) * dE[i];
      expect(dS[idx]).toBeCloseTo(fd, 6);
    }
  });
});
