import { describe, expect, it } from "vitest";

import {
  BatchNorm,
  Conv3d,
  LayerNorm,
  Linear,
  positionalEncoding,
  relu,
  reluBackward,
} from "../src/nn";
import { makeRng } from "../src/tensor";

function rand(rng: () => number, size: number): Float64Array {
  const out = new Float64Array(size);
  for (let i = 0; i < size; i++) out[i] = 2 * rng() - 1;
  return out;
}

/** Scalar loss = sum(out * probe); checks dL/dx and parameter grads by FD. */
function gradCheck(
  forward: (x: Float64Array) => Float64Array,
  backward: (dOut: Float64Array) => Float64Array,
  x: Float64Array,
  probe: Float64Array,
  params: { value: Float64Array; grad: Float64Array }[],
  tol = 1e-6,
): void {
  const out = forward(x);
  const dOut = probe;
  for (const p of params) p.grad.fill(0);
  const dx = backward(dOut);
  const h = 1e-6;

  const loss = (o: Float64Array) => {
    let acc = 0;
    for (let i = 0; i < o.length; i++) acc += o[i] * probe[i];
    return acc;
  };

  for (let idx = 0; idx < x.length; idx += Math.max(1, Math.floor(x.length / 17))) {
    const xp = x.slice();
    xp[idx] += h;
    const xm = x.slice();
    xm[idx] -= h;
    const fd = (loss(forward(xp)) - loss(forward(xm))) / (2 * h);
    expect(Math.abs(dx[idx] - fd)).toBeLessThan(tol * Math.max(1, Math.abs(fd)));
  }
  for (const p of params) {
    for (let idx = 0; idx < p.value.length; idx += Math.max(1, Math.floor(p.value.length / 11))) {
      const orig = p.value[idx];
      p.value[idx] = orig + h;
      const lp = loss(forward(x));
      p.value[idx] = orig - h;
      const lm = loss(forward(x));
      p.value[idx] = orig;
      const fd = (lp - lm) / (2 * h);
      expect(Math.abs(p.grad[idx] - fd)).toBeLessThan(tol * Math.max(1, Math.abs(fd)));
    }
  }
}

describe("linear layer", () => {
  it("gradients match finite differences", () => {
    const rng = makeRng(5);
    const lin = new Linear("t", 4, 3, true, rng);
    const cols = 5;
    const x = rand(rng, 4 * cols);
    const probe = rand(rng, 3 * cols);
    let cache: any;
    gradCheck(
      (xx) => {
        cache = lin.forward(xx, cols);
        return cache.out;
      },
      (dOut) => lin.backward(dOut, cache),
      x,
      probe,
      lin.params(),
    );
  });
});

describe("conv3d", () => {
  it("keeps the spatial shape with same padding", () => {
    const rng = makeRng(6);
    const conv = new Conv3d("t", [3, 3, 3], 2, 4, rng);
    const s = { b: 2, d: 3, h: 4, w: 5, c: 2 };
    const x = rand(rng, 2 * 3 * 4 * 5 * 2);
    const { out } = conv.forward(x, s);
    expect(out.length).toBe(2 * 3 * 4 * 5 * 4);
  });

  it("rejects even kernels", () => {
    expect(() => new Conv3d("t", [2, 3, 3], 1, 1, makeRng(0))).toThrow(/odd/);
  });

  it("impulse response stays inside the kernel footprint", () => {
    const rng = makeRng(7);
    const conv = new Conv3d("t", [3, 3, 3], 1, 1, rng);
    const s = { b: 1, d: 7, h: 7, w: 7, c: 1 };
    const x = new Float64Array(7 * 7 * 7);
    x[(3 * 7 + 3) * 7 + 3] = 1.0; // single voxel impulse at the center
    const { out } = conv.forward(x, s);
    for (let d = 0; d < 7; d++) {
      for (let h = 0; h < 7; h++) {
        for (let w = 0; w < 7; w++) {
          const v = out[(d * 7 + h) * 7 + w] - conv.bias.value[0];
          if (Math.abs(d - 3) > 1 || Math.abs(h - 3) > 1 || Math.abs(w - 3) > 1) {
            expect(Math.abs(v)).toBeLessThan(1e-14);
          }
        }
      }
    }
  });

  it("gradients match finite differences", () => {
    const rng = makeRng(8);
    const conv = new Conv3d("t", [3, 1, 3], 2, 3, rng);
    const s = { b: 2, d: 3, h: 2, w: 3, c: 2 };
    const x = rand(rng, 2 * 3 * 2 * 3 * 2);
    const probe = rand(rng, 2 * 3 * 2 * 3 * 3);
    let cache: any;
    gradCheck(
      (xx) => {
        cache = conv.forward(xx, s);
        return cache.out;
      },
      (dOut) => conv.backward(dOut, cache),
      x,
      probe,
      conv.params(),
    );
  });
});

describe("batch norm", () => {
  it("normalizes per channel during training", () => {
    const rng = makeRng(9);
    const bn = new BatchNorm("t", 3);
    const x = rand(rng, 3 * 40);
    for (let i = 0; i < x.length; i += 3) x[i] = 5 + 2 * x[i]; // offset channel 0
    const { out } = bn.forward(x, true);
    for (let ch = 0; ch < 3; ch++) {
      let mean = 0;
      for (let i = ch; i < out.length; i += 3) mean += out[i];
      mean /= 40;
      expect(Math.abs(mean)).toBeLessThan(1e-10);
    }
  });

  it("gradients match finite differences", () => {
    const rng = makeRng(10);
    const bn = new BatchNorm("t", 2);
    const x = rand(rng, 2 * 12);
    const probe = rand(rng, 2 * 12);
    let cache: any;
    gradCheck(
      (xx) => {
        cache = bn.forward(xx, true);
        return cache.out;
      },
      (dOut) => bn.backward(dOut, cache),
      x,
      probe,
      bn.params(),
      5e-5,
    );
  });

  it("eval mode uses running statistics", () => {
    const rng = makeRng(11);
    const bn = new BatchNorm("t", 2);
    const x = rand(rng, 2 * 50);
    for (let i = 0; i < 30; i++) bn.forward(x, true);
    const frozen = bn.forward(x, false).out.slice();
    const again = bn.forward(rand(rng, 2 * 50), false);
    const third = bn.forward(x, false).out;
    expect(Array.from(third)).toEqual(Array.from(frozen));
  });
});

describe("layer norm", () => {
  it("pre-affine columns have zero mean and unit variance", () => {
    const rng = makeRng(12);
    const ln = new LayerNorm("t", 8);
    const x = rand(rng, 8 * 5);
    const { xhat } = ln.forward(x, 5);
    for (let j = 0; j < 5; j++) {
      let mean = 0;
      let variance = 0;
      for (let i = 0; i < 8; i++) mean += xhat[i * 5 + j];
      mean /= 8;
      for (let i = 0; i < 8; i++) variance += (xhat[i * 5 + j] - mean) ** 2;
      variance /= 8;
      expect(Math.abs(mean)).toBeLessThanOrEqual(1e-6);
      expect(Math.abs(variance - 1)).toBeLessThanOrEqual(1e-4);
    }
  });

  it("gradients match finite differences", () => {
    const rng = makeRng(13);
    const ln = new LayerNorm("t", 6);
    const x = rand(rng, 6 * 4);
    const probe = rand(rng, 6 * 4);
    let cache: any;
    gradCheck(
      (xx) => {
        cache = ln.forward(xx, 4);
        return cache.out;
      },
      (dOut) => ln.backward(dOut, cache),
      x,
      probe,
      ln.params(),
      5e-5,
    );
  });
});

describe("relu", () => {
  it("masks negatives in forward and backward", () => {
    const x = new Float64Array([-1, 0, 2]);
    const { out, mask } = relu(x);
    expect(Array.from(out)).toEqual([0, 0, 2]);
    const dx = reluBackward(new Float64Array([5, 5, 5]), mask);
    expect(Array.from(dx)).toEqual([0, 0, 5]);
  });
});

describe("positional encoding", () => {
  it("matches the stated sinusoid values", () => {
    const m = 8;
    const pe = positionalEncoding(m, 5);
    for (let i = 0; i < m / 2; i++) {
      expect(pe[2 * i * 5 + 0]).toBeCloseTo(0, 12); // sin(0)
      expect(pe[(2 * i + 1) * 5 + 0]).toBeCloseTo(1, 12); // cos(0)
    }
    expect(pe[0 * 5 + 3]).toBeCloseTo(Math.sin(3), 12); // PE(pos=3, dim 0)
    expect(Math.abs(pe[0 * 5 + 3] - 0.14112)).toBeLessThan(1e-5);
    for (const v of pe) {
      expect(v).toBeGreaterThanOrEqual(-1);
      expect(v).toBeLessThanOrEqual(1);
    }
  });

  it("rejects odd embedding dimensions", () => {
    expect(() => positionalEncoding(7, 3)).toThrow(/even/);
  });
});
