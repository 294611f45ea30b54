import { describe, expect, it } from "vitest";

import { WindowPair } from "../src/data";
import { defaultConfig, SequencePredictor } from "../src/model";
import { windowFromInterleaved } from "../src/reshape";
import { makeRng, randn } from "../src/tensor";
import { evaluateNmse, persistenceNmse, trainModel } from "../src/train";

/** Synthetic stationary dataset: one fixed Hermitian covariance per window,
 * noisy history, clean future. */
function stationaryDataset(windows: number, seed: number) {
  const ka = 2, x = 2, p = 4, l = 2;
  const rng = makeRng(seed);
  // fixed rank-1 + identity structure
  const a = [1, 0.6, -0.3, 0.8]; // re/im pairs of a length-2 steering vector
  const trueRe = new Float64Array(x * ka * ka);
  const trueIm = new Float64Array(x * ka * ka);
  for (let xx = 0; xx < x; xx++) {
    for (let i = 0; i < ka; i++) {
      for (let j = 0; j < ka; j++) {
        const re = a[2 * i] * a[2 * j] + a[2 * i + 1] * a[2 * j + 1] + (i === j ? 0.5 : 0);
        const im = a[2 * i + 1] * a[2 * j] - a[2 * i] * a[2 * j + 1];
        trueRe[(xx * ka + i) * ka + j] = re;
        trueIm[(xx * ka + i) * ka + j] = im;
      }
    }
  }
  const sigma = 1.0;
  const make = (frames: number, noisy: boolean) => {
    const count = frames * x * ka * ka;
    const values = new Float64Array(2 * count);
    for (let t = 0; t < frames; t++) {
      for (let i = 0; i < x * ka * ka; i++) {
        const idx = t * x * ka * ka + i;
        values[2 * idx] = trueRe[i] + (noisy ? sigma * randn(rng) : 0);
        values[2 * idx + 1] = trueIm[i] + (noisy ? sigma * randn(rng) : 0);
      }
    }
    return windowFromInterleaved(values, frames, x, ka);
  };
  const pairs: WindowPair[] = [];
  for (let w = 0; w < windows; w++) pairs.push({ history: make(p, true), future: make(l, false) });
  return { pairs, ka, x, p, l };
}

function tinyConfig(seed: number, epochs: number, extras: Record<string, unknown> = {}) {
  return defaultConfig({
    ka: 2,
    subcarriers: 2,
    historyFrames: 4,
    horizon: 2,
    embedDim: 16,
    keyDim: 8,
    resblockChannels: [2, 3, 4],
    epochs,
    batch: 8,
    seed,
    ...extras,
  });
}

describe("training properties", () => {
  it("beats the persistence baseline on a stationary dataset", { timeout: 300_000 }, () => {
    const { pairs } = stationaryDataset(48, 1);
    const dataset = {
      train: pairs.slice(0, 32),
      valid: pairs.slice(32, 40),
      test: pairs.slice(40),
      ka: 2, subcarriers: 2, historyFrames: 4, horizon: 2, manifest: {},
    };
    const model = new SequencePredictor(tinyConfig(2, 40));
    const result = trainModel(model, dataset);
    const baseline = persistenceNmse(dataset.valid);
    expect(result.bestValidNmse).toBeLessThan(baseline);
  });

  it("training loss is non-increasing in the 50-epoch moving average over 3 seeds",
    { timeout: 600_000 }, () => {
    for (const seed of [11, 12, 13]) {
      const { pairs } = stationaryDataset(24, seed);
      const dataset = {
        train: pairs.slice(0, 16),
        valid: pairs.slice(16, 20),
        test: pairs.slice(20),
        ka: 2, subcarriers: 2, historyFrames: 4, horizon: 2, manifest: {},
      };
      const model = new SequencePredictor(tinyConfig(seed, 60));
      const { curve } = trainModel(model, dataset);
      const losses = curve.map((c) => c.trainNmse);
      const window = 50;
      const ma: number[] = [];
      for (let i = 0; i + window <= losses.length; i++) {
        ma.push(losses.slice(i, i + window).reduce((a, b) => a + b, 0) / window);
      }
      for (let i = 1; i < ma.length; i++) {
        expect(ma[i]).toBeLessThanOrEqual(ma[i - 1] + 1e-9);
      }
    }
  });

  it("aborts on an empty dataset", () => {
    const model = new SequencePredictor(tinyConfig(3, 1));
    expect(() =>
      trainModel(model, {
        train: [], valid: [], test: [],
        ka: 2, subcarriers: 2, historyFrames: 4, horizon: 2, manifest: {},
      }),
    ).toThrow(/empty dataset/);
  });
});

describe("denoiser receptive field", () => {
  it("keeps an impulse inside the stacked kernel footprint (eval mode)", () => {
    const model = new SequencePredictor(
      defaultConfig({
        ka: 4, subcarriers: 13, historyFrames: 3, horizon: 1, referenceFrames: 2,
        embedDim: 8, keyDim: 4, resblockChannels: [2, 2, 3], seed: 4,
      }),
    );
    // zero biases so only the impulse propagates; eval mode keeps BN affine
    for (const conv of [model.cnn.convIn, ...model.cnn.res, model.cnn.convOut]) {
      conv.bias.value.fill(0);
    }
    const s = { b: 1, d: 8, h: 4, w: 13, c: 3 };
    const x = new Float64Array(s.d * s.h * s.w * s.c);
    const center = ((4 * s.h + 2) * s.w + 6) * s.c + 1;
    x[center] = 1.0;
    const { out } = model.cnn.forward(x, s, false);
    // five stacked kernel-3 convolutions reach at most 5 voxels from the source
    const reach = 5;
    for (let d = 0; d < s.d; d++) {
      for (let h = 0; h < s.h; h++) {
        for (let w = 0; w < s.w; w++) {
          if (Math.abs(d - 4) <= reach && Math.abs(h - 2) <= reach && Math.abs(w - 6) <= reach) continue;
          for (let c = 0; c < s.c; c++) {
            expect(Math.abs(out[((d * s.h + h) * s.w + w) * s.c + c])).toBeLessThan(1e-12);
          }
        }
      }
    }
  });
});
