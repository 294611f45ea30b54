/**
 * End-to-end training of the sequence predictor against the normalized MSE
 * between predicted and true future covariance stacks (batch-mean of the
 * per-window ratios), plus weight persistence and the prediction path.
 */

import * as fs from "fs";
import * as path from "path";

import { Dataset, WindowPair } from "./data";
import { Adam, ModelConfig, SequencePredictor } from "./model";
import { ComplexWindow, reshapeComplex, reshapeReal, scatterFrameVector, frameVector } from "./reshape";
import { Tensor, makeRng } from "./tensor";
import { complexTensor, readTensorFile, writeTensorFile } from "./tensorio";

export interface EpochStats {
  epoch: number;
  trainNmse: number;
  validNmse: number;
}

export interface TrainResult {
  curve: EpochStats[];
  bestValidNmse: number;
  bestEpoch: number;
}

/** Per-window targets in the transformer's output layout (vecDim x L). */
function targetMatrix(model: SequencePredictor, future: ComplexWindow): Float64Array {
  const l = future.frames;
  const real = reshapeReal(future);
  const out = new Float64Array(model.vecDim * l);
  for (let t = 0; t < l; t++) {
    const v = frameVector(real, t);
    for (let i = 0; i < model.vecDim; i++) out[i * l + t] = v[i];
  }
  return out;
}

function scaleInPlace(arr: Float64Array, s: number): void {
  for (let i = 0; i < arr.length; i++) arr[i] *= s;
}

/** Batched forward + optional backward. Returns the batch-mean NMSE. */
function runBatch(
  model: SequencePredictor,
  batch: WindowPair[],
  training: boolean,
  opt: Adam | null,
): number {
  const shape = model.convShape(batch.length);
  const per = shape.d * shape.h * shape.w * shape.c;
  const packed = new Float64Array(batch.length * per);
  const scale = 1.0 / model.inputScale;
  for (let b = 0; b < batch.length; b++) {
    const real = reshapeReal(batch[b].history);
    scaleInPlace(real.data, scale);
    packed.set(real.data, b * per);
  }
  const cnn = model.cnn.forward(packed, shape, training);

  let loss = 0;
  const dPacked = training ? new Float64Array(packed.length) : null;
  for (let b = 0; b < batch.length; b++) {
    const refined = new Tensor(
      [shape.d, shape.h, shape.w, shape.c],
      cnn.out.slice(b * per, (b + 1) * per),
    );
    const { pred, cache } = model.forwardWindow(refined);
    const target = targetMatrix(model, batch[b].future);
    scaleInPlace(target, scale);
    let num = 0;
    let den = 0;
    for (let i = 0; i < pred.length; i++) {
      const err = pred[i] - target[i];
      num += err * err;
      den += target[i] * target[i];
    }
    if (den === 0) throw new Error("degenerate window: all-zero future covariance");
    loss += num / den;
    if (training && dPacked) {
      const dPred = new Float64Array(pred.length);
      const c = 2.0 / (den * batch.length);
      for (let i = 0; i < pred.length; i++) dPred[i] = c * (pred[i] - target[i]);
      const dRefined = model.backwardWindow(dPred, cache);
      for (let i = 0; i < per; i++) dPacked[b * per + i] = dRefined.data[i];
    }
  }
  loss /= batch.length;
  if (!Number.isFinite(loss)) throw new Error("NaN loss: aborting (check learning rate / data)");
  if (training && dPacked && opt) {
    model.cnn.backward(dPacked, cnn.cache);
    opt.step();
    opt.zeroGrads();
  }
  return loss;
}

export function evaluateNmse(model: SequencePredictor, pairs: WindowPair[], batch = 64): number {
  let total = 0;
  for (let lo = 0; lo < pairs.length; lo += batch) {
    const chunk = pairs.slice(lo, lo + batch);
    total += runBatch(model, chunk, false, null) * chunk.length;
  }
  return total / pairs.length;
}

export function trainModel(
  model: SequencePredictor,
  dataset: Dataset,
  curvePath?: string,
  log: (line: string) => void = () => {},
): TrainResult {
  if (dataset.train.length === 0) throw new Error("empty dataset");
  const cfg = model.cfg;

  // normalize by the dataset spread so the small default Adam rate makes
  // progress; NMSE is invariant to this joint input/target scaling
  let sumSq = 0;
  let count = 0;
  for (const pair of dataset.train.slice(0, Math.min(64, dataset.train.length))) {
    const real = reshapeReal(pair.history);
    for (let i = 0; i < real.data.length; i++) sumSq += real.data[i] * real.data[i];
    count += real.data.length;
  }
  model.inputScale = Math.sqrt(sumSq / count) || 1.0;

  const opt = new Adam(model.params(), cfg.learningRate);
  const rng = makeRng(cfg.seed + 999);
  const valid = dataset.valid.length ? dataset.valid : dataset.train;

  const curve: EpochStats[] = [];
  let bestValid = Infinity;
  let bestEpoch = -1;
  let bestParams: Float64Array[] | null = null;
  const order = dataset.train.map((_, i) => i);

  for (let epoch = 0; epoch < cfg.epochs; epoch++) {
    // Fisher-Yates shuffle from the seeded stream
    for (let i = order.length - 1; i > 0; i--) {
      const j = Math.floor(rng() * (i + 1));
      [order[i], order[j]] = [order[j], order[i]];
    }
    let trainLoss = 0;
    let seen = 0;
    for (let lo = 0; lo < order.length; lo += cfg.batch) {
      const batch = order.slice(lo, lo + cfg.batch).map((i) => dataset.train[i]);
      trainLoss += runBatch(model, batch, true, opt) * batch.length;
      seen += batch.length;
    }
    trainLoss /= seen;
    const validLoss = evaluateNmse(model, valid);
    curve.push({ epoch, trainNmse: trainLoss, validNmse: validLoss });
    log(
      `epoch ${epoch}: train ${trainLoss.toFixed(5)} (${(10 * Math.log10(trainLoss)).toFixed(2)} dB), ` +
        `valid ${validLoss.toFixed(5)} (${(10 * Math.log10(validLoss)).toFixed(2)} dB)`,
    );
    if (validLoss < bestValid) {
      bestValid = validLoss;
      bestEpoch = epoch;
      bestParams = model.params().map((p) => p.value.slice());
    }
  }
  if (bestParams) {
    model.params().forEach((p, i) => p.value.set(bestParams![i]));
  }
  if (curvePath) {
    const lines = ["epoch,train_nmse,valid_nmse"];
    for (const row of curve) lines.push(`${row.epoch},${row.trainNmse},${row.validNmse}`);
    fs.writeFileSync(curvePath, lines.join("\n") + "\n");
  }
  return { curve, bestValidNmse: bestValid, bestEpoch };
}

// ---- prediction --------------------------------------------------------------------

export function predictWindows(model: SequencePredictor, histories: ComplexWindow[]): ComplexWindow[] {
  const cfg = model.cfg;
  const out: ComplexWindow[] = [];
  for (let lo = 0; lo < histories.length; lo += 64) {
    const chunk = histories.slice(lo, lo + 64);
    const shape = model.convShape(chunk.length);
    const per = shape.d * shape.h * shape.w * shape.c;
    const packed = new Float64Array(chunk.length * per);
    const scale = 1.0 / model.inputScale;
    for (let b = 0; b < chunk.length; b++) {
      const real = reshapeReal(chunk[b]);
      scaleInPlace(real.data, scale);
      packed.set(real.data, b * per);
    }
    const cnn = model.cnn.forward(packed, shape, false);
    for (let b = 0; b < chunk.length; b++) {
      const refined = new Tensor(
        [shape.d, shape.h, shape.w, shape.c],
        cnn.out.slice(b * per, (b + 1) * per),
      );
      const { pred } = model.forwardWindow(refined);
      const tensor = new Tensor([2 * cfg.ka, cfg.ka, cfg.subcarriers, cfg.horizon]);
      const tmp = new Float64Array(model.vecDim);
      for (let t = 0; t < cfg.horizon; t++) {
        for (let i = 0; i < model.vecDim; i++) tmp[i] = pred[i * cfg.horizon + t] * model.inputScale;
        scatterFrameVector(tensor, t, tmp);
      }
      out.push(reshapeComplex(tensor, cfg.ka));
    }
  }
  return out;
}

/** Persistence baseline: repeat the last (noisy) history frame across the
 * horizon; returns the aggregate NMSE against the true futures. */
export function persistenceNmse(pairs: WindowPair[]): number {
  let num = 0;
  let den = 0;
  for (const { history, future } of pairs) {
    const perFrame = history.subcarriers * history.ka * history.ka;
    const lastOff = (history.frames - 1) * perFrame;
    for (let t = 0; t < future.frames; t++) {
      for (let i = 0; i < perFrame; i++) {
        const dre = history.re[lastOff + i] - future.re[t * perFrame + i];
        const dim = history.im[lastOff + i] - future.im[t * perFrame + i];
        num += dre * dre + dim * dim;
        den += future.re[t * perFrame + i] ** 2 + future.im[t * perFrame + i] ** 2;
      }
    }
  }
  return num / den;
}

// ---- weight persistence ---------------------------------------------------------------

export function saveModel(model: SequencePredictor, dir: string): void {
  fs.mkdirSync(dir, { recursive: true });
  const entries: Record<string, { shape: number[]; file: string }> = {};
  for (const p of model.params()) {
    const file = p.name.replace(/[^a-zA-Z0-9_.-]/g, "_") + ".ipnt";
    entries[p.name] = { shape: p.shape, file };
    writeTensorFile(path.join(dir, file), {
      header: { dtype: "f32", shape: p.shape, axes: p.shape.map((_, i) => `axis${i}`), frame_ids: [], meta: {} },
      values: Float32Array.from(p.value),
    });
  }
  const bn = model.batchNorms().map((b, i) => ({
    index: i,
    mean: Array.from(b.runningMean),
    variance: Array.from(b.runningVar),
  }));
  const manifest = {
    config: model.cfg,
    inputScale: model.inputScale,
    params: entries,
    batchNorm: bn,
  };
  fs.writeFileSync(path.join(dir, "manifest.json"), JSON.stringify(manifest, null, 2));
}

export function loadModel(dir: string): SequencePredictor {
  const manifest = JSON.parse(fs.readFileSync(path.join(dir, "manifest.json"), "utf-8"));
  const model = new SequencePredictor(manifest.config as ModelConfig);
  model.inputScale = manifest.inputScale;
  for (const p of model.params()) {
    const entry = manifest.params[p.name];
    if (!entry) throw new Error(`weights manifest is missing ${p.name}`);
    const tensor = readTensorFile(path.join(dir, entry.file));
    if (tensor.values.length !== p.value.length) {
      throw new Error(`weight ${p.name} has ${tensor.values.length} values, expected ${p.value.length}`);
    }
    for (let i = 0; i < p.value.length; i++) p.value[i] = tensor.values[i];
  }
  model.batchNorms().forEach((b, i) => {
    const entry = manifest.batchNorm[i];
    b.runningMean.set(entry.mean);
    b.runningVar.set(entry.variance);
  });
  return model;
}

export { complexTensor };
