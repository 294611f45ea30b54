/** Window dataset loading from the exporter's manifest + .ipnt pairs. */

import * as fs from "fs";
import * as path from "path";

import { readTensorFile } from "./tensorio";
import { ComplexWindow, windowFromInterleaved } from "./reshape";

export interface WindowPair {
  history: ComplexWindow; // P frames, noisy
  future: ComplexWindow;  // L frames, ground truth
}

export interface Dataset {
  train: WindowPair[];
  valid: WindowPair[];
  test: WindowPair[];
  ka: number;
  subcarriers: number;
  historyFrames: number;
  horizon: number;
  manifest: Record<string, any>;
}

export function loadWindows(filePath: string): ComplexWindow[] {
  const tensor = readTensorFile(filePath);
  if (tensor.header.dtype !== "c64") throw new Error(`${filePath}: expected complex tensor`);
  const shape = tensor.header.shape;
  if (shape.length !== 5) throw new Error(`${filePath}: expected [W, T, X, Ka, Ka], got ${shape}`);
  const [w, t, x, ka, ka2] = shape;
  if (ka !== ka2) throw new Error(`${filePath}: covariance axes disagree`);
  const per = 2 * t * x * ka * ka;
  const out: ComplexWindow[] = [];
  for (let i = 0; i < w; i++) {
    out.push(windowFromInterleaved(tensor.values.subarray(i * per, (i + 1) * per), t, x, ka));
  }
  return out;
}

function splitPairs(dir: string, split: string): WindowPair[] {
  const hPath = path.join(dir, `${split}_history.ipnt`);
  const fPath = path.join(dir, `${split}_future.ipnt`);
  if (!fs.existsSync(hPath) || !fs.existsSync(fPath)) return [];
  const history = loadWindows(hPath);
  const future = loadWindows(fPath);
  if (history.length !== future.length) {
    throw new Error(`${split}: history/future window counts disagree`);
  }
  return history.map((h, i) => ({ history: h, future: future[i] }));
}

export function loadDataset(dir: string): Dataset {
  const manifestPath = path.join(dir, "dataset.json");
  if (!fs.existsSync(manifestPath)) throw new Error(`no dataset.json under ${dir}`);
  const manifest = JSON.parse(fs.readFileSync(manifestPath, "utf-8"));
  const train = splitPairs(dir, "train");
  const valid = splitPairs(dir, "valid");
  const test = splitPairs(dir, "test");
  if (train.length === 0) throw new Error("empty dataset: no training windows");
  const first = train[0];
  return {
    train,
    valid,
    test,
    ka: first.history.ka,
    subcarriers: first.history.subcarriers,
    historyFrames: first.history.frames,
    horizon: first.future.frames,
    manifest,
  };
}
