#!/usr/bin/env node
/**
 * ist — covariance sequence predictor trainer.
 *
 *   ist train --data <dir> --config <json> --out <weights-dir>
 *   ist predict --weights <dir> --history <file.ipnt> --out <file.ipnt>
 *
 * Exit codes: 0 success, 2 usage/config error, 3 data/format error,
 * 4 training error.
 */

import * as fs from "fs";
import * as path from "path";

import { loadDataset, loadWindows } from "./data";
import { defaultConfig, SequencePredictor } from "./model";
import { loadModel, predictWindows, saveModel, trainModel } from "./train";
import { complexTensor, writeTensorFile, TensorFormatError } from "./tensorio";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || i + 1 >= argv.length) {
      throw new UsageError(`malformed flag near '${argv[i]}'`);
    }
    flags.set(argv[i].slice(2), argv[i + 1]);
  }
  return flags;
}

class UsageError extends Error {}

function cmdTrain(flags: Map<string, string>): number {
  const dataDir = flags.get("data");
  const outDir = flags.get("out");
  if (!dataDir || !outDir) throw new UsageError("train requires --data and --out");
  const dataset = loadDataset(dataDir);
  const overrides = flags.has("config")
    ? JSON.parse(fs.readFileSync(flags.get("config")!, "utf-8"))
    : {};
  const cfg = defaultConfig({
    ka: dataset.ka,
    subcarriers: dataset.subcarriers,
    historyFrames: dataset.historyFrames,
    horizon: dataset.horizon,
    ...overrides,
  });
  if (cfg.historyFrames !== dataset.historyFrames || cfg.horizon !== dataset.horizon) {
    throw new UsageError("config P/L disagree with the dataset windows");
  }
  const model = new SequencePredictor(cfg);
  fs.mkdirSync(outDir, { recursive: true });
  const curvePath = path.join(outDir, "training_curve.csv");
  const result = trainModel(model, dataset, curvePath, (line) => console.log(line));
  saveModel(model, outDir);
  console.log(
    JSON.stringify(
      {
        weights: outDir,
        curve: curvePath,
        bestValidNmse: result.bestValidNmse,
        bestValidNmseDb: 10 * Math.log10(result.bestValidNmse),
        bestEpoch: result.bestEpoch,
      },
      null,
      2,
    ),
  );
  return 0;
}

function cmdPredict(flags: Map<string, string>): number {
  const weights = flags.get("weights");
  const historyPath = flags.get("history");
  const outPath = flags.get("out");
  if (!weights || !historyPath || !outPath) {
    throw new UsageError("predict requires --weights, --history and --out");
  }
  const model = loadModel(weights);
  const histories = loadWindows(historyPath);
  const preds = predictWindows(model, histories);
  const cfg = model.cfg;
  const w = preds.length;
  const per = cfg.horizon * cfg.subcarriers * cfg.ka * cfg.ka;
  const re = new Float64Array(w * per);
  const im = new Float64Array(w * per);
  preds.forEach((p, i) => {
    re.set(p.re, i * per);
    im.set(p.im, i * per);
  });
  writeTensorFile(
    outPath,
    complexTensor([w, cfg.horizon, cfg.subcarriers, cfg.ka, cfg.ka], re, im, {
      axes: ["window", "frame", "subcarrier", "rx", "rx"],
      meta: { horizon: cfg.horizon, source: "ist predict" },
    }),
  );
  console.log(`wrote ${w} predicted windows to ${outPath}`);
  return 0;
}

export function main(argv: string[]): number {
  try {
    const [command, ...rest] = argv;
    if (command === "train") return cmdTrain(parseFlags(rest));
    if (command === "predict") return cmdPredict(parseFlags(rest));
    throw new UsageError("usage: ist {train|predict} --flags ...");
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`usage error: ${err.message}`);
      return 2;
    }
    if (err instanceof TensorFormatError) {
      console.error(`format error: ${err.message}`);
      return 3;
    }
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 4;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
