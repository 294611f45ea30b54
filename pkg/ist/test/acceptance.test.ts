/**
 * Secondary acceptance criteria S1-S5. S3 trains the full desk-scale model
 * (Ka=4, X=8, P=10, L=3, 2000 windows) and takes ~20 minutes; run via
 * `npm run test:acceptance`.
 */

import { execFileSync } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { describe, expect, it } from "vitest";

import { loadDataset, loadWindows } from "../src/data";
import { defaultConfig, SequencePredictor } from "../src/model";
import { evaluateNmse, persistenceNmse, predictWindows, saveModel, trainModel } from "../src/train";
import { makeRng, softmaxColumns } from "../src/tensor";

const WORK = fs.mkdtempSync(path.join(os.tmpdir(), "ist-acceptance-"));
const DATA = path.join(WORK, "data");

const SCENARIO = {
  X: 8,
  Ns: 2,
  Ka: [2, 2],
  Kb: [2, 2],
  KrfA: 2,
  KrfB: 2,
  ricianK: 10.0,
  U: 4,
  Ts: 1e-6,
  velocity: 600.0,
  snrDb: 8.0,
  sirDb: -3.8,
  impulseRate: 2.0,
  frames: 13,
  seed: 424242,
};

function report(name: string, ok: boolean, detail: string): void {
  console.log(`[${ok ? "PASS" : "FAIL"}] ${name}  (${detail})`);
  expect(ok, `${name}: ${detail}`).toBe(true);
}

function exportDataset(): void {
  if (fs.existsSync(path.join(DATA, "dataset.json"))) return;
  const scenarioPath = path.join(WORK, "scenario.json");
  fs.writeFileSync(scenarioPath, JSON.stringify(SCENARIO));
  execFileSync(
    "ipnb",
    [
      "export-dataset",
      "--config", scenarioPath,
      "--windows", "2000",
      "--history", "10",
      "--horizon", "3",
      "--rho", "10",
      "--eval-rhos", "0,5,15",
      "--frame-stride", "64",
      "--out", DATA,
    ],
    { stdio: "inherit" },
  );
}

describe("acceptance", () => {
  it("S1: attention oracle on toy shapes (M=8, N=4, P=3, G=2, L=2)", () => {
    const model = new SequencePredictor(
      defaultConfig({
        ka: 1, subcarriers: 2, historyFrames: 3, horizon: 2, referenceFrames: 2,
        embedDim: 8, keyDim: 4, resblockChannels: [2, 2, 3], seed: 9,
      }),
    );
    const rng = makeRng(50);
    let worst = 0;

    const check = (
      block: typeof model.encoder,
      kv: Float64Array, keyCols: number,
      q: Float64Array, queryCols: number, maskRows: number,
    ) => {
      const got = block.forward(kv, keyCols, q, queryCols, maskRows);
      const m = 8, n = 4;
      const proj = (w: Float64Array, rows: number, x: Float64Array, cols: number) => {
        const out = new Float64Array(rows * cols);
        for (let i = 0; i < rows; i++)
          for (let j = 0; j < cols; j++) {
            let acc = 0;
            for (let p = 0; p < m; p++) acc += w[i * m + p] * x[p * cols + j];
            out[i * cols + j] = acc;
          }
        return out;
      };
      const k = proj(block.wk.w.value, n, kv, keyCols);
      const qq = proj(block.wq.w.value, n, q, queryCols);
      const v = proj(block.wv.w.value, m, kv, keyCols);
      const scores = new Float64Array(keyCols * queryCols);
      for (let i = 0; i < keyCols; i++)
        for (let j = 0; j < queryCols; j++) {
          let acc = 0;
          for (let p = 0; p < n; p++) acc += k[p * keyCols + i] * qq[p * queryCols + j];
          scores[i * queryCols + j] = i >= keyCols - maskRows ? -Infinity : acc / Math.sqrt(n);
        }
      const e = softmaxColumns(scores, keyCols, queryCols);
      for (let i = 0; i < m; i++)
        for (let j = 0; j < queryCols; j++) {
          let acc = 0;
          for (let p = 0; p < keyCols; p++) acc += v[i * keyCols + p] * e[p * queryCols + j];
          worst = Math.max(worst, Math.abs(acc - got.out[i * queryCols + j]));
        }
    };

    const p = 3, g = 2, l = 2;
    const re = new Float64Array(8 * p).map(() => 2 * rng() - 1);
    check(model.encoder, re, p, re, p, 0);
    const rd = new Float64Array(8 * (g + l)).map(() => 2 * rng() - 1);
    check(model.decMasked, rd, g + l, rd, g + l, l);
    const ye = new Float64Array(8 * p).map(() => 2 * rng() - 1);
    const zd1 = new Float64Array(8 * (g + l)).map(() => 2 * rng() - 1);
    check(model.decFull, ye, p, zd1, g + l, 0);
    report("S1 attention oracle", worst < 1e-6, `max |dev| ${worst.toExponential(2)}`);
  });

  it("S2: masked-source attention weights stay below 1e-6 under perturbation", () => {
    const model = new SequencePredictor(
      defaultConfig({
        ka: 1, subcarriers: 2, historyFrames: 3, horizon: 2, referenceFrames: 2,
        embedDim: 8, keyDim: 4, resblockChannels: [2, 2, 3], seed: 10,
      }),
    );
    const rng = makeRng(60);
    const cols = 4, l = 2;
    const rd = new Float64Array(8 * cols).map(() => 2 * rng() - 1);
    const perturbed = rd.slice();
    for (let i = 0; i < 8; i++)
      for (let j = cols - l; j < cols; j++) perturbed[i * cols + j] += 100 * (2 * rng() - 1);
    let worst = 0;
    for (const input of [rd, perturbed]) {
      const { cache } = model.decMasked.forward(input, cols, input, cols, l);
      for (let i = cols - l; i < cols; i++)
        for (let j = 0; j < cols; j++) worst = Math.max(worst, cache.e[i * cols + j]);
    }
    report("S2 causality", worst < 1e-6, `max masked-source weight ${worst.toExponential(2)}`);
  });

  it(
    "S3: trained predictor beats persistence by >= 3 dB with a stable horizon profile",
    { timeout: 3600_000 },
    () => {
      exportDataset();
      const ds = loadDataset(DATA);
      // 12 epochs lands mid-band: far past the 3 dB persistence gate while
      // the error floor is still model-dominated rather than tied to the
      // rho=10 sampling-noise level (which S4's mismatched evaluation probes)
      const cfg = defaultConfig({
        ka: ds.ka,
        subcarriers: ds.subcarriers,
        historyFrames: ds.historyFrames,
        horizon: ds.horizon,
        epochs: 12,
        batch: 32,
        seed: 3,
      });
      const model = new SequencePredictor(cfg);
      const t0 = Date.now();
      trainModel(model, ds, path.join(WORK, "curve.csv"), (l) => console.log("  " + l));
      const minutes = (Date.now() - t0) / 60000;
      saveModel(model, path.join(WORK, "weights"));

      const modelNmse = evaluateNmse(model, ds.test);
      const persistNmse = persistenceNmse(ds.test);
      const gainDb = 10 * Math.log10(persistNmse / modelNmse);

      // per-horizon profile via the prediction path
      const preds = predictWindows(model, ds.test.map((p) => p.history));
      const perFrame = ds.subcarriers * ds.ka * ds.ka;
      const horizonDb: number[] = [];
      for (let t = 0; t < ds.horizon; t++) {
        let num = 0, den = 0;
        preds.forEach((p, w) => {
          const truth = ds.test[w].future;
          for (let i = 0; i < perFrame; i++) {
            num += (p.re[t * perFrame + i] - truth.re[t * perFrame + i]) ** 2;
            num += (p.im[t * perFrame + i] - truth.im[t * perFrame + i]) ** 2;
            den += truth.re[t * perFrame + i] ** 2 + truth.im[t * perFrame + i] ** 2;
          }
        });
        horizonDb.push(10 * Math.log10(num / den));
      }
      const spread = Math.max(...horizonDb) - Math.min(...horizonDb);

      report(
        "S3 predictor vs persistence",
        gainDb >= 3.0 && spread < 2.0 && minutes < 60,
        `gain ${gainDb.toFixed(2)} dB (model ${(10 * Math.log10(modelNmse)).toFixed(2)} dB vs ` +
          `persistence ${(10 * Math.log10(persistNmse)).toFixed(2)} dB), horizon spread ` +
          `${spread.toFixed(2)} dB over ${horizonDb.map((v) => v.toFixed(2)).join("/")}, ` +
          `trained in ${minutes.toFixed(1)} min`,
      );

      // S4 on the same trained model: mismatched sampling-error levels
      const base = evaluateNmse(model, ds.test);
      let worstDeg = -Infinity;
      const parts: string[] = [];
      for (const rho of [0, 5, 15]) {
        const hist = loadWindows(path.join(DATA, `test_history_rho${rho}.ipnt`));
        const pairs = hist.map((h, i) => ({ history: h, future: ds.test[i].future }));
        const score = evaluateNmse(model, pairs);
        const deg = 10 * Math.log10(score / base);
        worstDeg = Math.max(worstDeg, deg);
        parts.push(`rho=${rho}: ${deg >= 0 ? "+" : ""}${deg.toFixed(2)} dB`);
      }
      report("S4 robustness to sampling-error level", worstDeg < 3.0, parts.join(", "));

      // S5 full-loop interchange: CLI prediction consumed by the core scorer
      const predPath = path.join(WORK, "pred.ipnt");
      execFileSync("node", [
        path.join(__dirname, "..", "dist", "cli.js"),
        "predict",
        "--weights", path.join(WORK, "weights"),
        "--history", path.join(DATA, "test_history.ipnt"),
        "--out", predPath,
      ]);
      const scored = JSON.parse(
        execFileSync(
          "ipnb",
          ["import-predictions", "--file", predPath, "--truth", path.join(DATA, "test_future.ipnt")],
          { encoding: "utf-8" },
        ),
      );
      const cliGain = 10 * Math.log10(persistNmse / scored.nmse);
      report(
        "S5 interchange (CLI predictions scored by the core)",
        Math.abs(scored.nmse - modelNmse) / modelNmse < 0.02 && cliGain >= 3.0,
        `core-scored NMSE ${scored.nmse.toFixed(4)} vs in-process ${modelNmse.toFixed(4)}`,
      );
    },
  );
});
