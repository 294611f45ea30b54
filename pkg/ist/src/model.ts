/**
 * The covariance sequence predictor: a 3-D CNN denoiser over the stacked
 * real/imaginary covariance tensor followed by a parallel transformer
 * encoder/decoder that maps P historical frames to L future frames in one
 * pass. All trainable pieces carry hand-written backward passes.
 */

import {
  Adam,
  BatchNorm,
  Conv3d,
  ConvShape,
  LayerNorm,
  Linear,
  Param,
  makeRng,
  positionalEncoding,
  relu,
  reluBackward,
} from "./nn";
import { frameVector, scatterFrameVector } from "./reshape";
import {
  matmul,
  matmulTA,
  matmulTB,
  softmaxColumns,
  softmaxColumnsBackward,
  Tensor,
} from "./tensor";

export interface ModelConfig {
  ka: number;
  subcarriers: number;       // X
  historyFrames: number;     // P
  horizon: number;           // L
  referenceFrames: number;   // G <= P decoder reference columns
  embedDim: number;          // M (even)
  keyDim: number;            // N
  kernel: [number, number, number];
  resblockChannels: [number, number, number];
  learningRate: number;
  epochs: number;
  batch: number;
  embedBias: boolean;
  outputBias: boolean;
  seed: number;
}

export function defaultConfig(partial: Partial<ModelConfig> = {}): ModelConfig {
  const cfg: ModelConfig = {
    ka: 4,
    subcarriers: 8,
    historyFrames: 10,
    horizon: 3,
    referenceFrames: partial.historyFrames ?? 10,
    embedDim: 64,
    keyDim: 32,
    kernel: [3, 3, 3],
    resblockChannels: [8, 16, partial.historyFrames ?? 10],
    learningRate: 1e-4,
    epochs: 30,
    batch: 32,
    embedBias: true,
    outputBias: true,
    seed: 1,
    ...partial,
  };
  validateConfig(cfg);
  return cfg;
}

export function validateConfig(cfg: ModelConfig): void {
  if (cfg.referenceFrames > cfg.historyFrames) throw new Error("G must not exceed P");
  if (cfg.referenceFrames < 1 || cfg.horizon < 1) throw new Error("G and L must be >= 1");
  if (cfg.embedDim % 2 !== 0) throw new Error("embedding dimension must be even");
  if (cfg.kernel.some((k) => k % 2 === 0)) throw new Error("kernel must be odd in each axis");
  if (cfg.resblockChannels.length !== 3) throw new Error("resblockChannels must list three layers");
}

// ---- CNN denoiser --------------------------------------------------------------------

interface CnnCache {
  convIn: { out: Float64Array; x: Float64Array; s: ConvShape };
  reluIn: Uint8Array;
  skip: Float64Array;
  stages: Array<{
    conv: { out: Float64Array; x: Float64Array; s: ConvShape };
    bn: { out: Float64Array; xhat: Float64Array; invStd: Float64Array; n: number };
    mask: Uint8Array;
  }>;
  convOut: { out: Float64Array; x: Float64Array; s: ConvShape };
}

/** Input conv (P filters, ReLU), ResBlock of three BN+ReLU convs with a
 * residual skip, and a P-filter output conv for reconstruction. */
export class CnnDenoiser {
  convIn: Conv3d;
  res: Conv3d[];
  bns: BatchNorm[];
  convOut: Conv3d;

  constructor(cfg: ModelConfig, rng: () => number) {
    const p = cfg.historyFrames;
    const [c1, c2, c3] = cfg.resblockChannels;
    this.convIn = new Conv3d("cnn.in", cfg.kernel, p, p, rng);
    this.res = [
      new Conv3d("cnn.res1", cfg.kernel, p, c1, rng),
      new Conv3d("cnn.res2", cfg.kernel, c1, c2, rng),
      new Conv3d("cnn.res3", cfg.kernel, c2, c3, rng),
    ];
    if (c3 !== p) throw new Error("last ResBlock layer must restore P channels");
    this.bns = [new BatchNorm("cnn.bn1", c1), new BatchNorm("cnn.bn2", c2), new BatchNorm("cnn.bn3", c3)];
    this.convOut = new Conv3d("cnn.out", cfg.kernel, p, p, rng);
  }

  params(): Param[] {
    return [
      ...this.convIn.params(),
      ...this.res.flatMap((c) => c.params()),
      ...this.bns.flatMap((b) => b.params()),
      ...this.convOut.params(),
    ];
  }

  forward(x: Float64Array, s: ConvShape, training: boolean): { out: Float64Array; cache: CnnCache } {
    const convIn = this.convIn.forward(x, s);
    const r0 = relu(convIn.out);
    const skip = r0.out;
    let cur = skip;
    const stages: CnnCache["stages"] = [];
    for (let i = 0; i < 3; i++) {
      const conv = this.res[i].forward(cur, { ...s, c: this.res[i].cIn });
      const bn = this.bns[i].forward(conv.out, training);
      const act = relu(bn.out);
      stages.push({ conv, bn, mask: act.mask });
      cur = act.out;
    }
    const resOut = new Float64Array(cur.length);
    for (let i = 0; i < cur.length; i++) resOut[i] = cur[i] + skip[i];
    const convOut = this.convOut.forward(resOut, s);
    return {
      out: convOut.out,
      cache: { convIn, reluIn: r0.mask, skip, stages, convOut },
    };
  }

  /** Forward of the ResBlock alone (used by shape/zero-weight diagnostics). */
  resBlock(y: Float64Array, s: ConvShape, training: boolean): Float64Array {
    let cur = y;
    for (let i = 0; i < 3; i++) {
      const conv = this.res[i].forward(cur, { ...s, c: this.res[i].cIn });
      const bn = this.bns[i].forward(conv.out, training);
      cur = relu(bn.out).out;
    }
    const out = new Float64Array(cur.length);
    for (let i = 0; i < cur.length; i++) out[i] = cur[i] + y[i];
    return out;
  }

  backward(dOut: Float64Array, cache: CnnCache): Float64Array {
    let grad = this.convOut.backward(dOut, cache.convOut);
    // grad w.r.t. resOut feeds both the skip and the conv chain
    const dSkipFromRes = grad;
    let cur = grad;
    for (let i = 2; i >= 0; i--) {
      const st = cache.stages[i];
      cur = reluBackward(cur, st.mask);
      cur = this.bns[i].backward(cur, st.bn);
      cur = this.res[i].backward(cur, st.conv);
    }
    const dSkip = new Float64Array(cur.length);
    for (let i = 0; i < cur.length; i++) dSkip[i] = cur[i] + dSkipFromRes[i];
    const dConvIn = reluBackward(dSkip, cache.reluIn);
    return this.convIn.backward(dConvIn, cache.convIn);
  }
}

// ---- attention blocks ------------------------------------------------------------------

interface AttentionCache {
  input: Float64Array;           // what K/V projections consumed
  queryInput: Float64Array;      // what the Q projection consumed
  k: Float64Array;
  q: Float64Array;
  v: Float64Array;
  e: Float64Array;               // post-softmax weights (keys x queries)
  keyCols: number;
  queryCols: number;
}

/** O = V softmax(K^T Q / sqrt(N) + mask); mask rows block whole keys. */
class AttentionBlock {
  wk: Linear;
  wq: Linear;
  wv: Linear;

  constructor(name: string, m: number, n: number, rng: () => number) {
    this.wk = new Linear(`${name}.wk`, m, n, false, rng);
    this.wq = new Linear(`${name}.wq`, m, n, false, rng);
    this.wv = new Linear(`${name}.wv`, m, m, false, rng);
  }

  params(): Param[] {
    return [...this.wk.params(), ...this.wq.params(), ...this.wv.params()];
  }

  forward(
    kvInput: Float64Array,
    keyCols: number,
    queryInput: Float64Array,
    queryCols: number,
    maskRows: number,
  ): { out: Float64Array; cache: AttentionCache } {
    const n = this.wk.mOut;
    const m = this.wv.mOut;
    const k = this.wk.forward(kvInput, keyCols).out;     // (N x keyCols)
    const q = this.wq.forward(queryInput, queryCols).out; // (N x queryCols)
    const v = this.wv.forward(kvInput, keyCols).out;     // (M x keyCols)
    const scale = 1.0 / Math.sqrt(n);
    const scores = matmulTA(k, q, n, keyCols, queryCols); // (keyCols x queryCols)
    for (let i = 0; i < scores.length; i++) scores[i] *= scale;
    if (maskRows > 0) {
      for (let i = keyCols - maskRows; i < keyCols; i++) {
        for (let j = 0; j < queryCols; j++) scores[i * queryCols + j] = -Infinity;
      }
    }
    const e = softmaxColumns(scores, keyCols, queryCols);
    const out = matmul(v, e, m, keyCols, queryCols);
    return { out, cache: { input: kvInput, queryInput, k, q, v, e, keyCols, queryCols } };
  }

  backward(dOut: Float64Array, cache: AttentionCache): { dKvInput: Float64Array; dQueryInput: Float64Array } {
    const n = this.wk.mOut;
    const m = this.wv.mOut;
    const { k, q, v, e, keyCols, queryCols } = cache;
    // out = V e  ->  dV = dOut e^T, de = V^T dOut
    const dV = matmulTB(dOut, e, m, queryCols, keyCols);
    const de = matmulTA(v, dOut, m, keyCols, queryCols);
    const dScores = softmaxColumnsBackward(e, de, keyCols, queryCols);
    // masked entries have e == 0, so dScores is already 0 there
    const scale = 1.0 / Math.sqrt(n);
    for (let i = 0; i < dScores.length; i++) dScores[i] *= scale;
    // scores = K^T Q -> dK = Q dScores^T, dQ = K dScores
    const dK = matmulTB(q, dScores, n, queryCols, keyCols);
    const dQ = matmul(k, dScores, n, keyCols, queryCols);
    const dKv1 = this.wk.backward(dK, { x: cache.input, cols: keyCols });
    const dKv2 = this.wv.backward(dV, { x: cache.input, cols: keyCols });
    const dQueryInput = this.wq.backward(dQ, { x: cache.queryInput, cols: queryCols });
    const dKvInput = new Float64Array(dKv1.length);
    for (let i = 0; i < dKv1.length; i++) dKvInput[i] = dKv1[i] + dKv2[i];
    return { dKvInput, dQueryInput };
  }

  /** Post-softmax attention weights for inspection (keys x queries). */
  attentionWeights(
    kvInput: Float64Array,
    keyCols: number,
    queryInput: Float64Array,
    queryCols: number,
    maskRows: number,
  ): Float64Array {
    return this.forward(kvInput, keyCols, queryInput, queryCols, maskRows).cache.e;
  }
}

// ---- full model ------------------------------------------------------------------------

interface WindowCache {
  refined: Tensor;
  embedEnc: { out: Float64Array; x: Float64Array; cols: number };
  encAttn: AttentionCache;
  encLn1: { out: Float64Array; xhat: Float64Array; invStd: Float64Array; cols: number };
  encFc: { out: Float64Array; x: Float64Array; cols: number };
  encLn2: { out: Float64Array; xhat: Float64Array; invStd: Float64Array; cols: number };
  ye: Float64Array;
  embedDecRefs: { out: Float64Array; x: Float64Array; cols: number };
  rd: Float64Array;
  decMasked: AttentionCache;
  decLn1: { out: Float64Array; xhat: Float64Array; invStd: Float64Array; cols: number };
  zd1: Float64Array;
  decFull: AttentionCache;
  decLn2: { out: Float64Array; xhat: Float64Array; invStd: Float64Array; cols: number };
  zd2: Float64Array;
  decFc: { out: Float64Array; x: Float64Array; cols: number };
  decLn3: { out: Float64Array; xhat: Float64Array; invStd: Float64Array; cols: number };
  yd: Float64Array;
  head: { out: Float64Array; x: Float64Array; cols: number };
}

export class SequencePredictor {
  cfg: ModelConfig;
  cnn: CnnDenoiser;
  embed: Linear;
  encoder: AttentionBlock;
  encLn1: LayerNorm;
  encFc: Linear;
  encLn2: LayerNorm;
  decMasked: AttentionBlock;
  decLn1: LayerNorm;
  decFull: AttentionBlock;
  decLn2: LayerNorm;
  decFc: Linear;
  decLn3: LayerNorm;
  head: Linear;
  peEnc: Float64Array;
  peDec: Float64Array;
  vecDim: number;
  inputScale = 1.0;

  constructor(cfg: ModelConfig) {
    validateConfig(cfg);
    this.cfg = cfg;
    const rng = makeRng(cfg.seed);
    const m = cfg.embedDim;
    const n = cfg.keyDim;
    this.vecDim = 2 * cfg.ka * cfg.ka * cfg.subcarriers;
    this.cnn = new CnnDenoiser(cfg, rng);
    this.embed = new Linear("embed", this.vecDim, m, cfg.embedBias, rng);
    this.encoder = new AttentionBlock("enc", m, n, rng);
    this.encLn1 = new LayerNorm("enc.ln1", m);
    this.encFc = new Linear("enc.fc", m, m, true, rng);
    this.encLn2 = new LayerNorm("enc.ln2", m);
    this.decMasked = new AttentionBlock("dec.masked", m, n, rng);
    this.decLn1 = new LayerNorm("dec.ln1", m);
    this.decFull = new AttentionBlock("dec.full", m, n, rng);
    this.decLn2 = new LayerNorm("dec.ln2", m);
    this.decFc = new Linear("dec.fc", m, m, true, rng);
    this.decLn3 = new LayerNorm("dec.ln3", m);
    this.head = new Linear("head", m, this.vecDim, cfg.outputBias, rng);
    this.peEnc = positionalEncoding(m, cfg.historyFrames);
    this.peDec = positionalEncoding(m, cfg.referenceFrames + cfg.horizon);
  }

  params(): Param[] {
    return [
      ...this.cnn.params(),
      ...this.embed.params(),
      ...this.encoder.params(),
      ...this.encLn1.params(),
      ...this.encFc.params(),
      ...this.encLn2.params(),
      ...this.decMasked.params(),
      ...this.decLn1.params(),
      ...this.decFull.params(),
      ...this.decLn2.params(),
      ...this.decFc.params(),
      ...this.decLn3.params(),
      ...this.head.params(),
    ];
  }

  batchNorms(): BatchNorm[] {
    return this.cnn.bns;
  }

  convShape(batch: number): ConvShape {
    const { ka, subcarriers, historyFrames } = this.cfg;
    return { b: batch, d: 2 * ka, h: ka, w: subcarriers, c: historyFrames };
  }

  /** Transformer stage for one already-denoised window. Returns the L
   * prediction vectors (vecDim x L) plus the cache for backward. */
  forwardWindow(refined: Tensor): { pred: Float64Array; cache: WindowCache } {
    const { historyFrames: p, referenceFrames: g, horizon: l, embedDim: m } = this.cfg;

    const encVecs = new Float64Array(this.vecDim * p);
    for (let t = 0; t < p; t++) {
      const v = frameVector(refined, t);
      for (let i = 0; i < this.vecDim; i++) encVecs[i * p + t] = v[i];
    }
    const embedEnc = this.embed.forward(encVecs, p);
    const re = embedEnc.out.slice();
    for (let i = 0; i < re.length; i++) re[i] += this.peEnc[i];

    const enc = this.encoder.forward(re, p, re, p, 0);
    const add1 = new Float64Array(re.length);
    for (let i = 0; i < re.length; i++) add1[i] = re[i] + enc.out[i];
    const encLn1 = this.encLn1.forward(add1, p);
    const encFc = this.encFc.forward(encLn1.out, p);
    const add2 = new Float64Array(re.length);
    for (let i = 0; i < re.length; i++) add2[i] = encLn1.out[i] + encFc.out[i];
    const encLn2 = this.encLn2.forward(add2, p);
    const ye = encLn2.out;

    // decoder input: embedded last G refined frames, then L zero columns,
    // all carrying the decoder positional encoding
    const refVecs = new Float64Array(this.vecDim * g);
    for (let t = 0; t < g; t++) {
      const v = frameVector(refined, p - g + t);
      for (let i = 0; i < this.vecDim; i++) refVecs[i * g + t] = v[i];
    }
    const embedDecRefs = this.embed.forward(refVecs, g);
    const cols = g + l;
    const rd = new Float64Array(m * cols);
    for (let i = 0; i < m; i++) {
      for (let t = 0; t < g; t++) rd[i * cols + t] = embedDecRefs.out[i * g + t];
    }
    for (let i = 0; i < rd.length; i++) rd[i] += this.peDec[i];

    const masked = this.decMasked.forward(rd, cols, rd, cols, l);
    const addD1 = new Float64Array(rd.length);
    for (let i = 0; i < rd.length; i++) addD1[i] = rd[i] + masked.out[i];
    const decLn1 = this.decLn1.forward(addD1, cols);
    const zd1 = decLn1.out;

    const full = this.decFull.forward(ye, p, zd1, cols, 0);
    const addD2 = new Float64Array(zd1.length);
    for (let i = 0; i < zd1.length; i++) addD2[i] = zd1[i] + full.out[i];
    const decLn2 = this.decLn2.forward(addD2, cols);
    const zd2 = decLn2.out;

    const decFc = this.decFc.forward(zd2, cols);
    const addD3 = new Float64Array(zd2.length);
    for (let i = 0; i < zd2.length; i++) addD3[i] = zd2[i] + decFc.out[i];
    const decLn3 = this.decLn3.forward(addD3, cols);
    const yd = decLn3.out;

    // output projection of the last L columns back to covariance vectors
    const tail = new Float64Array(m * l);
    for (let i = 0; i < m; i++) {
      for (let t = 0; t < l; t++) tail[i * l + t] = yd[i * cols + g + t];
    }
    const head = this.head.forward(tail, l);
    return {
      pred: head.out,
      cache: {
        refined,
        embedEnc,
        encAttn: enc.cache,
        encLn1,
        encFc,
        encLn2,
        ye,
        embedDecRefs,
        rd,
        decMasked: masked.cache,
        decLn1,
        zd1,
        decFull: full.cache,
        decLn2,
        zd2,
        decFc,
        decLn3,
        yd,
        head,
      },
    };
  }

  /** Backward of the transformer stage; returns the gradient w.r.t. the
   * refined (denoised) window tensor. */
  backwardWindow(dPred: Float64Array, cache: WindowCache): Tensor {
    const { historyFrames: p, referenceFrames: g, horizon: l, embedDim: m } = this.cfg;
    const cols = g + l;

    const dTail = this.head.backward(dPred, { x: cache.head.x, cols: l });
    const dYd = new Float64Array(m * cols);
    for (let i = 0; i < m; i++) {
      for (let t = 0; t < l; t++) dYd[i * cols + g + t] = dTail[i * l + t];
    }

    const dAddD3 = this.decLn3.backward(dYd, cache.decLn3);
    const dZd2FromFc = this.decFc.backward(dAddD3, { x: cache.decFc.x, cols });
    const dZd2 = new Float64Array(dAddD3.length);
    for (let i = 0; i < dZd2.length; i++) dZd2[i] = dAddD3[i] + dZd2FromFc[i];

    const dAddD2 = this.decLn2.backward(dZd2, cache.decLn2);
    const fullGrads = this.decFull.backward(dAddD2, cache.decFull);
    const dZd1 = new Float64Array(dAddD2.length);
    for (let i = 0; i < dZd1.length; i++) dZd1[i] = dAddD2[i] + fullGrads.dQueryInput[i];
    const dYe = fullGrads.dKvInput;

    const dAddD1 = this.decLn1.backward(dZd1, cache.decLn1);
    const maskedGrads = this.decMasked.backward(dAddD1, cache.decMasked);
    const dRd = new Float64Array(dAddD1.length);
    for (let i = 0; i < dRd.length; i++) {
      dRd[i] = dAddD1[i] + maskedGrads.dKvInput[i] + maskedGrads.dQueryInput[i];
    }

    // decoder reference columns -> embedding -> refined frames P-G..P-1
    const dEmbedDec = new Float64Array(m * g);
    for (let i = 0; i < m; i++) {
      for (let t = 0; t < g; t++) dEmbedDec[i * g + t] = dRd[i * cols + t];
    }
    const dRefVecs = this.embed.backward(dEmbedDec, { x: cache.embedDecRefs.x, cols: g });

    // encoder chain
    const dAdd2 = this.encLn2.backward(dYe, cache.encLn2);
    const dEncLn1FromFc = this.encFc.backward(dAdd2, { x: cache.encFc.x, cols: p });
    const dEncLn1 = new Float64Array(dAdd2.length);
    for (let i = 0; i < dEncLn1.length; i++) dEncLn1[i] = dAdd2[i] + dEncLn1FromFc[i];
    const dAdd1 = this.encLn1.backward(dEncLn1, cache.encLn1);
    const encGrads = this.encoder.backward(dAdd1, cache.encAttn);
    const dRe = new Float64Array(dAdd1.length);
    for (let i = 0; i < dRe.length; i++) {
      dRe[i] = dAdd1[i] + encGrads.dKvInput[i] + encGrads.dQueryInput[i];
    }
    const dEncVecs = this.embed.backward(dRe, { x: cache.embedEnc.x, cols: p });

    // scatter both vector-gradient paths back into the refined tensor layout
    const dRefined = Tensor.zerosLike(cache.refined);
    const tmp = new Float64Array(this.vecDim);
    for (let t = 0; t < p; t++) {
      for (let i = 0; i < this.vecDim; i++) tmp[i] = dEncVecs[i * p + t];
      accumulateFrameVector(dRefined, t, tmp);
    }
    for (let t = 0; t < g; t++) {
      for (let i = 0; i < this.vecDim; i++) tmp[i] = dRefVecs[i * g + t];
      accumulateFrameVector(dRefined, p - g + t, tmp);
    }
    return dRefined;
  }
}

function accumulateFrameVector(tensor: Tensor, frame: number, vec: Float64Array): void {
  const [dd, ka, x, t] = tensor.shape;
  const d = tensor.data;
  let idx = 0;
  for (let i = 0; i < dd; i++) {
    for (let j = 0; j < ka; j++) {
      for (let xx = 0; xx < x; xx++) {
        d[((i * ka + j) * x + xx) * t + frame] += vec[idx++];
      }
    }
  }
}

export { Adam };
