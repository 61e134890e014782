/**
 * Embedding backends for the two views.
 *
 * The default backends are deterministic DSP encoders: log-filterbank
 * statistics pushed through fixed seeded projections. They stand in for
 * heavyweight pretrained encoders (which this pipeline cannot download)
 * behind the same interface, so a model-backed encoder can be swapped
 * in without touching the extraction flow: it only has to map mono
 * 16 kHz samples to a fixed-dimension vector.
 */

import { DEFAULT_FEATURES, logFilterbank } from './features.js';

export interface Encoder {
  readonly id: string;
  readonly dim: number;
  encode(samples: Float64Array): Float64Array;
}

export const SEMANTIC_DIM = 512;
export const PARALINGUISTIC_DIM = 1024;

/** mulberry32: tiny deterministic PRNG, identical across platforms. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussianMatrix(rows: number, cols: number, seed: number): Float64Array {
  const rand = mulberry32(seed);
  const m = new Float64Array(rows * cols);
  for (let i = 0; i < m.length; i += 2) {
    // Box-Muller transform
    const u1 = Math.max(rand(), 1e-12);
    const u2 = rand();
    const r = Math.sqrt(-2 * Math.log(u1));
    m[i] = r * Math.cos(2 * Math.PI * u2);
    if (i + 1 < m.length) m[i + 1] = r * Math.sin(2 * Math.PI * u2);
  }
  const scale = 1 / Math.sqrt(cols);
  for (let i = 0; i < m.length; i++) m[i] *= scale;
  return m;
}

function matVec(m: Float64Array, rows: number, cols: number, v: Float64Array): Float64Array {
  const out = new Float64Array(rows);
  for (let r = 0; r < rows; r++) {
    let acc = 0;
    const base = r * cols;
    for (let c = 0; c < cols; c++) acc += m[base + c] * v[c];
    out[r] = acc;
  }
  return out;
}

function frameStats(frames: Float64Array[]): { mean: Float64Array; std: Float64Array } {
  const dim = frames[0].length;
  const mean = new Float64Array(dim);
  for (const f of frames) for (let i = 0; i < dim; i++) mean[i] += f[i];
  for (let i = 0; i < dim; i++) mean[i] /= frames.length;
  const std = new Float64Array(dim);
  for (const f of frames) {
    for (let i = 0; i < dim; i++) {
      const d = f[i] - mean[i];
      std[i] += d * d;
    }
  }
  for (let i = 0; i < dim; i++) std[i] = Math.sqrt(std[i] / frames.length);
  return { mean, std };
}

/** Semantic view: mean-pooled filterbank features, projected to 512. */
export class FilterbankMeanEncoder implements Encoder {
  readonly id = 'fb-mean-v1';
  readonly dim = SEMANTIC_DIM;
  private readonly projection: Float64Array;
  private readonly cols = DEFAULT_FEATURES.filterCount;

  constructor(seed = 1512) {
    this.projection = gaussianMatrix(this.dim, this.cols, seed);
  }

  encode(samples: Float64Array): Float64Array {
    const frames = logFilterbank(samples);
    const { mean } = frameStats(frames);
    return matVec(this.projection, this.dim, this.cols, mean);
  }
}

/** Paralinguistic view: filterbank mean+std statistics, projected to 1024. */
export class FilterbankStatsEncoder implements Encoder {
  readonly id = 'fb-stats-v1';
  readonly dim = PARALINGUISTIC_DIM;
  private readonly cols = DEFAULT_FEATURES.filterCount * 2;
  private readonly projection: Float64Array;

  constructor(seed = 21024) {
    this.projection = gaussianMatrix(this.dim, this.cols, seed);
  }

  encode(samples: Float64Array): Float64Array {
    const frames = logFilterbank(samples);
    const { mean, std } = frameStats(frames);
    const joint = new Float64Array(this.cols);
    joint.set(mean, 0);
    joint.set(std, mean.length);
    return matVec(this.projection, this.dim, this.cols, joint);
  }
}

const REGISTRY: Record<string, () => Encoder> = {
  'fb-mean-v1': () => new FilterbankMeanEncoder(),
  'fb-stats-v1': () => new FilterbankStatsEncoder(),
};

export function createEncoder(id: string): Encoder {
  const factory = REGISTRY[id];
  if (!factory) {
    throw new Error(`unknown encoder '${id}'; available: ${Object.keys(REGISTRY).join(', ')}`);
  }
  return factory();
}

export function registerEncoder(id: string, factory: () => Encoder): void {
  REGISTRY[id] = factory;
}
