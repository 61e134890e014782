/**
 * Frame-level spectral features: Hann-windowed radix-2 FFT into a bank
 * of log triangular filters. Deterministic, dependency-free.
 */

export interface FeatureConfig {
  frameLength: number;
  hopLength: number;
  filterCount: number;
}

export const DEFAULT_FEATURES: FeatureConfig = {
  frameLength: 512,
  hopLength: 256,
  filterCount: 32,
};

/** In-place iterative radix-2 FFT over interleaved (re, im) arrays. */
export function fft(re: Float64Array, im: Float64Array): void {
  const n = re.length;
  if ((n & (n - 1)) !== 0) throw new Error(`FFT size ${n} is not a power of two`);
  for (let i = 1, j = 0; i < n; i++) {
    let bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      [re[i], re[j]] = [re[j], re[i]];
      [im[i], im[j]] = [im[j], im[i]];
    }
  }
  for (let len = 2; len <= n; len <<= 1) {
    const ang = (-2 * Math.PI) / len;
    const wRe = Math.cos(ang);
    const wIm = Math.sin(ang);
    for (let i = 0; i < n; i += len) {
      let curRe = 1;
      let curIm = 0;
      for (let k = 0; k < len / 2; k++) {
        const uRe = re[i + k];
        const uIm = im[i + k];
        const vRe = re[i + k + len / 2] * curRe - im[i + k + len / 2] * curIm;
        const vIm = re[i + k + len / 2] * curIm + im[i + k + len / 2] * curRe;
        re[i + k] = uRe + vRe;
        im[i + k] = uIm + vIm;
        re[i + k + len / 2] = uRe - vRe;
        im[i + k + len / 2] = uIm - vIm;
        const nextRe = curRe * wRe - curIm * wIm;
        curIm = curRe * wIm + curIm * wRe;
        curRe = nextRe;
      }
    }
  }
}

function hann(length: number): Float64Array {
  const w = new Float64Array(length);
  for (let i = 0; i < length; i++) {
    w[i] = 0.5 - 0.5 * Math.cos((2 * Math.PI * i) / (length - 1));
  }
  return w;
}

function triangularBank(bins: number, filters: number): Float64Array[] {
  // Mel-style warping of the bin axis.
  const warp = (x: number) => Math.log1p(x * 15) / Math.log1p(15);
  const edges: number[] = [];
  for (let k = 0; k <= filters + 1; k++) {
    const frac = k / (filters + 1);
    // invert the warp by bisection over [0, 1]
    let lo = 0;
    let hi = 1;
    for (let it = 0; it < 40; it++) {
      const mid = (lo + hi) / 2;
      if (warp(mid) < frac) lo = mid;
      else hi = mid;
    }
    edges.push(lo * (bins - 1));
  }
  const bank: Float64Array[] = [];
  for (let f = 0; f < filters; f++) {
    const w = new Float64Array(bins);
    const [a, b, c] = [edges[f], edges[f + 1], edges[f + 2]];
    for (let i = 0; i < bins; i++) {
      if (i > a && i <= b) w[i] = (i - a) / Math.max(b - a, 1e-9);
      else if (i > b && i < c) w[i] = (c - i) / Math.max(c - b, 1e-9);
    }
    bank.push(w);
  }
  return bank;
}

/**
 * Compute a (frames x filterCount) matrix of log filterbank energies.
 * Signals shorter than one frame are zero-padded to a single frame.
 */
export function logFilterbank(samples: Float64Array, cfg: FeatureConfig = DEFAULT_FEATURES): Float64Array[] {
  const { frameLength, hopLength, filterCount } = cfg;
  const window = hann(frameLength);
  const bins = frameLength / 2 + 1;
  const bank = triangularBank(bins, filterCount);
  const frameCount = Math.max(1, Math.floor((samples.length - frameLength) / hopLength) + 1);
  const out: Float64Array[] = [];
  for (let f = 0; f < frameCount; f++) {
    const re = new Float64Array(frameLength);
    const im = new Float64Array(frameLength);
    const base = f * hopLength;
    for (let i = 0; i < frameLength; i++) {
      re[i] = (base + i < samples.length ? samples[base + i] : 0) * window[i];
    }
    fft(re, im);
    const power = new Float64Array(bins);
    for (let i = 0; i < bins; i++) {
      power[i] = re[i] * re[i] + im[i] * im[i];
    }
    const feats = new Float64Array(filterCount);
    for (let k = 0; k < filterCount; k++) {
      let acc = 0;
      const w = bank[k];
      for (let i = 0; i < bins; i++) acc += w[i] * power[i];
      feats[k] = Math.log(acc + 1e-10);
    }
    out.push(feats);
  }
  return out;
}
