/**
 * Minimal RIFF/WAVE reader for PCM16, PCM32, IEEE float32 mono/stereo
 * files, plus linear resampling to the pipeline's 16 kHz target rate.
 */

export interface AudioBuffer {
  /** Mono samples in [-1, 1]. */
  samples: Float64Array;
  sampleRate: number;
}

export const TARGET_SAMPLE_RATE = 16000;

export class WavFormatError extends Error {}

function readTag(view: DataView, offset: number): string {
  return String.fromCharCode(
    view.getUint8(offset),
    view.getUint8(offset + 1),
    view.getUint8(offset + 2),
    view.getUint8(offset + 3),
  );
}

export function decodeWav(data: Uint8Array): AudioBuffer {
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  if (data.length < 44 || readTag(view, 0) !== 'RIFF' || readTag(view, 8) !== 'WAVE') {
    throw new WavFormatError('not a RIFF/WAVE file');
  }
  let offset = 12;
  let format: { audioFormat: number; channels: number; sampleRate: number; bitsPerSample: number } | null = null;
  let payload: { start: number; length: number } | null = null;
  while (offset + 8 <= data.length) {
    const tag = readTag(view, offset);
    const size = view.getUint32(offset + 4, true);
    const body = offset + 8;
    if (tag === 'fmt ') {
      format = {
        audioFormat: view.getUint16(body, true),
        channels: view.getUint16(body + 2, true),
        sampleRate: view.getUint32(body + 4, true),
        bitsPerSample: view.getUint16(body + 14, true),
      };
    } else if (tag === 'data') {
      payload = { start: body, length: Math.min(size, data.length - body) };
    }
    offset = body + size + (size % 2);
  }
  if (!format) throw new WavFormatError('missing fmt chunk');
  if (!payload) throw new WavFormatError('missing data chunk');
  if (format.channels < 1 || format.channels > 2) {
    throw new WavFormatError(`unsupported channel count ${format.channels}`);
  }

  const { audioFormat, channels, bitsPerSample } = format;
  const bytesPerSample = bitsPerSample / 8;
  const frameCount = Math.floor(payload.length / (bytesPerSample * channels));
  if (frameCount === 0) throw new WavFormatError('empty data chunk');
  const mono = new Float64Array(frameCount);

  for (let i = 0; i < frameCount; i++) {
    let acc = 0;
    for (let ch = 0; ch < channels; ch++) {
      const at = payload.start + (i * channels + ch) * bytesPerSample;
      let v: number;
      if (audioFormat === 3 && bitsPerSample === 32) {
        v = view.getFloat32(at, true);
      } else if (audioFormat === 1 && bitsPerSample === 16) {
        v = view.getInt16(at, true) / 32768;
      } else if (audioFormat === 1 && bitsPerSample === 32) {
        v = view.getInt32(at, true) / 2147483648;
      } else {
        throw new WavFormatError(
          `unsupported encoding: format ${audioFormat}, ${bitsPerSample} bits`,
        );
      }
      acc += v;
    }
    mono[i] = acc / channels;
  }
  return { samples: mono, sampleRate: format.sampleRate };
}

/** Linear-interpolation resampler; identity when rates already match. */
export function resample(audio: AudioBuffer, targetRate: number = TARGET_SAMPLE_RATE): AudioBuffer {
  if (audio.sampleRate === targetRate) return audio;
  const ratio = audio.sampleRate / targetRate;
  const outLength = Math.max(1, Math.floor(audio.samples.length / ratio));
  const out = new Float64Array(outLength);
  for (let i = 0; i < outLength; i++) {
    const pos = i * ratio;
    const lo = Math.floor(pos);
    const hi = Math.min(lo + 1, audio.samples.length - 1);
    const frac = pos - lo;
    out[i] = audio.samples[lo] * (1 - frac) + audio.samples[hi] * frac;
  }
  return { samples: out, sampleRate: targetRate };
}

/** PCM16 mono encoder, used by the test fixtures. */
export function encodeWavPcm16(samples: Float64Array | number[], sampleRate: number): Uint8Array {
  const n = samples.length;
  const buf = new ArrayBuffer(44 + n * 2);
  const view = new DataView(buf);
  const writeTag = (offset: number, tag: string) => {
    for (let i = 0; i < 4; i++) view.setUint8(offset + i, tag.charCodeAt(i));
  };
  writeTag(0, 'RIFF');
  view.setUint32(4, 36 + n * 2, true);
  writeTag(8, 'WAVE');
  writeTag(12, 'fmt ');
  view.setUint32(16, 16, true);
  view.setUint16(20, 1, true);
  view.setUint16(22, 1, true);
  view.setUint32(24, sampleRate, true);
  view.setUint32(28, sampleRate * 2, true);
  view.setUint16(32, 2, true);
  view.setUint16(34, 16, true);
  writeTag(36, 'data');
  view.setUint32(40, n * 2, true);
  for (let i = 0; i < n; i++) {
    const clamped = Math.max(-1, Math.min(1, samples[i]));
    view.setInt16(44 + i * 2, Math.round(clamped * 32767), true);
  }
  return new Uint8Array(buf);
}
