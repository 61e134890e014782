/**
 * Extraction pipeline: audio manifest in, cfdet corpus directory out.
 *
 * Each manifest row names an audio file plus its metadata. Audio is
 * decoded, resampled to 16 kHz, run through both view encoders, and
 * the resulting embeddings are written as aligned ICFE tensors with a
 * JSONL manifest matching the primary component's corpus layout.
 * Unreadable files are skipped with a logged reason; an extraction with
 * zero successes fails.
 */

import { mkdirSync, readFileSync } from 'node:fs';
import { join, resolve, dirname } from 'node:path';

import { createEncoder, Encoder, PARALINGUISTIC_DIM, SEMANTIC_DIM } from './encoders.js';
import { ManifestRow, writeManifest, writeTensorFile } from './icfe.js';
import { decodeWav, resample, TARGET_SAMPLE_RATE } from './wav.js';

export interface AudioManifestEntry {
  id: string;
  path: string;
  label: 'real' | 'fake';
  codec_id: string | null;
  language: string;
  split: 'train' | 'valid' | 'test_seen' | 'test_unseen';
}

export interface ExtractJob {
  manifestPath: string;
  outDir: string;
  semanticEncoder?: string;
  paralinguisticEncoder?: string;
  log?: (message: string) => void;
}

export interface ExtractResult {
  written: number;
  skipped: { id: string; reason: string }[];
  dims: [number, number];
}

const LABELS = new Set(['real', 'fake']);
const SPLITS = new Set(['train', 'valid', 'test_seen', 'test_unseen']);

export function readAudioManifest(path: string): AudioManifestEntry[] {
  const text = readFileSync(path, 'utf-8');
  const entries: AudioManifestEntry[] = [];
  const seen = new Set<string>();
  text.split('\n').forEach((line, idx) => {
    const trimmed = line.trim();
    if (!trimmed) return;
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(trimmed);
    } catch (err) {
      throw new Error(`manifest line ${idx + 1}: invalid JSON (${(err as Error).message})`);
    }
    for (const field of ['id', 'path', 'label', 'language', 'split']) {
      if (typeof obj[field] !== 'string' || obj[field] === '') {
        throw new Error(`manifest line ${idx + 1}: missing or empty field '${field}'`);
      }
    }
    const entry: AudioManifestEntry = {
      id: obj.id as string,
      path: obj.path as string,
      label: obj.label as AudioManifestEntry['label'],
      codec_id: (obj.codec_id ?? null) as string | null,
      language: obj.language as string,
      split: obj.split as AudioManifestEntry['split'],
    };
    if (!LABELS.has(entry.label)) {
      throw new Error(`manifest line ${idx + 1}: unknown label '${entry.label}'`);
    }
    if (!SPLITS.has(entry.split)) {
      throw new Error(`manifest line ${idx + 1}: unknown split '${entry.split}'`);
    }
    if (entry.label === 'fake' && !entry.codec_id) {
      throw new Error(`manifest line ${idx + 1}: fake record needs codec_id`);
    }
    if (entry.label === 'real' && entry.codec_id) {
      throw new Error(`manifest line ${idx + 1}: real record must not carry codec_id`);
    }
    if (seen.has(entry.id)) {
      throw new Error(`manifest line ${idx + 1}: duplicate id '${entry.id}'`);
    }
    seen.add(entry.id);
    entries.push(entry);
  });
  if (entries.length === 0) throw new Error('audio manifest is empty');
  return entries;
}

export function extract(job: ExtractJob): ExtractResult {
  const log = job.log ?? ((m: string) => console.error(m));
  const semantic: Encoder = createEncoder(job.semanticEncoder ?? 'fb-mean-v1');
  const paralinguistic: Encoder = createEncoder(job.paralinguisticEncoder ?? 'fb-stats-v1');
  if (semantic.dim !== SEMANTIC_DIM || paralinguistic.dim !== PARALINGUISTIC_DIM) {
    log(
      `note: encoder dims (${semantic.dim}, ${paralinguistic.dim}) differ from the ` +
        `reference (${SEMANTIC_DIM}, ${PARALINGUISTIC_DIM})`,
    );
  }

  const entries = readAudioManifest(job.manifestPath);
  const manifestDir = dirname(resolve(job.manifestPath));
  const semRows: Float64Array[] = [];
  const parRows: Float64Array[] = [];
  const outRows: ManifestRow[] = [];
  const skipped: { id: string; reason: string }[] = [];

  for (const entry of entries) {
    const audioPath = resolve(manifestDir, entry.path);
    try {
      const raw = readFileSync(audioPath);
      const audio = resample(decodeWav(raw), TARGET_SAMPLE_RATE);
      semRows.push(semantic.encode(audio.samples));
      parRows.push(paralinguistic.encode(audio.samples));
      outRows.push({
        id: entry.id,
        label: entry.label,
        codec_id: entry.codec_id,
        language: entry.language,
        split: entry.split,
        row_index: outRows.length,
      });
    } catch (err) {
      const reason = (err as Error).message;
      skipped.push({ id: entry.id, reason });
      log(`skip ${entry.id}: ${reason}`);
    }
  }
  if (semRows.length === 0) {
    throw new Error(`no records extracted (${skipped.length} skipped)`);
  }

  mkdirSync(job.outDir, { recursive: true });
  writeTensorFile(join(job.outDir, 'semantic.icfe'), semRows, semantic.dim);
  writeTensorFile(join(job.outDir, 'paralinguistic.icfe'), parRows, paralinguistic.dim);
  writeManifest(join(job.outDir, 'manifest.jsonl'), outRows);
  return { written: semRows.length, skipped, dims: [semantic.dim, paralinguistic.dim] };
}
