/**
 * Writer for the primary component's on-disk corpus layout:
 * ICFE tensor files (magic "ICFE", u32 version=1, u32 dim, u64 count,
 * little-endian float32 payload, row-major) plus the JSONL manifest.
 */

import { writeFileSync } from 'node:fs';

export const ICFE_MAGIC = 'ICFE';
export const ICFE_VERSION = 1;
export const HEADER_BYTES = 20;

export interface ManifestRow {
  id: string;
  label: 'real' | 'fake';
  codec_id: string | null;
  language: string;
  split: 'train' | 'valid' | 'test_seen' | 'test_unseen';
  row_index: number;
}

export function encodeTensorFile(rows: Float64Array[] | Float32Array[], dim: number): Buffer {
  const count = rows.length;
  if (count < 1 || dim < 1) throw new Error(`degenerate tensor shape (${count}, ${dim})`);
  const buf = Buffer.alloc(HEADER_BYTES + count * dim * 4);
  buf.write(ICFE_MAGIC, 0, 'ascii');
  buf.writeUInt32LE(ICFE_VERSION, 4);
  buf.writeUInt32LE(dim, 8);
  buf.writeBigUInt64LE(BigInt(count), 12);
  let offset = HEADER_BYTES;
  for (const row of rows) {
    if (row.length !== dim) throw new Error(`row has ${row.length} values, expected ${dim}`);
    for (let i = 0; i < dim; i++) {
      const v = row[i];
      if (!Number.isFinite(v)) throw new Error('non-finite embedding value');
      buf.writeFloatLE(Math.fround(v), offset);
      offset += 4;
    }
  }
  return buf;
}

export function writeTensorFile(path: string, rows: Float64Array[], dim: number): void {
  writeFileSync(path, encodeTensorFile(rows, dim));
}

export function manifestLine(row: ManifestRow): string {
  // keys sorted to match the primary component's serializer
  return JSON.stringify({
    codec_id: row.codec_id,
    id: row.id,
    label: row.label,
    language: row.language,
    row_index: row.row_index,
    split: row.split,
  });
}

export function writeManifest(path: string, rows: ManifestRow[]): void {
  writeFileSync(path, rows.map((r) => manifestLine(r) + '\n').join(''));
}
