import { describe, expect, it } from 'vitest';

import { encodeTensorFile, HEADER_BYTES, manifestLine } from '../src/icfe.js';

describe('encodeTensorFile', () => {
  it('writes the exact header layout', () => {
    const buf = encodeTensorFile([new Float64Array([1, 2])], 2);
    expect(buf.length).toBe(HEADER_BYTES + 8);
    expect(buf.subarray(0, 4).toString('ascii')).toBe('ICFE');
    expect(buf.readUInt32LE(4)).toBe(1); // version
    expect(buf.readUInt32LE(8)).toBe(2); // dim
    expect(buf.readBigUInt64LE(12)).toBe(1n); // count
    expect(buf.readFloatLE(20)).toBe(1);
    expect(buf.readFloatLE(24)).toBe(2);
  });

  it('stores float32-rounded values row-major', () => {
    const rows = [new Float64Array([0.1, 0.2, 0.3]), new Float64Array([4, 5, 6])];
    const buf = encodeTensorFile(rows, 3);
    expect(buf.readFloatLE(HEADER_BYTES + 0)).toBe(Math.fround(0.1));
    expect(buf.readFloatLE(HEADER_BYTES + 12)).toBe(4);
    expect(buf.readFloatLE(HEADER_BYTES + 20)).toBe(6);
  });

  it('rejects ragged rows and non-finite values', () => {
    expect(() => encodeTensorFile([new Float64Array([1])], 2)).toThrow(/expected 2/);
    expect(() => encodeTensorFile([new Float64Array([NaN])], 1)).toThrow(/non-finite/);
    expect(() => encodeTensorFile([], 3)).toThrow(/degenerate/);
  });
});

describe('manifestLine', () => {
  it('serializes with sorted keys and null codec for reals', () => {
    const line = manifestLine({
      id: 'a-0',
      label: 'real',
      codec_id: null,
      language: 'hi',
      split: 'train',
      row_index: 0,
    });
    expect(line).toBe(
      '{"codec_id":null,"id":"a-0","label":"real","language":"hi","row_index":0,"split":"train"}',
    );
  });
});
