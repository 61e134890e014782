#!/usr/bin/env node
/**
 * cfdet-extract: run the embedding extractors over an audio manifest
 * and emit a corpus directory the detection pipeline can train on.
 *
 *   cfdet-extract --manifest audio.jsonl --out corpus_dir \
 *       [--semantic fb-mean-v1] [--paralinguistic fb-stats-v1]
 */

import { extract } from './extract.js';

function parseArgs(argv: string[]): Record<string, string> {
  const args: Record<string, string> = {};
  for (let i = 0; i < argv.length; i++) {
    const key = argv[i];
    if (!key.startsWith('--')) throw new Error(`unexpected argument '${key}'`);
    const value = argv[i + 1];
    if (value === undefined || value.startsWith('--')) {
      throw new Error(`flag ${key} needs a value`);
    }
    args[key.slice(2)] = value;
    i++;
  }
  return args;
}

function main(): number {
  let args: Record<string, string>;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  const manifest = args.manifest;
  const out = args.out;
  if (!manifest || !out) {
    console.error('usage: cfdet-extract --manifest audio.jsonl --out corpus_dir');
    return 1;
  }
  try {
    const result = extract({
      manifestPath: manifest,
      outDir: out,
      semanticEncoder: args.semantic,
      paralinguisticEncoder: args.paralinguistic,
    });
    console.log(
      `wrote ${result.written} records (dims ${result.dims[0]}x${result.dims[1]}) to ${out}; ` +
        `${result.skipped.length} skipped`,
    );
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
}

process.exit(main());
