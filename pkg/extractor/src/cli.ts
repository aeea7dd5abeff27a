#!/usr/bin/env node
/**
 * Command line front end.
 *
 *   dgrd-extract extract --model models/vgg16.json --scales 1.4,1.2,1.0,0.8,0.6 \
 *       --out-dir grids [--label 0] [--min-edge 224] [--max-edge 1120] \
 *       [--list images.tsv] [image.png ...]
 *
 * Images come either from positional PNG paths (image id is the file
 * stem, label from --label) or from a tab-separated --list file with
 * lines "image-id<TAB>label<TAB>path". Each image yields one DGRD file
 * per scale in --out-dir, plus manifest.tsv and extract-summary.json.
 * Manifest lines are also echoed to stdout for piping.
 */
import * as fs from 'node:fs';
import * as path from 'node:path';
import { parseArgs } from 'node:util';
import { DEFAULT_MAX_EDGE, DEFAULT_MIN_EDGE, extractBatch } from './extract';
import { buildNetwork, disposeNetwork, loadNetworkSpec } from './network';

interface ListedImage {
  imagePath: string;
  imageId: string;
  label: number;
}

function parseScales(text: string): number[] {
  const scales = text.split(',').map(part => Number(part.trim()));
  if (scales.some(s => !Number.isFinite(s))) {
    throw new Error(`cannot parse scales from ${JSON.stringify(text)}`);
  }
  return scales;
}

function parseListFile(filePath: string): ListedImage[] {
  const entries: ListedImage[] = [];
  const lines = fs.readFileSync(filePath, 'utf8').split('\n');
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (line.length === 0 || line.startsWith('#')) {
      continue;
    }
    const fields = line.split('\t');
    if (fields.length !== 3) {
      throw new Error(`${filePath}:${i + 1}: expected "image-id<TAB>label<TAB>path"`);
    }
    const label = Number(fields[1]);
    if (!Number.isInteger(label)) {
      throw new Error(`${filePath}:${i + 1}: label ${JSON.stringify(fields[1])} is not an integer`);
    }
    const imagePath = path.resolve(path.dirname(filePath), fields[2]);
    entries.push({ imageId: fields[0], label, imagePath });
  }
  return entries;
}

export function run(argv: string[]): number {
  const { values, positionals } = parseArgs({
    args: argv,
    allowPositionals: true,
    options: {
      model: { type: 'string' },
      scales: { type: 'string', default: '1.0' },
      'out-dir': { type: 'string' },
      label: { type: 'string', default: '0' },
      'min-edge': { type: 'string', default: String(DEFAULT_MIN_EDGE) },
      'max-edge': { type: 'string', default: String(DEFAULT_MAX_EDGE) },
      list: { type: 'string' },
    },
  });
  if (positionals[0] !== 'extract') {
    throw new Error(`unknown command ${JSON.stringify(positionals[0] ?? '')}; expected "extract"`);
  }
  if (!values.model) {
    throw new Error('--model is required');
  }
  if (!values['out-dir']) {
    throw new Error('--out-dir is required');
  }
  const label = Number(values.label);
  if (!Number.isInteger(label)) {
    throw new Error(`--label must be an integer, got ${JSON.stringify(values.label)}`);
  }
  const minEdge = Number(values['min-edge']);
  const maxEdge = Number(values['max-edge']);
  const entries: ListedImage[] = values.list ? parseListFile(values.list) : [];
  for (const imagePath of positionals.slice(1)) {
    entries.push({
      imagePath: path.resolve(imagePath),
      imageId: path.basename(imagePath, path.extname(imagePath)),
      label,
    });
  }
  if (entries.length === 0) {
    throw new Error('no images given; pass PNG paths or --list');
  }
  const net = buildNetwork(loadNetworkSpec(values.model));
  try {
    const summary = extractBatch(entries, values['out-dir'], {
      net,
      scales: parseScales(values.scales),
      minEdge,
      maxEdge,
    });
    for (const image of summary.images) {
      for (const result of image.results) {
        process.stdout.write(`${image.imageId}\t${image.label}\t${result.file}\t${result.scale}\n`);
      }
    }
  } finally {
    disposeNetwork(net);
  }
  return 0;
}

const invokedDirectly =
  typeof require !== 'undefined' && typeof module !== 'undefined' && require.main === module;

if (invokedDirectly) {
  try {
    process.exitCode = run(process.argv.slice(2));
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    process.exitCode = 1;
  }
}
