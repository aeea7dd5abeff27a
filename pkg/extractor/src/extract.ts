/**
 * Per-image extraction: decode, resize per scale, run the network, and
 * emit one DGRD grid file per scale plus manifest lines the downstream
 * encoder consumes directly.
 */
import * as tf from '@tensorflow/tfjs';
import * as fs from 'node:fs';
import * as path from 'node:path';
import { DescriptorGrid, writeGridFile } from './dgrd';
import { loadPng, planResize, resizeToPlan } from './image';
import { ConvNet, forward } from './network';

export interface ExtractionConfig {
  net: ConvNet;
  /** rescale factors, one grid file per entry */
  scales: number[];
  /** smallest edge after rescaling is raised to at least this */
  minEdge: number;
  /** largest edge after rescaling is lowered to at most this */
  maxEdge: number;
}

export const DEFAULT_MIN_EDGE = 224;
export const DEFAULT_MAX_EDGE = 1120;

export interface ScaleResult {
  scale: number;
  /** effective uniform factor after edge clamping */
  factor: number;
  resizedHeight: number;
  resizedWidth: number;
  gridHeight: number;
  gridWidth: number;
  channels: number;
  /** grid file path relative to the output directory */
  file: string;
  /** set when the grid is too small for the two-level pyramid */
  warning?: string;
}

export interface ImageResult {
  imageId: string;
  label: number;
  imagePath: string;
  results: ScaleResult[];
  /** lines (entries and warning comments) for the downstream manifest */
  manifestLines: string[];
}

export function checkConfig(config: ExtractionConfig): void {
  if (config.scales.length === 0) {
    throw new Error('at least one scale is required');
  }
  for (const s of config.scales) {
    if (!(s > 0) || !Number.isFinite(s)) {
      throw new Error(`scales must be positive finite numbers, got ${s}`);
    }
  }
  if (new Set(config.scales).size !== config.scales.length) {
    throw new Error('scales must be distinct');
  }
  if (!(config.minEdge < config.maxEdge)) {
    throw new Error(`minEdge ${config.minEdge} must be smaller than maxEdge ${config.maxEdge}`);
  }
}

/** Make an image id safe to embed in a file name. */
export function sanitizeId(imageId: string): string {
  return imageId.replace(/[^A-Za-z0-9._-]/g, '_');
}

/** Grid file name for one image at one scale, e.g. img__s0.8.dgrd. */
export function gridFileName(imageId: string, scale: number): string {
  return `${sanitizeId(imageId)}__s${scale}.dgrd`;
}

/**
 * Extract grids for a single image at every configured scale.
 *
 * Grids smaller than 2x2 cannot support the quadrant level of the
 * spatial pyramid; they are still written, but flagged with a warning
 * that also lands in the manifest as a levels-1 comment so downstream
 * runs can drop to a one-level encoding for them.
 */
export function extractImage(
  imagePath: string,
  imageId: string,
  label: number,
  outDir: string,
  config: ExtractionConfig,
): ImageResult {
  checkConfig(config);
  const image = loadPng(imagePath);
  const results: ScaleResult[] = [];
  const manifestLines: string[] = [];
  for (const scale of config.scales) {
    const plan = planResize(image.height, image.width, scale, config.minEdge, config.maxEdge);
    const gridTensor = tf.tidy(() => forward(config.net, resizeToPlan(image, plan)));
    const [gh, gw, gd] = gridTensor.shape;
    const values = gridTensor.dataSync() as Float32Array;
    gridTensor.dispose();
    if (gh < 1 || gw < 1) {
      throw new Error(
        `image ${imageId} at scale ${scale}: resized size ${plan.height}x${plan.width} `
        + 'leaves no grid cells after downsampling',
      );
    }
    const grid: DescriptorGrid = { h: gh, w: gw, d: gd, scaleTag: scale, values };
    const file = gridFileName(imageId, scale);
    writeGridFile(path.join(outDir, file), grid);
    const result: ScaleResult = {
      scale,
      factor: plan.factor,
      resizedHeight: plan.height,
      resizedWidth: plan.width,
      gridHeight: gh,
      gridWidth: gw,
      channels: gd,
      file,
    };
    if (gh < 2 || gw < 2) {
      result.warning =
        `grid ${gh}x${gw} is smaller than 2x2; only a one-level pyramid fits`;
      manifestLines.push(`# levels-1: ${imageId} scale ${scale}: ${result.warning}`);
    }
    manifestLines.push(`${imageId}\t${label}\t${file}\t${scale}`);
    results.push(result);
  }
  return { imageId, label, imagePath, results, manifestLines };
}

export interface RunSummary {
  model: string;
  seed: number;
  interpolation: 'bilinear';
  minEdge: number;
  maxEdge: number;
  scales: number[];
  images: ImageResult[];
}

/**
 * Extract a batch of images, writing grids, a manifest.tsv with one
 * line per (image, scale), and an extract-summary.json that records
 * the exact resize factors and grid sizes of the run.
 */
export function extractBatch(
  entries: { imagePath: string; imageId: string; label: number }[],
  outDir: string,
  config: ExtractionConfig,
  warn: (message: string) => void = message => console.error(message),
): RunSummary {
  fs.mkdirSync(outDir, { recursive: true });
  const images: ImageResult[] = [];
  const manifestLines: string[] = [];
  for (const entry of entries) {
    const result = extractImage(entry.imagePath, entry.imageId, entry.label, outDir, config);
    for (const scaleResult of result.results) {
      if (scaleResult.warning) {
        warn(`warning: ${entry.imageId} scale ${scaleResult.scale}: ${scaleResult.warning}`);
      }
    }
    manifestLines.push(...result.manifestLines);
    images.push(result);
  }
  const summary: RunSummary = {
    model: config.net.spec.name,
    seed: config.net.spec.seed,
    interpolation: 'bilinear',
    minEdge: config.minEdge,
    maxEdge: config.maxEdge,
    scales: config.scales,
    images,
  };
  writeTextAtomic(path.join(outDir, 'manifest.tsv'), manifestLines.join('\n') + '\n');
  writeTextAtomic(path.join(outDir, 'extract-summary.json'), JSON.stringify(summary, null, 2) + '\n');
  return summary;
}

function writeTextAtomic(filePath: string, text: string): void {
  const tmp = `${filePath}.tmp-${process.pid}`;
  try {
    fs.writeFileSync(tmp, text);
    fs.renameSync(tmp, filePath);
  } catch (err) {
    fs.rmSync(tmp, { force: true });
    throw err;
  }
}
