/**
 * Image loading and the resize rule applied before feature extraction.
 *
 * Every image is rescaled uniformly (aspect ratio is never altered):
 * the requested per-scale factor is applied first, then clamped so the
 * smallest edge is at least minEdge and the largest edge is at most
 * maxEdge. When the two clamps conflict (very elongated images) the
 * max-edge bound wins, because it is applied last and oversized inputs
 * are the more expensive failure. Resampling is bilinear.
 */
import * as tf from '@tensorflow/tfjs';
import * as fs from 'node:fs';
import { PNG } from 'pngjs';

export interface RawImage {
  height: number;
  width: number;
  /** height * width * 3 RGB values in [0, 255], row-major */
  pixels: Float32Array;
}

export interface ResizePlan {
  /** effective uniform scale factor after clamping */
  factor: number;
  height: number;
  width: number;
}

/** Decode a PNG file into a float RGB raster (alpha is dropped). */
export function loadPng(filePath: string): RawImage {
  let png: PNG;
  try {
    png = PNG.sync.read(fs.readFileSync(filePath));
  } catch (err) {
    throw new Error(`cannot decode ${filePath}: ${(err as Error).message}`);
  }
  const { height, width, data } = png;
  const pixels = new Float32Array(height * width * 3);
  for (let i = 0; i < height * width; i++) {
    pixels[3 * i] = data[4 * i];
    pixels[3 * i + 1] = data[4 * i + 1];
    pixels[3 * i + 2] = data[4 * i + 2];
  }
  return { height, width, pixels };
}

/**
 * Compute the clamped target size for one requested scale factor.
 *
 * The factor starts at `scale`; if that leaves the smallest edge under
 * minEdge the factor is raised to hit minEdge exactly, and if the
 * largest edge then still exceeds maxEdge the factor is lowered to hit
 * maxEdge exactly. Target dimensions are rounded to the nearest pixel
 * with a floor of 1.
 */
export function planResize(
  height: number,
  width: number,
  scale: number,
  minEdge: number,
  maxEdge: number,
): ResizePlan {
  if (!Number.isInteger(height) || height < 1 || !Number.isInteger(width) || width < 1) {
    throw new Error(`image size ${height}x${width} is not valid`);
  }
  if (!(scale > 0) || !Number.isFinite(scale)) {
    throw new Error(`scale must be a positive finite number, got ${scale}`);
  }
  if (!(minEdge < maxEdge)) {
    throw new Error(`minEdge ${minEdge} must be smaller than maxEdge ${maxEdge}`);
  }
  let factor = scale;
  const small = Math.min(height, width);
  const large = Math.max(height, width);
  if (factor * small < minEdge) {
    factor = minEdge / small;
  }
  if (factor * large > maxEdge) {
    factor = maxEdge / large;
  }
  return {
    factor,
    height: Math.max(1, Math.round(height * factor)),
    width: Math.max(1, Math.round(width * factor)),
  };
}

/**
 * Resize an image to the planned size with bilinear interpolation and
 * return it as a [height, width, 3] float tensor. A plan matching the
 * source size returns the pixels unchanged.
 */
export function resizeToPlan(image: RawImage, plan: ResizePlan): tf.Tensor3D {
  return tf.tidy(() => {
    const source = tf.tensor3d(image.pixels, [image.height, image.width, 3]);
    if (plan.height === image.height && plan.width === image.width) {
      return source;
    }
    return tf.image.resizeBilinear(source, [plan.height, plan.width]);
  });
}
