/**
 * A VGG-16-style fully convolutional feature network.
 *
 * The architecture is read from a JSON spec: a list of blocks, each a
 * list of 3x3 same-padded conv widths followed by one 2x2 stride-2 max
 * pool, with ReLU after every conv. Five blocks give the familiar
 * downsampling factor of 32, so a 224x224 input leaves the final pool
 * as a 7x7 grid whose depth is the last conv width.
 *
 * Weights are synthesized deterministically from the seed in the spec
 * (He-scaled Gaussians, zero biases). The network is used as a fixed
 * feature extractor; nothing here trains or fine-tunes it, and the
 * same spec file always yields bit-identical kernels.
 */
import * as tf from '@tensorflow/tfjs';
import * as fs from 'node:fs';

export interface ConvNetSpec {
  name: string;
  /** conv output widths per block; each block ends with a 2x2 max pool */
  blocks: number[][];
  /** square kernel edge, normally 3 */
  kernelSize: number;
  /** PRNG seed for the synthesized weights */
  seed: number;
  /** per-channel RGB mean subtracted from input pixels */
  channelMean: [number, number, number];
}

export interface ConvNet {
  spec: ConvNetSpec;
  /** one [k, k, cin, cout] kernel per conv layer, in forward order */
  kernels: tf.Tensor4D[];
  /** spatial shrink factor from input to output, 2 per block */
  downsample: number;
  /** descriptor dimension of the emitted grid */
  outChannels: number;
}

/** Parse and validate a ConvNetSpec from a JSON file. */
export function loadNetworkSpec(filePath: string): ConvNetSpec {
  const raw = JSON.parse(fs.readFileSync(filePath, 'utf8'));
  const spec = raw as ConvNetSpec;
  if (typeof spec.name !== 'string' || spec.name.length === 0) {
    throw new Error(`${filePath}: spec needs a non-empty name`);
  }
  if (!Array.isArray(spec.blocks) || spec.blocks.length === 0) {
    throw new Error(`${filePath}: spec needs a non-empty blocks list`);
  }
  for (const block of spec.blocks) {
    if (!Array.isArray(block) || block.length === 0) {
      throw new Error(`${filePath}: every block needs at least one conv width`);
    }
    for (const width of block) {
      if (!Number.isInteger(width) || width < 1) {
        throw new Error(`${filePath}: conv width ${width} is not a positive integer`);
      }
    }
  }
  if (!Number.isInteger(spec.kernelSize) || spec.kernelSize < 1 || spec.kernelSize % 2 === 0) {
    throw new Error(`${filePath}: kernelSize must be a positive odd integer`);
  }
  if (!Number.isInteger(spec.seed)) {
    throw new Error(`${filePath}: seed must be an integer`);
  }
  if (!Array.isArray(spec.channelMean) || spec.channelMean.length !== 3
      || spec.channelMean.some(m => typeof m !== 'number' || !Number.isFinite(m))) {
    throw new Error(`${filePath}: channelMean must be three finite numbers`);
  }
  return spec;
}

/** mulberry32: tiny deterministic PRNG over uint32 state. */
function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Standard normal samples via Box-Muller over the uniform stream. */
function gaussianStream(seed: number): () => number {
  const uniform = mulberry32(seed);
  let spare: number | null = null;
  return () => {
    if (spare !== null) {
      const out = spare;
      spare = null;
      return out;
    }
    let u = 0;
    while (u === 0) {
      u = uniform();
    }
    const v = uniform();
    const radius = Math.sqrt(-2 * Math.log(u));
    spare = radius * Math.sin(2 * Math.PI * v);
    return radius * Math.cos(2 * Math.PI * v);
  };
}

/** Instantiate the network with deterministic He-scaled kernels. */
export function buildNetwork(spec: ConvNetSpec): ConvNet {
  const nextGaussian = gaussianStream(spec.seed);
  const k = spec.kernelSize;
  const kernels: tf.Tensor4D[] = [];
  let channels = 3;
  for (const block of spec.blocks) {
    for (const width of block) {
      const fanIn = k * k * channels;
      const std = Math.sqrt(2 / fanIn);
      const weights = new Float32Array(k * k * channels * width);
      for (let i = 0; i < weights.length; i++) {
        weights[i] = std * nextGaussian();
      }
      kernels.push(tf.tensor4d(weights, [k, k, channels, width]));
      channels = width;
    }
  }
  return {
    spec,
    kernels,
    downsample: 2 ** spec.blocks.length,
    outChannels: channels,
  };
}

/** Release the kernels of a built network. */
export function disposeNetwork(net: ConvNet): void {
  for (const kernel of net.kernels) {
    kernel.dispose();
  }
}

/**
 * Run the conv stack on one [h, w, 3] image tensor and return the
 * activation grid after the final max pool as [h', w', outChannels],
 * where h' and w' shrink by the downsample factor. Channel means from
 * the spec are subtracted before the first conv.
 */
export function forward(net: ConvNet, image: tf.Tensor3D): tf.Tensor3D {
  return tf.tidy(() => {
    let x = image.sub(tf.tensor1d(net.spec.channelMean)).expandDims(0) as tf.Tensor4D;
    let layer = 0;
    for (const block of net.spec.blocks) {
      for (let i = 0; i < block.length; i++) {
        x = tf.relu(tf.conv2d(x, net.kernels[layer], 1, 'same'));
        layer += 1;
      }
      x = tf.maxPool(x, 2, 2, 'valid');
    }
    return x.squeeze([0]);
  });
}
