/**
 * Reader and writer for the DGRD descriptor-grid container.
 *
 * A DGRD file is a 24-byte little-endian header followed by the grid
 * values as IEEE-754 float32 in row-major (h, w, d) order:
 *
 *   bytes 0..3   magic "DGRD"
 *   bytes 4..7   uint32 format version (currently 1)
 *   bytes 8..11  uint32 h (grid rows)
 *   bytes 12..15 uint32 w (grid columns)
 *   bytes 16..19 uint32 d (descriptor dimension)
 *   bytes 20..23 float32 scale tag (rescale factor the grid was built at)
 *
 * The layout matches the Python-side loader byte for byte, so files
 * written here round-trip through that component unchanged.
 */
import { randomBytes } from 'node:crypto';
import * as fs from 'node:fs';
import * as path from 'node:path';

export const GRID_MAGIC = 'DGRD';
export const GRID_VERSION = 1;
export const HEADER_BYTES = 24;

export interface DescriptorGrid {
  /** grid rows */
  h: number;
  /** grid columns */
  w: number;
  /** descriptor dimension */
  d: number;
  /** rescale factor recorded with the grid */
  scaleTag: number;
  /** h * w * d float32 values, row-major */
  values: Float32Array;
}

function checkShape(h: number, w: number, d: number): void {
  for (const [name, v] of [['h', h], ['w', w], ['d', d]] as const) {
    if (!Number.isInteger(v) || v < 1) {
      throw new Error(`grid ${name} must be a positive integer, got ${v}`);
    }
  }
}

/** Serialize a grid into a Buffer laid out as described above. */
export function encodeGrid(grid: DescriptorGrid): Buffer {
  checkShape(grid.h, grid.w, grid.d);
  const count = grid.h * grid.w * grid.d;
  if (grid.values.length !== count) {
    throw new Error(
      `value count ${grid.values.length} does not match ${grid.h}x${grid.w}x${grid.d}`,
    );
  }
  if (!Number.isFinite(grid.scaleTag)) {
    throw new Error('scale tag must be finite');
  }
  for (let i = 0; i < count; i++) {
    if (!Number.isFinite(grid.values[i])) {
      throw new Error(`grid value at flat index ${i} is not finite`);
    }
  }
  const buf = Buffer.allocUnsafe(HEADER_BYTES + 4 * count);
  buf.write(GRID_MAGIC, 0, 'ascii');
  buf.writeUInt32LE(GRID_VERSION, 4);
  buf.writeUInt32LE(grid.h, 8);
  buf.writeUInt32LE(grid.w, 12);
  buf.writeUInt32LE(grid.d, 16);
  buf.writeFloatLE(grid.scaleTag, 20);
  for (let i = 0; i < count; i++) {
    buf.writeFloatLE(grid.values[i], HEADER_BYTES + 4 * i);
  }
  return buf;
}

/** Parse a Buffer produced by encodeGrid (or the Python-side writer). */
export function decodeGrid(buf: Buffer): DescriptorGrid {
  if (buf.length < HEADER_BYTES) {
    throw new Error(`truncated grid: ${buf.length} bytes is shorter than the header`);
  }
  const magic = buf.toString('ascii', 0, 4);
  if (magic !== GRID_MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(magic)}, expected ${GRID_MAGIC}`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== GRID_VERSION) {
    throw new Error(`unsupported grid version ${version}`);
  }
  const h = buf.readUInt32LE(8);
  const w = buf.readUInt32LE(12);
  const d = buf.readUInt32LE(16);
  checkShape(h, w, d);
  const scaleTag = buf.readFloatLE(20);
  const count = h * w * d;
  const expected = HEADER_BYTES + 4 * count;
  if (buf.length !== expected) {
    throw new Error(`grid body has ${buf.length - HEADER_BYTES} bytes, expected ${4 * count}`);
  }
  const values = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    values[i] = buf.readFloatLE(HEADER_BYTES + 4 * i);
  }
  return { h, w, d, scaleTag, values };
}

/**
 * Write a grid to disk atomically: the bytes land in a temporary
 * sibling file that is renamed over the target, so readers never
 * observe a half-written grid.
 */
export function writeGridFile(filePath: string, grid: DescriptorGrid): void {
  const dir = path.dirname(filePath);
  const tmp = path.join(
    dir,
    `.tmp-${path.basename(filePath)}-${process.pid}-${randomBytes(4).toString('hex')}`,
  );
  try {
    fs.writeFileSync(tmp, encodeGrid(grid));
    fs.renameSync(tmp, filePath);
  } catch (err) {
    fs.rmSync(tmp, { force: true });
    throw err;
  }
}

/** Read a grid file written by writeGridFile. */
export function readGridFile(filePath: string): DescriptorGrid {
  return decodeGrid(fs.readFileSync(filePath));
}
