/**
 * SFT1 tensor container, byte-compatible with the engine's reader/writer:
 * magic "SFT1", little-endian u32 rank (2 or 3), rank u32 extents, then the
 * payload as little-endian float32 in row-major order.
 */

import { readFileSync, writeFileSync } from 'node:fs';

const MAGIC = 'SFT1';

/** Contiguous caller-owned float32 tensor with explicit extents. */
export interface BoundBuffer {
  dims: number[];
  data: Float32Array;
}

/** Malformed file content; the message names the failing byte offset. */
export class FormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'FormatError';
  }
}

/** Bad in-memory input: dims, payload length, or value domain. */
export class ValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'ValidationError';
  }
}

/**
 * Check dims/payload consistency before anything touches the engine.
 * Throws ValidationError; passing means the buffer serializes cleanly.
 */
export function validateBuffer(buffer: BoundBuffer, rank?: number): void {
  const { dims, data } = buffer;
  if (!(data instanceof Float32Array)) {
    throw new ValidationError('payload must be a Float32Array');
  }
  if (rank !== undefined && dims.length !== rank) {
    throw new ValidationError(`expected rank ${rank}, got dims [${dims.join(', ')}]`);
  }
  if (dims.length < 2 || dims.length > 3) {
    throw new ValidationError(`SFT1 stores rank 2 or 3, got rank ${dims.length}`);
  }
  for (const extent of dims) {
    if (!Number.isInteger(extent) || extent < 1) {
      throw new ValidationError(`extents must be positive integers, got [${dims.join(', ')}]`);
    }
  }
  const need = dims.reduce((a, b) => a * b, 1);
  if (data.length !== need) {
    throw new ValidationError(
      `payload length ${data.length} does not match dims [${dims.join(', ')}] (need ${need})`);
  }
}

/** Serialize a buffer to an SFT1 file. */
export function writeTensor(path: string, buffer: BoundBuffer): void {
  validateBuffer(buffer);
  const { dims, data } = buffer;
  const head = 8 + 4 * dims.length;
  const blob = Buffer.alloc(head + 4 * data.length);
  blob.write(MAGIC, 0, 'ascii');
  blob.writeUInt32LE(dims.length, 4);
  dims.forEach((extent, k) => blob.writeUInt32LE(extent, 8 + 4 * k));
  const view = new DataView(blob.buffer, blob.byteOffset + head);
  for (let k = 0; k < data.length; k++) {
    view.setFloat32(4 * k, data[k], true);
  }
  writeFileSync(path, blob);
}

/** Read an SFT1 file; write then read is bit-exact. */
export function readTensor(path: string): BoundBuffer {
  let blob: Buffer;
  try {
    blob = readFileSync(path);
  } catch (err) {
    throw new FormatError(`cannot read tensor ${path}: ${(err as Error).message}`);
  }
  if (blob.length < 8) {
    throw new FormatError(`${path}: truncated header, ${blob.length} bytes (need >= 8)`);
  }
  if (blob.toString('ascii', 0, 4) !== MAGIC) {
    throw new FormatError(`${path}: bad magic at offset 0 (want "${MAGIC}")`);
  }
  const rank = blob.readUInt32LE(4);
  if (rank !== 2 && rank !== 3) {
    throw new FormatError(`${path}: rank ${rank} at offset 4 not in {2, 3}`);
  }
  const head = 8 + 4 * rank;
  if (blob.length < head) {
    throw new FormatError(`${path}: truncated dims at offset 8`);
  }
  const dims: number[] = [];
  for (let k = 0; k < rank; k++) {
    dims.push(blob.readUInt32LE(8 + 4 * k));
  }
  const count = dims.reduce((a, b) => a * b, 1);
  if (blob.length !== head + 4 * count) {
    throw new FormatError(
      `${path}: payload is ${blob.length - head} bytes at offset ${head}, ` +
      `dims [${dims.join(', ')}] need ${4 * count}`);
  }
  const data = new Float32Array(count);
  const view = new DataView(blob.buffer, blob.byteOffset + head);
  for (let k = 0; k < count; k++) {
    data[k] = view.getFloat32(4 * k, true);
  }
  return { dims, data };
}
