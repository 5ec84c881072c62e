import { mkdtempSync, readFileSync, rmSync, writeFileSync, existsSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import type { BoundBuffer } from '../src/index.js';
import {
  FormatError, ValidationError,
  readTensor, validateBuffer, writeTensor,
} from '../src/index.js';

let workdir: string;

beforeAll(() => {
  workdir = mkdtempSync(join(tmpdir(), 'sft-test-'));
});

afterAll(() => {
  rmSync(workdir, { recursive: true, force: true });
});

function payloadBytes(data: Float32Array): Buffer {
  return Buffer.from(data.buffer, data.byteOffset, data.byteLength);
}

describe('write then read', () => {
  it('is bit-exact for rank 3, including signed zero and non-finite values', () => {
    const data = Float32Array.from([
      0, -0, 1, -1, 0.1, 3.4028235e38, 1.17549435e-38,
      1e-45, Infinity, -Infinity, NaN, 2.5,
    ]);
    const buffer: BoundBuffer = { dims: [2, 2, 3], data };
    const path = join(workdir, 'rank3.sft');
    writeTensor(path, buffer);
    const back = readTensor(path);
    expect(back.dims).toEqual([2, 2, 3]);
    expect(payloadBytes(back.data).equals(payloadBytes(data))).toBe(true);
  });

  it('is bit-exact for rank 2', () => {
    const data = new Float32Array(20);
    for (let k = 0; k < data.length; k++) data[k] = Math.sin(k) * 7;
    const path = join(workdir, 'rank2.sft');
    writeTensor(path, { dims: [4, 5], data });
    const back = readTensor(path);
    expect(back.dims).toEqual([4, 5]);
    expect(payloadBytes(back.data).equals(payloadBytes(data))).toBe(true);
  });

  it('returns a buffer detached from the file bytes', () => {
    const path = join(workdir, 'detached.sft');
    writeTensor(path, { dims: [2, 2], data: Float32Array.from([1, 2, 3, 4]) });
    const back = readTensor(path);
    back.data[0] = 99;
    expect(readTensor(path).data[0]).toBe(1);
  });
});

describe('file layout', () => {
  it('writes magic, little-endian u32 rank and extents, then float32 payload', () => {
    const path = join(workdir, 'layout.sft');
    writeTensor(path, { dims: [2, 3], data: Float32Array.from([1, 0, 0, 0, 0, 0]) });
    const blob = readFileSync(path);
    expect(blob.length).toBe(8 + 4 * 2 + 4 * 6);
    expect(blob.toString('ascii', 0, 4)).toBe('SFT1');
    expect(blob.readUInt32LE(4)).toBe(2);
    expect(blob.readUInt32LE(8)).toBe(2);
    expect(blob.readUInt32LE(12)).toBe(3);
    expect(Array.from(blob.subarray(16, 20))).toEqual([0x00, 0x00, 0x80, 0x3f]);
  });
});

describe('readTensor rejects malformed files', () => {
  function craft(name: string, bytes: Buffer): string {
    const path = join(workdir, name);
    writeFileSync(path, bytes);
    return path;
  }

  it('too short for a header', () => {
    const path = craft('short.sft', Buffer.from('SFT'));
    expect(() => readTensor(path)).toThrowError('truncated header, 3 bytes (need >= 8)');
    expect(() => readTensor(path)).toThrowError(FormatError);
  });

  it('wrong magic', () => {
    const blob = Buffer.alloc(16);
    blob.write('XXXX', 0, 'ascii');
    const path = craft('magic.sft', blob);
    expect(() => readTensor(path)).toThrowError('bad magic at offset 0 (want "SFT1")');
  });

  it('rank outside {2, 3}', () => {
    const blob = Buffer.alloc(8);
    blob.write('SFT1', 0, 'ascii');
    blob.writeUInt32LE(5, 4);
    const path = craft('rank.sft', blob);
    expect(() => readTensor(path)).toThrowError('rank 5 at offset 4 not in {2, 3}');
  });

  it('header ends before the extents do', () => {
    const blob = Buffer.alloc(12);
    blob.write('SFT1', 0, 'ascii');
    blob.writeUInt32LE(3, 4);
    const path = craft('dims.sft', blob);
    expect(() => readTensor(path)).toThrowError('truncated dims at offset 8');
  });

  it('payload size disagrees with the extents', () => {
    const blob = Buffer.alloc(16 + 8);
    blob.write('SFT1', 0, 'ascii');
    blob.writeUInt32LE(2, 4);
    blob.writeUInt32LE(2, 8);
    blob.writeUInt32LE(2, 12);
    const path = craft('payload.sft', blob);
    expect(() => readTensor(path)).toThrowError(
      'payload is 8 bytes at offset 16, dims [2, 2] need 16');
  });

  it('missing file', () => {
    expect(() => readTensor(join(workdir, 'absent.sft'))).toThrowError(FormatError);
    expect(() => readTensor(join(workdir, 'absent.sft'))).toThrowError('cannot read tensor');
  });

  it('error carries the FormatError name', () => {
    try {
      readTensor(join(workdir, 'absent.sft'));
      expect.unreachable();
    } catch (err) {
      expect(err).toBeInstanceOf(FormatError);
      expect((err as Error).name).toBe('FormatError');
    }
  });
});

describe('validateBuffer', () => {
  const ok = (): BoundBuffer => ({ dims: [2, 3], data: new Float32Array(6) });

  it('accepts a consistent buffer, with or without a rank pin', () => {
    expect(() => validateBuffer(ok())).not.toThrow();
    expect(() => validateBuffer(ok(), 2)).not.toThrow();
  });

  it('rejects payloads that are not Float32Array', () => {
    const bad = { dims: [2, 3], data: new Float64Array(6) } as unknown as BoundBuffer;
    expect(() => validateBuffer(bad)).toThrowError('payload must be a Float32Array');
  });

  it('rejects a rank pin mismatch', () => {
    expect(() => validateBuffer(ok(), 3)).toThrowError('expected rank 3, got dims [2, 3]');
  });

  it('rejects rank 1 and rank 4 dims', () => {
    expect(() => validateBuffer({ dims: [6], data: new Float32Array(6) }))
      .toThrowError('SFT1 stores rank 2 or 3, got rank 1');
    expect(() => validateBuffer({ dims: [1, 2, 3, 1], data: new Float32Array(6) }))
      .toThrowError('SFT1 stores rank 2 or 3, got rank 4');
  });

  it('rejects fractional and non-positive extents', () => {
    expect(() => validateBuffer({ dims: [2, 2.5], data: new Float32Array(5) }))
      .toThrowError('extents must be positive integers');
    expect(() => validateBuffer({ dims: [0, 3], data: new Float32Array(0) }))
      .toThrowError('extents must be positive integers');
  });

  it('rejects a payload length mismatch', () => {
    expect(() => validateBuffer({ dims: [2, 3], data: new Float32Array(5) }))
      .toThrowError('payload length 5 does not match dims [2, 3] (need 6)');
  });

  it('throws ValidationError instances', () => {
    try {
      validateBuffer({ dims: [2, 3], data: new Float32Array(5) });
      expect.unreachable();
    } catch (err) {
      expect(err).toBeInstanceOf(ValidationError);
      expect((err as Error).name).toBe('ValidationError');
    }
  });
});

describe('writeTensor input checks', () => {
  it('refuses inconsistent buffers without creating the file', () => {
    const path = join(workdir, 'never-written.sft');
    expect(() => writeTensor(path, { dims: [2, 3], data: new Float32Array(5) }))
      .toThrowError(ValidationError);
    expect(existsSync(path)).toBe(false);
  });
});
