import { execFileSync } from 'node:child_process';
import { mkdtempSync, readFileSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import type { BoundBuffer } from '../src/index.js';
import { penaltyForwardBackward, writeTensor } from '../src/index.js';

const SLOW = 120_000;

// Deterministic 32-bit PRNG so the ten tensors are the same on every run.
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function randomScores(seed: number): BoundBuffer {
  const rng = mulberry32(seed);
  const classes = 2 + Math.floor(rng() * 3);
  const height = 5 + Math.floor(rng() * 6);
  const width = 5 + Math.floor(rng() * 6);
  const data = new Float32Array(classes * height * width);
  for (let k = 0; k < data.length; k++) {
    data[k] = rng() * 6 - 3;
  }
  return { dims: [classes, height, width], data };
}

const cases = Array.from({ length: 10 }, (_, k) => ({
  seed: 1000 + k,
  buffer: randomScores(1000 + k),
}));

let workdir: string;

beforeAll(() => {
  workdir = mkdtempSync(join(tmpdir(), 'parity-test-'));
});

afterAll(() => {
  rmSync(workdir, { recursive: true, force: true });
});

describe('binding versus command line on the same bytes', () => {
  it.each(cases)('agrees on seed $seed', ({ seed, buffer }) => {
    const scorePath = join(workdir, `scores-${seed}.sft`);
    const cliGradPath = join(workdir, `grad-cli-${seed}.sft`);
    writeTensor(scorePath, buffer);
    const stdout = execFileSync('phyfea',
      ['loss', scorePath, '--grad-out', cliGradPath], { encoding: 'utf-8' });
    const cli = JSON.parse(stdout) as Record<string, number>;

    const res = penaltyForwardBackward(buffer);

    // Both sides parse the same nine-significant-digit decimal rendering, so
    // the doubles must be identical, not merely close.
    expect(res.lOpening).toBe(cli.l_opening);
    expect(res.lDilation).toBe(cli.l_dilation);
    expect(res.penalty).toBe(cli.penalty);

    expect(res.grad.dims).toEqual(buffer.dims);
    const cliBlob = readFileSync(cliGradPath);
    const head = 8 + 4 * buffer.dims.length;
    const cliPayload = cliBlob.subarray(head);
    const bindingPayload = Buffer.from(
      res.grad.data.buffer, res.grad.data.byteOffset, res.grad.data.byteLength);
    expect(bindingPayload.equals(cliPayload)).toBe(true);

    // Whole-file check as well: re-serialize the binding gradient and compare
    // every byte against the engine-written file, header included.
    const reGradPath = join(workdir, `grad-binding-${seed}.sft`);
    writeTensor(reGradPath, res.grad);
    expect(readFileSync(reGradPath).equals(cliBlob)).toBe(true);
  }, SLOW);
});
