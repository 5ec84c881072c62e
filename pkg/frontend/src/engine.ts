/**
 * Penalty forward/backward over in-memory score buffers.
 *
 * The engine is consumed strictly through its external interfaces: scores go
 * out as an SFT1 file, `phyfea loss` runs as a child process, the JSON report
 * comes back on stdout, and the gradient returns through a second SFT1 file.
 * Each call uses its own temporary directory, so concurrent calls are
 * independent and nothing is retained past the call.
 */

import { execFileSync } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import type { BoundBuffer } from './sft.js';
import { ValidationError, readTensor, validateBuffer, writeTensor } from './sft.js';

/** The engine process failed; carries its exit code and stderr. */
export class EngineError extends Error {
  constructor(message: string, readonly exitCode: number | null, readonly stderr: string) {
    super(message);
    this.name = 'EngineError';
  }
}

export interface EngineOptions {
  alpha?: number;
  epsilon?: number;
  /** Sweep budget override; default is max(2, max(H, W) / 2). */
  iterations?: number;
  losses?: 'opening,dilation' | 'opening' | 'dilation' | 'none';
  pairMode?: 'all' | 'infeasible_only';
  /** Catalog JSON path, required for pairMode infeasible_only. */
  catalog?: string;
  precision?: 'single' | 'double';
  bgTol?: number;
  workers?: number;
  /** External cross-entropy value folded into `total`. */
  crossEntropy?: number;
  /** Engine executable; defaults to `phyfea` on PATH. */
  command?: string;
}

export interface PenaltyResult {
  lOpening: number;
  lDilation: number;
  penalty: number;
  /** Present when crossEntropy was supplied. */
  total?: number;
  /** Gradient of the penalty with the input's dims. */
  grad: BoundBuffer;
  /** Full report as emitted by the engine. */
  report: Record<string, unknown>;
}

function engineArgs(options: EngineOptions): string[] {
  const args: string[] = [];
  const push = (flag: string, value: number | string | undefined) => {
    if (value !== undefined) args.push(flag, String(value));
  };
  push('--alpha', options.alpha);
  push('--epsilon', options.epsilon);
  push('--iterations', options.iterations);
  push('--losses', options.losses);
  push('--pair-mode', options.pairMode);
  push('--catalog', options.catalog);
  push('--precision', options.precision);
  push('--bg-tol', options.bgTol);
  push('--workers', options.workers);
  push('--ce', options.crossEntropy);
  return args;
}

function runEngine(command: string, args: string[]): string {
  try {
    return execFileSync(command, args, { encoding: 'utf-8', stdio: ['ignore', 'pipe', 'pipe'] });
  } catch (err) {
    const failure = err as { status?: number | null; stderr?: string; message: string };
    const stderr = (failure.stderr ?? '').toString().trim();
    throw new EngineError(
      `${command} ${args[0] ?? ''} failed (exit ${failure.status ?? 'none'}): ${stderr || failure.message}`,
      failure.status ?? null, stderr);
  }
}

/**
 * Run the full penalty pipeline on a (C, H, W) score buffer and return the
 * loss values with the gradient. Values match `phyfea loss` on the same data
 * exactly; the input buffer is only read.
 */
export function penaltyForwardBackward(
  buffer: BoundBuffer, options: EngineOptions = {}): PenaltyResult {
  validateBuffer(buffer, 3);
  const command = options.command ?? 'phyfea';
  const workdir = mkdtempSync(join(tmpdir(), 'phyfea-'));
  try {
    const scorePath = join(workdir, 'scores.sft');
    const gradPath = join(workdir, 'grad.sft');
    writeTensor(scorePath, buffer);
    const stdout = runEngine(command,
      ['loss', scorePath, '--grad-out', gradPath, ...engineArgs(options)]);
    const report = JSON.parse(stdout) as Record<string, unknown>;
    const grad = readTensor(gradPath);
    if (grad.dims.join(',') !== buffer.dims.join(',')) {
      throw new ValidationError(
        `gradient dims [${grad.dims.join(', ')}] do not match input [${buffer.dims.join(', ')}]`);
    }
    const result: PenaltyResult = {
      lOpening: report.l_opening as number,
      lDilation: report.l_dilation as number,
      penalty: report.penalty as number,
      grad,
      report,
    };
    if (typeof report.total === 'number') result.total = report.total;
    return result;
  } finally {
    rmSync(workdir, { recursive: true, force: true });
  }
}

/** Engine semantic version and build precision, as printed by --version. */
export function versionInfo(precision?: 'single' | 'double', command = 'phyfea'): string {
  const args = ['--version'];
  if (precision !== undefined) args.push('--precision', precision);
  return runEngine(command, args).trim();
}
