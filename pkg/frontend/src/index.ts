/**
 * Bindings to the chanorm front-end so trainable channel normalization can sit
 * inside a host-language training loop. Extraction shells out to the `chanorm`
 * CLI; forward/backward calls go through the `chanorm-bridge` JSON runner. The
 * host loop owns its updates and writes parameter files back for the native
 * side, which stays the single source of truth for parameter state.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { decodeFea1, FeatureMatrix } from "./feat.js";
import { decodeWavPcm16, encodeWavPcm16 } from "./wav.js";

export { decodeFea1, decodeWavPcm16, encodeWavPcm16 };
export type { FeatureMatrix };

export const VERSION = "0.1.0";

export const FRONTEND_NAMES = [
  "log-cmn",
  "pcen",
  "log-pcmn",
  "pcen-pcmn",
  "apcen",
  "log-apcmn",
  "apcen-apcmn",
] as const;

export type FrontendName = (typeof FRONTEND_NAMES)[number];

/** Row-major float64 matrix. */
export interface Matrix {
  rows: number;
  cols: number;
  data: Float64Array;
}

export function matrix(rows: number, cols: number, data: Float64Array): Matrix {
  if (data.length !== rows * cols) {
    throw new Error(`matrix data has ${data.length} entries, expected ${rows * cols}`);
  }
  return { rows, cols, data };
}

function toNested(m: Matrix): number[][] {
  const out: number[][] = [];
  for (let r = 0; r < m.rows; r++) {
    out.push(Array.from(m.data.subarray(r * m.cols, (r + 1) * m.cols)));
  }
  return out;
}

function fromNested(nested: number[][]): Matrix {
  const rows = nested.length;
  const cols = rows > 0 ? nested[0].length : 0;
  const data = new Float64Array(rows * cols);
  for (let r = 0; r < rows; r++) {
    data.set(nested[r], r * cols);
  }
  return { rows, cols, data };
}

export interface PcenResult {
  output: Matrix;
  smoothed: Matrix;
  dAlpha?: Float64Array;
  dDelta?: Float64Array;
  dR?: Float64Array;
  dInput?: Matrix;
}

export interface PcmnSpliceResult {
  output: Matrix;
  dWeights?: Float64Array; // row-major F x (F*21)
  dBias?: Float64Array;
  dInput?: Matrix;
}

export interface BoundFrontendOptions {
  frontend: FrontendName;
  /** Parameter file; kernel initialization is used when omitted. */
  paramsPath?: string;
  configPath?: string;
  noAgc?: boolean;
  noDrc?: boolean;
  cliPath?: string;
  bridgePath?: string;
}

/** Reads/writes the native parameter-file schema (plain JSON object). */
export function loadParams(path: string): Record<string, unknown> {
  return JSON.parse(readFileSync(path, "utf-8"));
}

export function saveParams(path: string, doc: Record<string, unknown>): void {
  writeFileSync(path, JSON.stringify(doc, null, 2) + "\n", "utf-8");
}

export class BoundFrontend {
  readonly options: BoundFrontendOptions;
  private readonly cli: string;
  private readonly bridge: string;

  constructor(options: BoundFrontendOptions) {
    if (!FRONTEND_NAMES.includes(options.frontend)) {
      throw new Error(
        `unknown front-end ${JSON.stringify(options.frontend)}; valid options: ${FRONTEND_NAMES.join(", ")}`,
      );
    }
    this.options = { ...options };
    this.cli = options.cliPath ?? "chanorm";
    this.bridge = options.bridgePath ?? "chanorm-bridge";
  }

  private ablationFlags(): string[] {
    const flags: string[] = [];
    if (this.options.noAgc) flags.push("--no-agc");
    if (this.options.noDrc) flags.push("--no-drc");
    return flags;
  }

  /**
   * Feature-file bytes for raw samples. Samples are rounded to the 16-bit PCM
   * grid (a no-op for WAV-decoded input), so the result is byte-identical to
   * running the CLI on the same file.
   */
  extractBytes(samples: ArrayLike<number>, sampleRate: number): Buffer {
    if (samples.length === 0) {
      throw new Error("EmptyInput: sample array has no entries");
    }
    const workDir = mkdtempSync(join(tmpdir(), "chanorm-bind-"));
    try {
      const wavPath = join(workDir, "input.wav");
      const featPath = join(workDir, "output.feat");
      writeFileSync(wavPath, encodeWavPcm16(samples, sampleRate));
      const args = [
        "extract",
        "--frontend",
        this.options.frontend,
        "--input",
        wavPath,
        "--output",
        featPath,
        ...this.ablationFlags(),
      ];
      if (this.options.paramsPath) args.push("--params", this.options.paramsPath);
      if (this.options.configPath) args.push("--config", this.options.configPath);
      const proc = spawnSync(this.cli, args, { encoding: "utf-8" });
      if (proc.error) throw proc.error;
      if (proc.status !== 0) {
        throw new Error(proc.stderr.trim() || `chanorm exited with status ${proc.status}`);
      }
      return readFileSync(featPath);
    } finally {
      rmSync(workDir, { recursive: true, force: true });
    }
  }

  /** Extract features from raw samples as a decoded matrix. */
  extract(samples: ArrayLike<number>, sampleRate: number): FeatureMatrix {
    return decodeFea1(this.extractBytes(samples, sampleRate));
  }

  private callBridge(request: object): any {
    const proc = spawnSync(this.bridge, [], {
      input: JSON.stringify(request),
      encoding: "utf-8",
      maxBuffer: 256 * 1024 * 1024,
    });
    if (proc.error) throw proc.error;
    if (proc.status !== 0) {
      throw new Error(proc.stderr.trim() || `chanorm-bridge exited with status ${proc.status}`);
    }
    return JSON.parse(proc.stdout);
  }

  private requireParamsPath(): string {
    if (!this.options.paramsPath) {
      throw new Error("forward/backward calls need a paramsPath");
    }
    return this.options.paramsPath;
  }

  /** Normalizer forward pass on mel energies, with gradients when upstream is given. */
  pcenForwardBackward(energies: Matrix, upstream?: Matrix): PcenResult {
    const response = this.callBridge({
      op: "pcen",
      params_path: this.requireParamsPath(),
      energies: toNested(energies),
      upstream: upstream ? toNested(upstream) : null,
    });
    const result: PcenResult = {
      output: fromNested(response.output),
      smoothed: fromNested(response.smoothed),
    };
    if (upstream) {
      result.dAlpha = Float64Array.from(response.d_alpha);
      result.dDelta = Float64Array.from(response.d_delta);
      result.dR = Float64Array.from(response.d_r);
      result.dInput = fromNested(response.d_input);
    }
    return result;
  }

  /** Splice-projection forward pass, with gradients when upstream is given. */
  pcmnSpliceForwardBackward(input: Matrix, upstream?: Matrix): PcmnSpliceResult {
    const response = this.callBridge({
      op: "pcmn_splice",
      params_path: this.requireParamsPath(),
      input: toNested(input),
      upstream: upstream ? toNested(upstream) : null,
    });
    const result: PcmnSpliceResult = { output: fromNested(response.output) };
    if (upstream) {
      result.dWeights = Float64Array.from(response.d_weights);
      result.dBias = Float64Array.from(response.d_bias);
      result.dInput = fromNested(response.d_input);
    }
    return result;
  }

  /** Version reported by the native side; mirrors this package's VERSION. */
  nativeVersion(): string {
    return this.callBridge({ op: "version" }).version;
  }
}
