/* tslint:disable */
/* eslint-disable */

/**
 * One synthetic weight row with the quantization levels chosen by each
 * method, plus the outlier extraction cutoffs. Feeds the histogram view.
 */
export function codebook_demo(cols: number, bits: number, dist: string, seed: bigint, outlier_ratio: number): string;

/**
 * Quantize a synthetic layer and report the objective trace together with
 * the RTN / k-means baselines and (optionally) the outlier-split variant.
 */
export function convergence_demo(rows: number, cols: number, calib_cols: number, bits: number, iters: number, dist: string, seed: bigint, outlier_ratio: number): string;

export function start(): void;

/**
 * Solve the same synthetic layer under each fixed-lambda policy plus the
 * adaptive default, returning one objective per policy.
 */
export function sweep_lambda_demo(rows: number, cols: number, calib_cols: number, bits: number, seed: bigint, lambdas: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly codebook_demo: (a: number, b: number, c: number, d: number, e: bigint, f: number) => [number, number, number, number];
    readonly convergence_demo: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint, i: number) => [number, number, number, number];
    readonly sweep_lambda_demo: (a: number, b: number, c: number, d: number, e: bigint, f: number, g: number) => [number, number, number, number];
    readonly start: () => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
