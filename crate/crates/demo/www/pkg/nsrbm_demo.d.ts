/* tslint:disable */
/* eslint-disable */

/**
 * Histogram of `M(∞)` draws with summary statistics.
 */
export class Histogram {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly counts: Float64Array;
    /**
     * Bin edges, one more than the counts.
     */
    readonly edges: Float64Array;
    readonly meanIterations: number;
    readonly mean: number;
    readonly se: number;
}

/**
 * Skeleton of one path on `[0, horizon]`, flattened as `[t0, z0, t1, z1, ...]`,
 * followed by the argmax and the maximum.
 */
export function samplePath(amplitude: number, offset: number, horizon: number, seed: bigint): Float64Array;

/**
 * Draws `n` stationary maxima for drift `amplitude·cos(2πt) + offset`.
 */
export function stationaryMax(amplitude: number, offset: number, n: number, seed: bigint, bins: number, alg: string): Histogram;

/**
 * Empirical and analytic warm-up tails at horizon `t` from `x0`, flattened
 * as `[u, empirical, bound, ...]` and followed by the recommended `u` (NaN
 * when there is none) and the inverted bound.
 */
export function warmupCurve(amplitude: number, offset: number, t: number, x0: number, epsilon: number, trials: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_histogram_free: (a: number, b: number) => void;
    readonly histogram_counts: (a: number) => [number, number];
    readonly histogram_edges: (a: number) => [number, number];
    readonly histogram_mean: (a: number) => number;
    readonly histogram_meanIterations: (a: number) => number;
    readonly histogram_se: (a: number) => number;
    readonly samplePath: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly stationaryMax: (a: number, b: number, c: number, d: bigint, e: number, f: number, g: number) => [number, number, number];
    readonly warmupCurve: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
