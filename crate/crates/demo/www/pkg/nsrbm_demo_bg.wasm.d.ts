/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_histogram_free: (a: number, b: number) => void;
export const histogram_counts: (a: number) => [number, number];
export const histogram_edges: (a: number) => [number, number];
export const histogram_mean: (a: number) => number;
export const histogram_meanIterations: (a: number) => number;
export const histogram_se: (a: number) => number;
export const samplePath: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
export const stationaryMax: (a: number, b: number, c: number, d: bigint, e: number, f: number, g: number) => [number, number, number];
export const warmupCurve: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
