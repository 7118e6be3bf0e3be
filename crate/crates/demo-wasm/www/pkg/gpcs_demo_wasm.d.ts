/* tslint:disable */
/* eslint-disable */

/**
 * A simulated dataset kept alive between page actions.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Fits a two-regime model; returns the summary as JSON.
     */
    fit(m1: number, m2: number, max_iter: number, seed: bigint): string;
    /**
     * Draws a new dataset on a `side × side` grid.
     */
    constructor(side: number, seed: bigint, noise: number);
    observed(): Float64Array;
    side(): number;
    trueSurface(): Float64Array;
}

/**
 * Exact log-determinant and its bounds as JSON.
 */
export function logdetBounds(side: number, terms: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_fit: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly demo_new: (a: number, b: bigint, c: number) => [number, number, number];
    readonly demo_observed: (a: number) => [number, number];
    readonly demo_side: (a: number) => number;
    readonly demo_trueSurface: (a: number) => [number, number];
    readonly logdetBounds: (a: number, b: number, c: bigint) => [number, number, number, number];
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
