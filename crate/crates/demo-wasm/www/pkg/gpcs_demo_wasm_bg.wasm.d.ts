/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_fit: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
export const demo_new: (a: number, b: bigint, c: number) => [number, number, number];
export const demo_observed: (a: number) => [number, number];
export const demo_side: (a: number) => number;
export const demo_trueSurface: (a: number) => [number, number];
export const logdetBounds: (a: number, b: number, c: bigint) => [number, number, number, number];
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
