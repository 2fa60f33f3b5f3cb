/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_samples_free: (a: number, b: number) => void;
export const sample: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const samples_acceptRate: (a: number) => number;
export const samples_divergences: (a: number) => number;
export const samples_points: (a: number) => [number, number];
export const scaling: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const trajectory: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
