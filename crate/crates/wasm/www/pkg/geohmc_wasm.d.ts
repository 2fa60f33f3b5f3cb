/* tslint:disable */
/* eslint-disable */

/**
 * Draws from one chain on the warped Gaussian.
 */
export class Samples {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly acceptRate: number;
    readonly divergences: number;
    /**
     * States flattened as `[q1, q2]` pairs.
     */
    readonly points: Float64Array;
}

export function sample(kernel: string, step: number, n: number, seed: number): Samples;

export function scaling(dims: Uint32Array, eps: number, t: number, transitions: number, seed: number): Float64Array;

export function trajectory(integrator: string, q1: number, q2: number, p1: number, p2: number, eps: number, steps: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_samples_free: (a: number, b: number) => void;
    readonly sample: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly samples_acceptRate: (a: number) => number;
    readonly samples_divergences: (a: number) => number;
    readonly samples_points: (a: number) => [number, number];
    readonly scaling: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly trajectory: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
