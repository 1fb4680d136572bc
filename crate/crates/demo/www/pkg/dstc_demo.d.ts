/* tslint:disable */
/* eslint-disable */

/**
 * Lower a random single-channel `size`×`size` map through the bitmap im2col.
 */
export function im2col_view(size: number, kernel: number, stride: number, density: number, seed: number): string;

/**
 * Modeled speedup of a square GEMM over falling A density, with and without
 * the operand collector.
 */
export function speedup_curve(size: number, b_density: number, seed: number): string;

/**
 * One 32×32×1 outer-product set for lane bitmaps `a_bits` and `b_bits`.
 */
export function warp_step(a_bits: number, b_bits: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly im2col_view: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly speedup_curve: (a: number, b: number, c: number) => [number, number];
    readonly warp_step: (a: number, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
