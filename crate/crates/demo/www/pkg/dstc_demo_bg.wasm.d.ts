/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const im2col_view: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const speedup_curve: (a: number, b: number, c: number) => [number, number];
export const warp_step: (a: number, b: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
