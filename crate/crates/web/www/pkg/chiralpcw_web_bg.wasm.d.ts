/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_polarizationmap_free: (a: number, b: number) => void;
export const directionality: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const polarizationmap_aspect: (a: number) => number;
export const polarizationmap_c_points: (a: number) => [number, number];
export const polarizationmap_freq: (a: number) => number;
export const polarizationmap_new: (a: number) => [number, number, number];
export const polarizationmap_nx: (a: number) => number;
export const polarizationmap_ny: (a: number) => number;
export const polarizationmap_s0: (a: number) => [number, number];
export const polarizationmap_s3: (a: number) => [number, number];
export const polarizationmap_slowdown: (a: number) => number;
export const scattering_spectrum: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
