/* tslint:disable */
/* eslint-disable */

/**
 * Guided mode of a reduced W1 guide (three rows per side) at `|k a / 2 pi|`.
 */
export class PolarizationMap {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `[u, v, handedness]` per C-point in fractions of the map size.
     */
    c_points(): Float64Array;
    constructor(k: number);
    /**
     * `s0` scaled to its maximum, same layout as [`PolarizationMap::s3`].
     */
    s0(): Float64Array;
    /**
     * `s3 / s0` per node, rows top to bottom.
     */
    s3(): Float64Array;
    /**
     * Aspect ratio height / width of the map.
     */
    readonly aspect: number;
    /**
     * `omega a / 2 pi c`
     */
    readonly freq: number;
    readonly nx: number;
    readonly ny: number;
    /**
     * `c / vg`
     */
    readonly slowdown: number;
}

/**
 * Forward and backward emission shares of a dipole in a local field with
 * ellipse orientation `psi` and ellipticity angle `chi` (radians).
 * Returns `[forward share, backward share, s3 / s0]`.
 */
export function directionality(psi: number, chi: number, kind: string, theta: number): Float64Array;

/**
 * Spectrum for waveguide coupling `beta` and backward share
 * `gamma_b / (gamma_f + gamma_b)`. Returns rows of
 * `[detuning / gamma_w, |t|^2, |r|^2, arg t]`, flattened.
 */
export function scattering_spectrum(beta: number, backward_share: number, points: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_polarizationmap_free: (a: number, b: number) => void;
    readonly directionality: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly polarizationmap_aspect: (a: number) => number;
    readonly polarizationmap_c_points: (a: number) => [number, number];
    readonly polarizationmap_freq: (a: number) => number;
    readonly polarizationmap_new: (a: number) => [number, number, number];
    readonly polarizationmap_nx: (a: number) => number;
    readonly polarizationmap_ny: (a: number) => number;
    readonly polarizationmap_s0: (a: number) => [number, number];
    readonly polarizationmap_s3: (a: number) => [number, number];
    readonly polarizationmap_slowdown: (a: number) => number;
    readonly scattering_spectrum: (a: number, b: number, c: number) => [number, number, number, number];
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
