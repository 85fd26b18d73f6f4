/* tslint:disable */
/* eslint-disable */

/**
 * One exploration: the boundary count after every step and how it ended.
 */
export function exploration_path(map: string, model: string, p: number, max_steps: number, escape_height: number, seed: bigint): string;

/**
 * Every supported (map, model) pair, for populating the page's menus.
 */
export function models(): string;

/**
 * Exact peeling probabilities of `map` with jump sizes up to `k_max`,
 * together with its thresholds.
 */
export function peel_law(map: string, k_max: number): string;

/**
 * Escape frequencies of site percolation on type-2 triangulations at
 * `points` equally spaced values of p in `[lo, hi]`, against the exact
 * survival probability.
 */
export function theta_curve(lo: number, hi: number, points: number, trials: number, escape_height: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly exploration_path: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number];
    readonly models: () => [number, number];
    readonly peel_law: (a: number, b: number, c: number) => [number, number];
    readonly theta_curve: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
