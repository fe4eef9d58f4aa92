/* tslint:disable */
/* eslint-disable */

/**
 * Closed-form profile for the given boundary conditions, its speed-limit
 * predicate and the horizon-adjusted profile.
 */
export function explore_profile(v_init: number, v_final: number, distance: number, horizon: number, v_max: number): string;

/**
 * Predicted spacing to a constant-acceleration lead along the closed-form
 * profile, before and after the horizon is stretched to keep it non-negative.
 */
export function lead_spacing_curve(v_init: number, v_final: number, distance: number, horizon: number, gap: number, lead_speed: number, lead_accel: number): string;

/**
 * Runs one trip of the nine-scenario suite with both drivers.
 */
export function simulate_suite_trip(index: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly explore_profile: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly lead_spacing_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number];
    readonly simulate_suite_trip: (a: number, b: number) => [number, number];
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
