/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const explore_profile: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const lead_spacing_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number];
export const simulate_suite_trip: (a: number, b: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
