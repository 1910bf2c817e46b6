/* tslint:disable */
/* eslint-disable */

/**
 * Moves an observer across one vehicle spacing on a uniformly filled ring
 * and reports the moving and parked density estimates at each offset.
 */
export function detection_zone(spacing_m: number, forward_m: number, backward_m: number): string;

/**
 * Elbow curve for `blobs` Gaussian clusters of 60 lanes each, centers on a
 * circle of radius `separation` (in noise standard deviations).
 */
export function elbow(blobs: number, separation: number, seed: bigint): string;

/**
 * Simulates a 1 km ring at increasing vehicle counts and returns the
 * time-averaged ground truth next to the observer estimate for each.
 */
export function ring_mfd(penetration_pct: number, max_vehicles: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly detection_zone: (a: number, b: number, c: number) => [number, number, number, number];
    readonly elbow: (a: number, b: number, c: bigint) => [number, number, number, number];
    readonly ring_mfd: (a: number, b: number, c: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
