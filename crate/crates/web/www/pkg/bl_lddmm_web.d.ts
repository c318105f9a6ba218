/* tslint:disable */
/* eslint-disable */
export function synthesize(kind: string, size: number, seed: number): Pair;
export function bandLimit(kind: string, size: number, seed: number, bound: number): Float32Array;
export function register(kind: string, size: number, seed: number, bound: number, alpha: number, sigma2: number, incompressible: boolean, method: string, max_outer: number): Registration;
export class Pair {
  private constructor();
  free(): void;
  target(): Float32Array;
  template(): Float32Array;
  readonly size: number;
}
export class Registration {
  private constructor();
  free(): void;
  difference(): Float32Array;
  /**
   * Both displacement components, component 0 first.
   */
  displacement(): Float32Array;
  jacobian_range(): Float64Array;
  /**
   * MSE_rel per outer iteration, starting with the initial guess.
   */
  mse(): Float64Array;
  energy(): Float64Array;
  warped(): Float32Array;
  /**
   * `det D phi` per voxel.
   */
  jacobian(): Float32Array;
  readonly status: string;
  readonly wall_time: number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
  readonly memory: WebAssembly.Memory;
  readonly __wbg_pair_free: (a: number, b: number) => void;
  readonly __wbg_registration_free: (a: number, b: number) => void;
  readonly bandLimit: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
  readonly pair_size: (a: number) => number;
  readonly pair_target: (a: number) => [number, number];
  readonly pair_template: (a: number) => [number, number];
  readonly register: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number) => [number, number, number];
  readonly registration_difference: (a: number) => [number, number];
  readonly registration_displacement: (a: number) => [number, number];
  readonly registration_energy: (a: number) => [number, number];
  readonly registration_jacobian: (a: number) => [number, number];
  readonly registration_jacobian_range: (a: number) => [number, number];
  readonly registration_mse: (a: number) => [number, number];
  readonly registration_status: (a: number) => [number, number];
  readonly registration_wall_time: (a: number) => number;
  readonly registration_warped: (a: number) => [number, number];
  readonly synthesize: (a: number, b: number, c: number, d: number) => [number, number, number];
  readonly __wbindgen_exn_store: (a: number) => void;
  readonly __externref_table_alloc: () => number;
  readonly __wbindgen_export_2: WebAssembly.Table;
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
