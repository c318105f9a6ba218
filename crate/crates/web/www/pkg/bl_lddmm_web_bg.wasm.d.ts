/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_pair_free: (a: number, b: number) => void;
export const __wbg_registration_free: (a: number, b: number) => void;
export const bandLimit: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const pair_size: (a: number) => number;
export const pair_target: (a: number) => [number, number];
export const pair_template: (a: number) => [number, number];
export const register: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number) => [number, number, number];
export const registration_difference: (a: number) => [number, number];
export const registration_displacement: (a: number) => [number, number];
export const registration_energy: (a: number) => [number, number];
export const registration_jacobian: (a: number) => [number, number];
export const registration_jacobian_range: (a: number) => [number, number];
export const registration_mse: (a: number) => [number, number];
export const registration_status: (a: number) => [number, number];
export const registration_wall_time: (a: number) => number;
export const registration_warped: (a: number) => [number, number];
export const synthesize: (a: number, b: number, c: number, d: number) => [number, number, number];
export const __wbindgen_exn_store: (a: number) => void;
export const __externref_table_alloc: () => number;
export const __wbindgen_export_2: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
