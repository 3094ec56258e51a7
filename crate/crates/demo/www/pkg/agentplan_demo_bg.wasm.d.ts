/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_get_outcome_cost: (a: number) => number;
export const __wbg_get_outcome_document: (a: number) => [number, number];
export const __wbg_get_outcome_jumps: (a: number) => number;
export const __wbg_get_outcome_log: (a: number) => [number, number];
export const __wbg_get_outcome_makespan: (a: number) => number;
export const __wbg_get_outcome_svg: (a: number) => [number, number];
export const __wbg_outcome_free: (a: number, b: number) => void;
export const __wbg_set_outcome_cost: (a: number, b: number) => void;
export const __wbg_set_outcome_document: (a: number, b: number, c: number) => void;
export const __wbg_set_outcome_jumps: (a: number, b: number) => void;
export const __wbg_set_outcome_log: (a: number, b: number, c: number) => void;
export const __wbg_set_outcome_makespan: (a: number, b: number) => void;
export const __wbg_set_outcome_svg: (a: number, b: number, c: number) => void;
export const machine_down: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const optimize: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const plan: (a: number, b: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
