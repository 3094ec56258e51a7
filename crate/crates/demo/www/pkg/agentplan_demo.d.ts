/* tslint:disable */
/* eslint-disable */

/**
 * A plan ready for display.
 */
export class Outcome {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    cost: number;
    /**
     * Plan document text.
     */
    document: string;
    jumps: number;
    /**
     * One line per event for disturbances, empty otherwise.
     */
    log: string;
    makespan: number;
    svg: string;
}

/**
 * `to = 0` keeps the machine down for good.
 */
export function machine_down(problem: string, machine: number, from: number, to: number): Outcome;

export function optimize(problem: string, seed: number, forecast: number, iterations: number): Outcome;

export function plan(problem: string): Outcome;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_get_outcome_cost: (a: number) => number;
    readonly __wbg_get_outcome_document: (a: number) => [number, number];
    readonly __wbg_get_outcome_jumps: (a: number) => number;
    readonly __wbg_get_outcome_log: (a: number) => [number, number];
    readonly __wbg_get_outcome_makespan: (a: number) => number;
    readonly __wbg_get_outcome_svg: (a: number) => [number, number];
    readonly __wbg_outcome_free: (a: number, b: number) => void;
    readonly __wbg_set_outcome_cost: (a: number, b: number) => void;
    readonly __wbg_set_outcome_document: (a: number, b: number, c: number) => void;
    readonly __wbg_set_outcome_jumps: (a: number, b: number) => void;
    readonly __wbg_set_outcome_log: (a: number, b: number, c: number) => void;
    readonly __wbg_set_outcome_makespan: (a: number, b: number) => void;
    readonly __wbg_set_outcome_svg: (a: number, b: number, c: number) => void;
    readonly machine_down: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly optimize: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly plan: (a: number, b: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
