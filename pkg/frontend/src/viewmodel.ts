/** Pure console state: a fold over API responses.
 *
 * Invariants: no inference logic lives here; every field mirrors an API
 * payload verbatim. The heatmap color scale is frozen on the first field
 * of a session so successive snapshots stay visually comparable, and the
 * busy flag serializes mutations (no double submit).
 */

import type { EfePayload, FramePayload } from "./api.js";

export interface HistoryEntry {
  trial: number;
  response: 0 | 1;
  gains: number[];
  proposal: number[];
}

export interface HeatScale {
  min: number;
  max: number;
}

export interface ConsoleState {
  sessionId: string | null;
  environment: string;
  busy: boolean;
  frame: FramePayload | null;
  efe: EfePayload | null;
  heatScale: HeatScale | null;
  history: HistoryEntry[];
  displayedGains: number[] | null;
  kernel: { sigma: number; l: number } | null;
  error: string | null;
}

export function initialState(): ConsoleState {
  return {
    sessionId: null,
    environment: "synthetic",
    busy: false,
    frame: null,
    efe: null,
    heatScale: null,
    history: [],
    displayedGains: null,
    kernel: null,
    error: null,
  };
}

/** Reset: a fresh session clears the history, heatmap, and scale. */
export function applySessionCreated(
  state: ConsoleState,
  sessionId: string,
  environment: string,
): ConsoleState {
  return { ...initialState(), sessionId, environment };
}

export function applyFrame(state: ConsoleState, frame: FramePayload): ConsoleState {
  return { ...state, frame, displayedGains: frame.gains, error: null };
}

export function applyEfe(state: ConsoleState, efe: EfePayload): ConsoleState {
  const finite = efe.efe.filter((v) => Number.isFinite(v));
  const scale =
    state.heatScale ??
    (finite.length
      ? { min: Math.min(...finite), max: Math.max(...finite) }
      : { min: 0, max: 1 });
  return { ...state, efe, heatScale: scale };
}

export function applyAppraisal(
  state: ConsoleState,
  response: 0 | 1,
  proposal: number[],
): ConsoleState {
  const gains = state.displayedGains ?? [];
  const entry: HistoryEntry = {
    trial: state.history.length + 1,
    response,
    gains: [...gains],
    proposal: [...proposal],
  };
  return {
    ...state,
    history: [...state.history, entry],
    displayedGains: [...proposal],
    error: null,
  };
}

export function applyKernel(state: ConsoleState, sigma: number, l: number): ConsoleState {
  return { ...state, kernel: { sigma, l } };
}

export function applyError(state: ConsoleState, message: string): ConsoleState {
  return { ...state, error: message };
}

/** Map an EFE value to a blue-to-red hue; values only pass through the
 * session-fixed scale, never any other transformation. */
export function heatColor(value: number, scale: HeatScale): string {
  if (!Number.isFinite(value)) return "rgb(128,128,128)";
  const span = scale.max - scale.min;
  const t = span > 0 ? Math.min(Math.max((value - scale.min) / span, 0), 1) : 0.5;
  const r = Math.round(255 * t);
  const b = Math.round(255 * (1 - t));
  const g = Math.round(96 * (1 - Math.abs(2 * t - 1)));
  return `rgb(${r},${g},${b})`;
}

/** Grid cell index (row-major) closest to the given gains. */
export function gainsToCell(
  gains: number[],
  bounds: number[][],
  resolution: number,
): { row: number; col: number } {
  const clampIdx = (value: number, lo: number, hi: number) => {
    const t = (value - lo) / (hi - lo);
    return Math.min(Math.max(Math.round(t * (resolution - 1)), 0), resolution - 1);
  };
  return {
    row: clampIdx(gains[0], bounds[0][0], bounds[0][1]),
    col: clampIdx(gains[1], bounds[1][0], bounds[1][1]),
  };
}
