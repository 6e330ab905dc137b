import { describe, expect, it } from "vitest";

import type { EfePayload, FramePayload } from "../src/api.js";
import {
  applyAppraisal,
  applyEfe,
  applyFrame,
  applySessionCreated,
  gainsToCell,
  heatColor,
  initialState,
} from "../src/viewmodel.js";

const frame: FramePayload = {
  frame_index: 1,
  map_index: 0,
  belief: [0.9, 0.1],
  bfe: [100, 110],
  model_names: ["a", "b"],
  gains: [1, 1],
  degraded: false,
  waveforms: {},
};

function efePayload(base: number): EfePayload {
  return {
    resolution: 2,
    bounds: [
      [0, 1],
      [0, 1],
    ],
    efe: [base, base + 1, base + 2, base + 3],
    utility_drive: [0, 0, 0, 0],
    info_gain: [0, 0, 0, 0],
    gains: [0.5, 0.5],
    context: 0,
  };
}

describe("view model", () => {
  it("reset clears history, heatmap, and scale", () => {
    let state = applySessionCreated(initialState(), "s1", "synthetic");
    state = applyFrame(state, frame);
    state = applyEfe(state, efePayload(1));
    state = applyAppraisal(state, 0, [0.2, 0.8]);
    expect(state.history).toHaveLength(1);

    const fresh = applySessionCreated(state, "s2", "table1");
    expect(fresh.history).toHaveLength(0);
    expect(fresh.efe).toBeNull();
    expect(fresh.heatScale).toBeNull();
    expect(fresh.sessionId).toBe("s2");
  });

  it("displayed gains equal the proposal returned by the service", () => {
    let state = applyFrame(applySessionCreated(initialState(), "s", "synthetic"), frame);
    expect(state.displayedGains).toEqual([1, 1]);
    state = applyAppraisal(state, 0, [0.35, 0.65]);
    expect(state.displayedGains).toEqual([0.35, 0.65]);
    expect(state.history[0].gains).toEqual([1, 1]);
    expect(state.history[0].proposal).toEqual([0.35, 0.65]);
  });

  it("heat scale is frozen on the first field of a session", () => {
    let state = applySessionCreated(initialState(), "s", "synthetic");
    state = applyEfe(state, efePayload(1));
    expect(state.heatScale).toEqual({ min: 1, max: 4 });
    state = applyEfe(state, efePayload(100));
    expect(state.heatScale).toEqual({ min: 1, max: 4 });
    expect(state.efe!.efe[0]).toBe(100);
  });

  it("heat color maps through the scale only", () => {
    const scale = { min: 0, max: 10 };
    expect(heatColor(0, scale)).toBe("rgb(0,0,255)");
    expect(heatColor(10, scale)).toBe("rgb(255,0,0)");
    expect(heatColor(5, scale)).toBe(heatColor(5, scale));
    expect(heatColor(Number.POSITIVE_INFINITY, scale)).toBe("rgb(128,128,128)");
  });

  it("marks the grid cell closest to the current gains", () => {
    const bounds = [
      [0, 1],
      [0, 1],
    ];
    expect(gainsToCell([0, 0], bounds, 21)).toEqual({ row: 0, col: 0 });
    expect(gainsToCell([1, 1], bounds, 21)).toEqual({ row: 20, col: 20 });
    expect(gainsToCell([0.8, 0.2], bounds, 21)).toEqual({ row: 16, col: 4 });
  });
});
