/** Scripted console round trip: create session, NEXT, play the output,
 * thumbs-down, observe gains + heatmap update, kernel button after mixed
 * appraisals. Every displayed value is checked against the corresponding
 * service payload field. */

import { beforeEach, describe, expect, it } from "vitest";

import { mountConsole, type ConsoleHandle } from "../src/main.js";
import { FakeAudioContext, makeFakeBackend, type FakeBackend } from "./fake_backend.js";

const RES = 7;

describe("console round trip", () => {
  let backend: FakeBackend;
  let handle: ConsoleHandle;
  let root: HTMLElement;

  beforeEach(() => {
    document.body.innerHTML = '<main id="app"></main>';
    root = document.getElementById("app")!;
    backend = makeFakeBackend();
    FakeAudioContext.created.length = 0;
    handle = mountConsole(root, {
      fetchFn: backend.fetchFn,
      audioContextFactory: () => new FakeAudioContext(),
      efeResolution: RES,
    });
  });

  function heatValues(): number[] {
    return Array.from(root.querySelectorAll<HTMLElement>(".heat-cell")).map((cell) =>
      Number(cell.dataset.value),
    );
  }

  it("completes the scripted flow with displayed values equal to API fields", async () => {
    // reset -> create session
    await handle.actions.reset();
    expect(handle.getState().sessionId).toBe("fake");
    expect(root.querySelector(".history-list")!.children).toHaveLength(0);
    expect(root.querySelectorAll(".heat-cell")).toHaveLength(0);

    // NEXT loads a frame: belief, scores, gains, waveforms, heatmap
    await handle.actions.next();
    const state = handle.getState();
    expect(state.frame!.frame_index).toBe(1);
    const beliefBars = root.querySelectorAll<HTMLElement>(".belief-bar");
    expect(Array.from(beliefBars).map((b) => Number(b.dataset.value))).toEqual(
      state.frame!.belief,
    );
    const bfeRows = root.querySelectorAll<HTMLElement>(".bfe-row");
    expect(Array.from(bfeRows).map((r) => Number(r.dataset.value))).toEqual(
      state.frame!.bfe,
    );
    expect(bfeRows[state.frame!.map_index].classList.contains("map")).toBe(true);

    const gains = root.querySelector<HTMLElement>(".gains-line")!;
    expect(Number(gains.dataset.us)).toBe(state.frame!.gains[0]);
    expect(Number(gains.dataset.un)).toBe(state.frame!.gains[1]);

    // heatmap equals the efe payload cell for cell
    const firstField = backend.efePayload(RES).efe as number[];
    expect(heatValues()).toEqual(firstField);
    expect(root.querySelectorAll(".heat-cell.current-gains")).toHaveLength(1);

    // play the output waveform through the audio pipeline
    await handle.actions.play("output");
    expect(FakeAudioContext.created).toHaveLength(1);
    expect(FakeAudioContext.created[0].started).toBe(1);
    expect(FakeAudioContext.created[0].buffers[0].sampleRate).toBe(8000);

    // thumbs-down: displayed gains become the service proposal and the
    // heatmap refreshes to the new field
    await handle.actions.appraise(0);
    const afterDown = handle.getState();
    expect(backend.appraisals.map((a) => a.r)).toEqual([0]);
    expect(afterDown.displayedGains).toEqual(backend.lastProposal);
    expect(Number(gains.dataset.us)).toBe(backend.lastProposal[0]);
    expect(Number(gains.dataset.un)).toBe(backend.lastProposal[1]);
    const secondField = backend.efePayload(RES).efe as number[];
    expect(heatValues()).toEqual(secondField);
    expect(secondField).not.toEqual(firstField);
    const history = root.querySelectorAll<HTMLElement>(".history-list li");
    expect(history).toHaveLength(1);
    expect(history[0].dataset.response).toBe("0");

    // kernel button requires mixed appraisals: first attempt is rejected,
    // after a thumbs-up it succeeds and the displayed kernel matches
    await handle.actions.optimize();
    expect(handle.getState().error).toContain("409");
    expect(backend.optimizeCalls).toBe(0);

    await handle.actions.appraise(1);
    await handle.actions.optimize();
    expect(backend.optimizeCalls).toBe(1);
    const kernelLine = root.querySelector<HTMLElement>(".kernel-line")!;
    expect(Number(kernelLine.dataset.sigma)).toBe(0.913);
    expect(Number(kernelLine.dataset.l)).toBe(0.171);
  });

  it("disables mutation buttons while a request is in flight", async () => {
    await handle.actions.reset();
    let release: () => void = () => {};
    const gate = new Promise<void>((resolve) => (release = resolve));
    const slowFetch: typeof backend.fetchFn = async (url, init) => {
      await gate;
      return backend.fetchFn(url, init);
    };
    document.body.innerHTML = '<main id="app"></main>';
    const slowRoot = document.getElementById("app")!;
    const slowHandle = mountConsole(slowRoot, {
      fetchFn: slowFetch,
      audioContextFactory: () => new FakeAudioContext(),
      efeResolution: RES,
    });
    const pending = slowHandle.actions.reset();
    expect(slowHandle.getState().busy).toBe(true);
    const buttons = slowRoot.querySelectorAll<HTMLButtonElement>(
      ".reset-btn, .next-btn, .thumbs-up, .thumbs-down, .brain-btn",
    );
    for (const btn of buttons) expect(btn.disabled).toBe(true);
    // a second mutation is a no-op while busy
    await slowHandle.actions.next();
    expect(slowHandle.getState().frame).toBeNull();
    release();
    await pending;
    expect(slowHandle.getState().busy).toBe(false);
    for (const btn of buttons) expect(btn.disabled).toBe(false);
  });

  it("reset clears a previous session's history and heatmap", async () => {
    await handle.actions.reset();
    await handle.actions.next();
    await handle.actions.appraise(0);
    expect(root.querySelectorAll(".history-list li")).toHaveLength(1);
    expect(root.querySelectorAll(".heat-cell").length).toBeGreaterThan(0);

    await handle.actions.reset();
    expect(root.querySelectorAll(".history-list li")).toHaveLength(0);
    expect(root.querySelectorAll(".heat-cell")).toHaveLength(0);
    expect(handle.getState().history).toHaveLength(0);
  });
});
