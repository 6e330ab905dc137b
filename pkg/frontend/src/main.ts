/** Console wiring: builds the four cells, binds the controls, and keeps a
 * single in-flight mutation per session (buttons disable while busy). */

import { ApiClient, ApiError, type FetchLike } from "./api.js";
import {
  type AudioContextFactory,
  decodePcm16,
  playSamples,
} from "./pcm.js";
import {
  renderBelief,
  renderBfe,
  renderGains,
  renderHeatmap,
  renderHistory,
  renderKernel,
  renderWaveform,
} from "./render.js";
import {
  type ConsoleState,
  applyAppraisal,
  applyEfe,
  applyError,
  applyFrame,
  applyKernel,
  applySessionCreated,
  initialState,
} from "./viewmodel.js";

const WAVEFORM_KINDS = ["input", "speech", "noise", "output"] as const;
type WaveKind = (typeof WAVEFORM_KINDS)[number];

export interface ConsoleDeps {
  fetchFn?: FetchLike;
  audioContextFactory?: AudioContextFactory;
  efeResolution?: number;
  baseUrl?: string;
}

export interface ConsoleHandle {
  root: HTMLElement;
  getState(): ConsoleState;
  samples: Map<WaveKind, Float32Array>;
  actions: {
    reset(): Promise<void>;
    next(): Promise<void>;
    appraise(r: 0 | 1): Promise<void>;
    optimize(): Promise<void>;
    play(kind: WaveKind): Promise<void>;
  };
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className: string,
  parent: HTMLElement,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = className;
  parent.appendChild(node);
  return node;
}

export function mountConsole(root: HTMLElement, deps: ConsoleDeps = {}): ConsoleHandle {
  const api = new ApiClient(deps.baseUrl ?? "", deps.fetchFn);
  const audioFactory: AudioContextFactory =
    deps.audioContextFactory ??
    (() => new (window as unknown as { AudioContext: new () => AudioContext }).AudioContext());
  const efeResolution = deps.efeResolution ?? 21;

  let state = initialState();
  const samples = new Map<WaveKind, Float32Array>();
  const sampleRates = new Map<WaveKind, number>();

  // -- structure -------------------------------------------------------
  const envCell = el("section", "cell environment", root);
  el("h2", "", envCell).textContent = "Environment";
  const envSelect = el("select", "env-select", envCell);
  for (const name of ["synthetic", "table1"]) {
    const opt = document.createElement("option");
    opt.value = name;
    opt.textContent = name;
    envSelect.appendChild(opt);
  }
  const seedInput = el("input", "seed-input", envCell);
  seedInput.type = "number";
  seedInput.value = "0";
  const resetBtn = el("button", "reset-btn", envCell);
  resetBtn.textContent = "reset";
  const statusLine = el("div", "status-line", envCell);

  const haCell = el("section", "cell hearing-aid", root);
  el("h2", "", haCell).textContent = "Hearing Aid";
  const waveRows = new Map<WaveKind, { canvas: HTMLCanvasElement; play: HTMLButtonElement }>();
  for (const kind of WAVEFORM_KINDS) {
    const row = el("div", `wave-row wave-${kind}`, haCell);
    el("span", "wave-label", row).textContent = kind;
    const canvas = el("canvas", "wave-canvas", row);
    canvas.width = 320;
    canvas.height = 60;
    const play = el("button", "play-btn", row);
    play.textContent = "play";
    waveRows.set(kind, { canvas, play });
  }
  const nextBtn = el("button", "next-btn", haCell);
  nextBtn.textContent = "NEXT";
  const controls = el("div", "appraisal-controls", haCell);
  const upBtn = el("button", "thumbs-up", controls);
  upBtn.textContent = "\u{1F44D}";
  const downBtn = el("button", "thumbs-down", controls);
  downBtn.textContent = "\u{1F44E}";
  const brainBtn = el("button", "brain-btn", controls);
  brainBtn.textContent = "\u{1F9E0}";
  const gainsLine = el("div", "gains-line", haCell);
  const kernelLine = el("div", "kernel-line", haCell);
  const historyList = el("ul", "history-list", haCell);

  const efeCell = el("section", "cell efe-agent", root);
  el("h2", "", efeCell).textContent = "EFE Agent";
  const heatmap = el("div", "heatmap", efeCell);

  const classifierCell = el("section", "cell classifier", root);
  el("h2", "", classifierCell).textContent = "Classifier";
  const beliefBox = el("div", "belief-box", classifierCell);
  const bfeBox = el("div", "bfe-box", classifierCell);

  const mutateButtons = [resetBtn, nextBtn, upBtn, downBtn, brainBtn];

  // -- rendering ---------------------------------------------------------
  function render(): void {
    statusLine.textContent = state.error
      ? `error: ${state.error}`
      : state.sessionId
        ? `session ${state.sessionId} (${state.environment}), frame ${state.frame?.frame_index ?? 0}`
        : "no session";
    renderGains(gainsLine, state);
    renderKernel(kernelLine, state);
    renderHistory(historyList, state);
    renderBelief(beliefBox, state);
    renderBfe(bfeBox, state);
    renderHeatmap(heatmap, state);
    for (const [kind, row] of waveRows) {
      renderWaveform(row.canvas, samples.get(kind) ?? new Float32Array(0));
    }
    const disable = state.busy;
    for (const btn of mutateButtons) btn.disabled = disable;
  }

  function setState(next: ConsoleState): void {
    state = next;
    render();
  }

  async function guarded(action: () => Promise<void>): Promise<void> {
    if (state.busy) return;
    setState({ ...state, busy: true });
    try {
      await action();
      setState({ ...state, busy: false });
    } catch (err) {
      const message =
        err instanceof ApiError ? `${err.status}: ${JSON.stringify(err.detail)}` : String(err);
      setState({ ...applyError(state, message), busy: false });
    }
  }

  async function refreshEfe(): Promise<void> {
    if (!state.sessionId) return;
    const payload = await api.efeField(state.sessionId, efeResolution);
    state = applyEfe(state, payload);
  }

  async function fetchWaveforms(): Promise<void> {
    if (!state.sessionId || !state.frame) return;
    for (const kind of WAVEFORM_KINDS) {
      const [buf, meta] = await Promise.all([
        api.waveform(state.sessionId, kind),
        api.waveformMeta(state.sessionId, kind),
      ]);
      samples.set(kind, decodePcm16(buf));
      sampleRates.set(kind, meta.sample_rate);
    }
  }

  const actions = {
    reset: () =>
      guarded(async () => {
        const environment = envSelect.value;
        const seed = Number(seedInput.value) || 0;
        const created = await api.createSession(environment, seed);
        samples.clear();
        sampleRates.clear();
        state = applySessionCreated(state, created.session_id, environment);
      }),
    next: () =>
      guarded(async () => {
        if (!state.sessionId) throw new Error("create a session first");
        const frame = await api.nextFrame(state.sessionId);
        state = applyFrame(state, frame);
        await fetchWaveforms();
        await refreshEfe();
      }),
    appraise: (r: 0 | 1) =>
      guarded(async () => {
        if (!state.sessionId) throw new Error("create a session first");
        const result = await api.appraise(state.sessionId, r);
        state = applyAppraisal(state, r, result.proposal);
        await refreshEfe();
      }),
    optimize: () =>
      guarded(async () => {
        if (!state.sessionId) throw new Error("create a session first");
        const result = await api.optimize(state.sessionId);
        state = applyKernel(state, result.sigma, result.l);
        await refreshEfe();
      }),
    play: async (kind: WaveKind) => {
      const data = samples.get(kind);
      const rate = sampleRates.get(kind) ?? 8000;
      if (data) playSamples(data, rate, audioFactory);
    },
  };

  resetBtn.addEventListener("click", () => void actions.reset());
  nextBtn.addEventListener("click", () => void actions.next());
  upBtn.addEventListener("click", () => void actions.appraise(1));
  downBtn.addEventListener("click", () => void actions.appraise(0));
  brainBtn.addEventListener("click", () => void actions.optimize());
  for (const [kind, row] of waveRows) {
    row.play.addEventListener("click", () => void actions.play(kind));
  }

  render();
  return { root, getState: () => state, samples, actions };
}
