/** DOM rendering: every number on screen carries a data attribute with the
 * raw API value so the display is mechanically traceable to a payload
 * field. Canvas is used for waveform visuals only; numeric surfaces are
 * plain elements. */

import type { ConsoleState } from "./viewmodel.js";
import { gainsToCell, heatColor } from "./viewmodel.js";

function clear(el: HTMLElement): void {
  while (el.firstChild) el.removeChild(el.firstChild);
}

export function renderGains(el: HTMLElement, state: ConsoleState): void {
  const gains = state.displayedGains;
  el.dataset.us = gains ? String(gains[0]) : "";
  el.dataset.un = gains ? String(gains[1]) : "";
  el.textContent = gains
    ? `gains: speech ${gains[0].toFixed(3)}, noise ${gains[1].toFixed(3)}`
    : "gains: (no session)";
}

export function renderBelief(el: HTMLElement, state: ConsoleState): void {
  clear(el);
  if (!state.frame) return;
  state.frame.belief.forEach((p, i) => {
    const bar = document.createElement("div");
    bar.className = "belief-bar";
    bar.dataset.value = String(p);
    bar.dataset.index = String(i);
    bar.style.width = `${Math.round(p * 100)}%`;
    bar.title = `${state.frame!.model_names[i]}: ${p.toFixed(4)}`;
    el.appendChild(bar);
  });
}

export function renderBfe(el: HTMLElement, state: ConsoleState): void {
  clear(el);
  if (!state.frame) return;
  const finite = state.frame.bfe.filter((v): v is number => v !== null);
  const max = finite.length ? Math.max(...finite.map(Math.abs)) : 1;
  state.frame.bfe.forEach((score, i) => {
    const row = document.createElement("div");
    row.className = "bfe-row" + (i === state.frame!.map_index ? " map" : "");
    row.dataset.value = score === null ? "" : String(score);
    row.dataset.model = state.frame!.model_names[i];
    const label = document.createElement("span");
    label.textContent = state.frame!.model_names[i];
    const bar = document.createElement("div");
    bar.className = "bfe-bar";
    bar.style.width = score === null ? "0%" : `${Math.round((Math.abs(score) / max) * 100)}%`;
    const value = document.createElement("span");
    value.className = "bfe-value";
    value.textContent = score === null ? "failed" : score.toFixed(2);
    row.append(label, bar, value);
    el.appendChild(row);
  });
}

export function renderHeatmap(el: HTMLElement, state: ConsoleState): void {
  clear(el);
  const efe = state.efe;
  if (!efe || !state.heatScale) return;
  const res = efe.resolution;
  el.style.gridTemplateColumns = `repeat(${res}, 1fr)`;
  el.dataset.resolution = String(res);
  const marker = gainsToCell(efe.gains, efe.bounds, res);
  for (let row = 0; row < res; row++) {
    for (let col = 0; col < res; col++) {
      const idx = row * res + col;
      const cell = document.createElement("div");
      cell.className = "heat-cell";
      cell.dataset.value = String(efe.efe[idx]);
      cell.style.backgroundColor = heatColor(efe.efe[idx], state.heatScale);
      if (row === marker.row && col === marker.col) {
        cell.classList.add("current-gains");
      }
      el.appendChild(cell);
    }
  }
}

export function renderHistory(el: HTMLElement, state: ConsoleState): void {
  clear(el);
  for (const entry of state.history) {
    const row = document.createElement("li");
    row.dataset.trial = String(entry.trial);
    row.dataset.response = String(entry.response);
    row.textContent =
      `#${entry.trial} ${entry.response === 1 ? "+" : "-"} at ` +
      `(${entry.gains.map((g) => g.toFixed(2)).join(", ")}) -> ` +
      `(${entry.proposal.map((g) => g.toFixed(2)).join(", ")})`;
    el.appendChild(row);
  }
}

export function renderKernel(el: HTMLElement, state: ConsoleState): void {
  if (!state.kernel) {
    el.textContent = "";
    return;
  }
  el.dataset.sigma = String(state.kernel.sigma);
  el.dataset.l = String(state.kernel.l);
  el.textContent = `kernel: sigma ${state.kernel.sigma.toFixed(3)}, l ${state.kernel.l.toFixed(3)}`;
}

export function renderWaveform(canvas: HTMLCanvasElement, samples: Float32Array): void {
  canvas.dataset.length = String(samples.length);
  let ctx: CanvasRenderingContext2D | null = null;
  try {
    ctx = canvas.getContext("2d");
  } catch {
    return; // canvas 2D unavailable (headless test environment)
  }
  if (!ctx || samples.length === 0) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.beginPath();
  const mid = height / 2;
  for (let i = 0; i < samples.length; i++) {
    const x = (i / (samples.length - 1 || 1)) * width;
    const y = mid - samples[i] * mid * 0.95;
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  }
  ctx.strokeStyle = "#2c7";
  ctx.stroke();
}
