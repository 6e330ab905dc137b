/** In-memory stand-in for the console service, mirroring its RESTcontract
 * with deterministic payloads so flow tests can assert displayed values
 * against known fields. */

import type { FetchLike } from "../src/api.js";

export interface FakeBackend {
  fetchFn: FetchLike;
  frames: number;
  appraisals: { r: number }[];
  optimizeCalls: number;
  lastProposal: number[];
  efeVersion: number;
  efePayload(resolution: number): Record<string, unknown>;
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export function makeFakeBackend(): FakeBackend {
  const state = {
    frames: 0,
    appraisals: [] as { r: number }[],
    optimizeCalls: 0,
    lastProposal: [1.0, 1.0],
    efeVersion: 0,
  };

  const modelNames = ["context-1 (ar2)", "context-2 (ar1)"];

  function framePayload() {
    return {
      frame_index: state.frames,
      map_index: state.frames % 2,
      belief: state.frames % 2 === 0 ? [0.8, 0.2] : [0.3, 0.7],
      bfe: [120.5 + state.frames, 130.25 - state.frames],
      model_names: modelNames,
      gains: state.lastProposal,
      degraded: false,
      waveforms: Object.fromEntries(
        ["input", "speech", "noise", "output"].map((k) => [
          k,
          `/sessions/fake/waveforms/${k}`,
        ]),
      ),
    };
  }

  function efePayload(resolution: number) {
    const n = resolution * resolution;
    const efe = Array.from({ length: n }, (_, i) => 0.5 + 0.001 * i + 0.1 * state.efeVersion);
    return {
      resolution,
      bounds: [
        [0, 1],
        [0, 1],
      ],
      efe,
      utility_drive: efe.map((v) => -v / 2),
      info_gain: efe.map((v) => -v / 2),
      gains: state.lastProposal,
      context: 0,
    };
  }

  function pcmBytes(): ArrayBuffer {
    const samples = new Int16Array([0, 8192, -8192, 16384, -32768, 32767]);
    return samples.buffer.slice(0);
  }

  const fetchFn: FetchLike = async (input, init) => {
    const method = init?.method ?? "GET";
    const url = new URL(input, "http://fake");
    const path = url.pathname;
    if (method === "POST" && path === "/sessions") {
      return jsonResponse({ session_id: "fake" }, 201);
    }
    if (method === "POST" && path === "/sessions/fake/next") {
      state.frames += 1;
      return jsonResponse(framePayload());
    }
    if (method === "POST" && path === "/sessions/fake/appraisal") {
      const body = JSON.parse(String(init?.body ?? "{}"));
      if (state.frames === 0) return jsonResponse({ detail: "no frame" }, 409);
      state.appraisals.push({ r: body.r });
      state.lastProposal = [
        0.05 * (state.appraisals.length + 1),
        1 - 0.05 * (state.appraisals.length + 1),
      ];
      state.efeVersion += 1;
      return jsonResponse({ proposal: state.lastProposal });
    }
    if (method === "POST" && path === "/sessions/fake/optimize") {
      const classes = new Set(state.appraisals.map((a) => a.r));
      if (classes.size < 2) {
        return jsonResponse({ detail: "single-class dataset" }, 409);
      }
      state.optimizeCalls += 1;
      return jsonResponse({ sigma: 0.913, l: 0.171 });
    }
    if (method === "GET" && path === "/sessions/fake/efe") {
      const resolution = Number(url.searchParams.get("resolution") ?? "21");
      return jsonResponse(efePayload(resolution));
    }
    if (method === "GET" && path === "/sessions/fake/bfe") {
      const frame = framePayload();
      return jsonResponse({
        bfe: frame.bfe,
        model_names: modelNames,
        map_index: frame.map_index,
      });
    }
    if (method === "GET" && /\/waveforms\/\w+\/meta$/.test(path)) {
      const kind = path.split("/").slice(-2)[0];
      return jsonResponse({ sample_rate: 8000, length: 6, kind, encoding: "pcm16-le" });
    }
    if (method === "GET" && /\/waveforms\/\w+$/.test(path)) {
      return new Response(pcmBytes(), {
        status: 200,
        headers: {
          "content-type": "application/octet-stream",
          "x-sample-rate": "8000",
          "x-length": "6",
        },
      });
    }
    return jsonResponse({ detail: "not found" }, 404);
  };

  return {
    fetchFn,
    get frames() {
      return state.frames;
    },
    get appraisals() {
      return state.appraisals;
    },
    get optimizeCalls() {
      return state.optimizeCalls;
    },
    get lastProposal() {
      return state.lastProposal;
    },
    get efeVersion() {
      return state.efeVersion;
    },
    efePayload,
  };
}

export class FakeAudioContext {
  static created: FakeAudioContext[] = [];
  buffers: { channels: number; length: number; sampleRate: number; data: Float32Array }[] = [];
  started = 0;
  destination = {} as AudioDestinationNode;

  constructor() {
    FakeAudioContext.created.push(this);
  }

  createBuffer(channels: number, length: number, sampleRate: number): AudioBuffer {
    const record = { channels, length, sampleRate, data: new Float32Array(length) };
    this.buffers.push(record);
    return {
      copyToChannel: (src: Float32Array) => record.data.set(src),
      numberOfChannels: channels,
      length,
      sampleRate,
    } as unknown as AudioBuffer;
  }

  createBufferSource(): AudioBufferSourceNode {
    const ctx = this;
    return {
      buffer: null,
      connect() {},
      start() {
        ctx.started += 1;
      },
    } as unknown as AudioBufferSourceNode;
  }
}
