/** Typed client for the console service. The UI never computes inference
 * quantities itself; everything rendered comes from these payloads. */

export interface FramePayload {
  frame_index: number;
  map_index: number;
  belief: number[];
  bfe: (number | null)[];
  model_names: string[];
  gains: number[];
  degraded: boolean;
  waveforms: Record<string, string>;
}

export interface EfePayload {
  resolution: number;
  bounds: number[][];
  efe: number[];
  utility_drive: number[];
  info_gain: number[];
  gains: number[];
  context: number;
}

export interface BfePayload {
  bfe: (number | null)[];
  model_names: string[];
  map_index: number;
}

export interface WaveformMeta {
  sample_rate: number;
  length: number;
  kind: string;
  encoding: string;
}

export interface OptimizeResult {
  sigma: number;
  l: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public detail: unknown) {
    super(`request failed with status ${status}`);
  }
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) {
      let detail: unknown = null;
      try {
        detail = await resp.json();
      } catch {
        /* body may be empty */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  createSession(environment: string, seed: number): Promise<{ session_id: string }> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ environment, seed }),
    });
  }

  nextFrame(id: string): Promise<FramePayload> {
    return this.request(`/sessions/${id}/next`, { method: "POST" });
  }

  appraise(id: string, r: 0 | 1): Promise<{ proposal: number[] }> {
    return this.request(`/sessions/${id}/appraisal`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ r }),
    });
  }

  optimize(id: string): Promise<OptimizeResult> {
    return this.request(`/sessions/${id}/optimize`, { method: "POST" });
  }

  efeField(id: string, resolution: number): Promise<EfePayload> {
    return this.request(`/sessions/${id}/efe?resolution=${resolution}`);
  }

  bfeScores(id: string): Promise<BfePayload> {
    return this.request(`/sessions/${id}/bfe`);
  }

  async waveform(id: string, kind: string): Promise<ArrayBuffer> {
    const resp = await this.fetchFn(`${this.base}/sessions/${id}/waveforms/${kind}`);
    if (!resp.ok) throw new ApiError(resp.status, null);
    return await resp.arrayBuffer();
  }

  waveformMeta(id: string, kind: string): Promise<WaveformMeta> {
    return this.request(`/sessions/${id}/waveforms/${kind}/meta`);
  }
}
