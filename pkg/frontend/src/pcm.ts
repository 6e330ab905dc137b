/** Raw-PCM handling: the service delivers 16-bit little-endian mono
 * samples; playback goes straight through the browser audio pipeline at
 * the sidecar's sample rate, no transcoding. */

export function decodePcm16(buffer: ArrayBuffer): Float32Array {
  const view = new DataView(buffer);
  const n = Math.floor(buffer.byteLength / 2);
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    out[i] = view.getInt16(2 * i, true) / 32768;
  }
  return out;
}

export interface AudioContextLike {
  createBuffer(channels: number, length: number, sampleRate: number): AudioBuffer;
  createBufferSource(): AudioBufferSourceNode;
  destination: AudioDestinationNode;
}

export type AudioContextFactory = () => AudioContextLike;

export function playSamples(
  samples: Float32Array,
  sampleRate: number,
  contextFactory: AudioContextFactory,
): void {
  if (samples.length === 0) return;
  const ctx = contextFactory();
  const buffer = ctx.createBuffer(1, samples.length, sampleRate);
  buffer.copyToChannel(new Float32Array(samples), 0);
  const source = ctx.createBufferSource();
  source.buffer = buffer;
  source.connect(ctx.destination);
  source.start();
}

export function rms(samples: Float32Array): number {
  if (samples.length === 0) return 0;
  let acc = 0;
  for (const s of samples) acc += s * s;
  return Math.sqrt(acc / samples.length);
}
