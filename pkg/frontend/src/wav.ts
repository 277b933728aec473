/** Mono 16-bit PCM RIFF/WAVE encode/decode. */

export interface DecodedWav {
  samples: Float64Array;
  sampleRate: number;
}

const PCM16_SCALE = 32768;

export function encodeWavPcm16(samples: ArrayLike<number>, sampleRate: number): Buffer {
  const dataBytes = samples.length * 2;
  const buf = Buffer.alloc(44 + dataBytes);
  buf.write("RIFF", 0, "ascii");
  buf.writeUInt32LE(36 + dataBytes, 4);
  buf.write("WAVE", 8, "ascii");
  buf.write("fmt ", 12, "ascii");
  buf.writeUInt32LE(16, 16); // PCM fmt chunk size
  buf.writeUInt16LE(1, 20); // PCM
  buf.writeUInt16LE(1, 22); // mono
  buf.writeUInt32LE(sampleRate, 24);
  buf.writeUInt32LE(sampleRate * 2, 28);
  buf.writeUInt16LE(2, 32); // block align
  buf.writeUInt16LE(16, 34); // bits per sample
  buf.write("data", 36, "ascii");
  buf.writeUInt32LE(dataBytes, 40);
  for (let i = 0; i < samples.length; i++) {
    const clamped = Math.max(-32768, Math.min(32767, Math.round(samples[i] * PCM16_SCALE)));
    buf.writeInt16LE(clamped, 44 + 2 * i);
  }
  return buf;
}

export function decodeWavPcm16(buf: Buffer): DecodedWav {
  if (buf.length < 12 || buf.toString("ascii", 0, 4) !== "RIFF" || buf.toString("ascii", 8, 12) !== "WAVE") {
    throw new Error("not a RIFF/WAVE buffer");
  }
  let offset = 12;
  let sampleRate = 0;
  let channels = 0;
  let bits = 0;
  let data: Buffer | null = null;
  while (offset + 8 <= buf.length) {
    const id = buf.toString("ascii", offset, offset + 4);
    const size = buf.readUInt32LE(offset + 4);
    const body = offset + 8;
    if (id === "fmt ") {
      const format = buf.readUInt16LE(body);
      if (format !== 1) throw new Error(`expected PCM (format 1), got format ${format}`);
      channels = buf.readUInt16LE(body + 2);
      sampleRate = buf.readUInt32LE(body + 4);
      bits = buf.readUInt16LE(body + 14);
    } else if (id === "data") {
      data = buf.subarray(body, body + size);
    }
    offset = body + size + (size % 2);
  }
  if (data === null || sampleRate === 0) throw new Error("missing fmt/data chunk");
  if (channels !== 1) throw new Error(`expected mono audio, got ${channels} channels`);
  if (bits !== 16) throw new Error(`expected 16-bit PCM, got ${bits}-bit`);
  const samples = new Float64Array(data.length >> 1);
  for (let i = 0; i < samples.length; i++) {
    samples[i] = data.readInt16LE(2 * i) / PCM16_SCALE;
  }
  return { samples, sampleRate };
}
