/** Binary feature-file ("FEA1") decoding. */

export interface FeatureMatrix {
  frames: number;
  channels: number;
  /** Row-major frames x channels, 32-bit values. */
  data: Float32Array;
}

export function decodeFea1(buf: Buffer): FeatureMatrix {
  if (buf.length < 12 || buf.toString("ascii", 0, 4) !== "FEA1") {
    throw new Error(`bad feature-file magic: ${buf.subarray(0, 4).toString("ascii")}`);
  }
  const frames = buf.readUInt32LE(4);
  const channels = buf.readUInt32LE(8);
  const expected = 12 + 4 * frames * channels;
  if (buf.length !== expected) {
    throw new Error(`feature file has ${buf.length} bytes, expected ${expected}`);
  }
  const data = new Float32Array(frames * channels);
  for (let i = 0; i < data.length; i++) {
    data[i] = buf.readFloatLE(12 + 4 * i);
  }
  return { frames, channels, data };
}
