/**
 * Field snapshot (.fld) reader/writer.
 *
 * Layout (little-endian, 32-byte header):
 *   offset 0   6 bytes  magic "PWFLD1"
 *   offset 6  12 bytes  grid points nx, ny, nz (uint32 x3)
 *   offset 18  8 bytes  sample time (float64)
 *   offset 26  6 bytes  zero padding
 *   offset 32  ...      float64 pairs (re, im), x varying fastest
 */

export const SNAPSHOT_MAGIC = "PWFLD1";
export const HEADER_SIZE = 32;

export interface Snapshot {
  nx: number;
  ny: number;
  nz: number;
  time: number;
  /** interleaved [re, im] pairs in x-fastest order, length 2*nx*ny*nz */
  data: Float64Array;
}

export function decodeSnapshot(buf: Buffer, name = "<snapshot>"): Snapshot {
  if (buf.length < HEADER_SIZE) {
    throw new Error(`${name}: truncated snapshot header (${buf.length} bytes)`);
  }
  const magic = buf.toString("latin1", 0, 6);
  if (magic !== SNAPSHOT_MAGIC) {
    throw new Error(`${name}: bad snapshot magic ${JSON.stringify(magic)}`);
  }
  const nx = buf.readUInt32LE(6);
  const ny = buf.readUInt32LE(10);
  const nz = buf.readUInt32LE(14);
  const time = buf.readDoubleLE(18);
  const count = nx * ny * nz * 2;
  const body = buf.subarray(HEADER_SIZE);
  if (body.length !== count * 8) {
    throw new Error(
      `${name}: snapshot body has ${body.length} bytes, expected ${count * 8}`
    );
  }
  const data = new Float64Array(count);
  for (let i = 0; i < count; i++) data[i] = body.readDoubleLE(i * 8);
  return { nx, ny, nz, time, data };
}

export function encodeSnapshot(snap: Snapshot): Buffer {
  const header = Buffer.alloc(HEADER_SIZE);
  header.write(SNAPSHOT_MAGIC, 0, "latin1");
  header.writeUInt32LE(snap.nx, 6);
  header.writeUInt32LE(snap.ny, 10);
  header.writeUInt32LE(snap.nz, 14);
  header.writeDoubleLE(snap.time, 18);
  const body = Buffer.alloc(snap.data.length * 8);
  for (let i = 0; i < snap.data.length; i++) body.writeDoubleLE(snap.data[i], i * 8);
  return Buffer.concat([header, body]);
}

/** |psi| over a 2-D slice; axis 0/1/2 = x/y/z held at the given index. */
export function sliceMagnitude(
  snap: Snapshot,
  axis: 0 | 1 | 2,
  index: number
): { width: number; height: number; values: Float64Array } {
  const { nx, ny, nz, data } = snap;
  const dims = [nx, ny, nz];
  if (index < 0 || index >= dims[axis]) {
    throw new Error(`slice index ${index} out of bounds for axis size ${dims[axis]}`);
  }
  // x-fastest storage: flat = ix + nx * (iy + ny * iz)
  const at = (ix: number, iy: number, iz: number) => {
    const flat = ix + nx * (iy + ny * iz);
    return Math.hypot(data[2 * flat], data[2 * flat + 1]);
  };
  const [aU, aV] = axis === 0 ? [1, 2] : axis === 1 ? [0, 2] : [0, 1];
  const width = dims[aU];
  const height = dims[aV];
  const values = new Float64Array(width * height);
  const coord: [number, number, number] = [0, 0, 0];
  coord[axis] = index;
  for (let v = 0; v < height; v++) {
    for (let u = 0; u < width; u++) {
      coord[aU] = u;
      coord[aV] = v;
      values[v * width + u] = at(coord[0], coord[1], coord[2]);
    }
  }
  return { width, height, values };
}
