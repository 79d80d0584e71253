/**
 * CCW archive writer.
 *
 * Layout (little-endian throughout):
 *   magic "CCBW" | version u32 | entry count u32
 *   per entry: name length u16, UTF-8 name, dtype u8 (0 = f32), ndim u8,
 *              each dim u32, raw f32 payload in row-major order
 */

export const MAGIC = 'CCBW';
export const FORMAT_VERSION = 1;
export const DTYPE_F32 = 0;

export interface ArchiveEntry {
  name: string;
  shape: number[];
  /** row-major values, length = product(shape) */
  data: Float32Array;
}

export function elementCount(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function encodeEntry(entry: ArchiveEntry): Buffer {
  const nameBytes = Buffer.from(entry.name, 'utf-8');
  if (nameBytes.length === 0 || nameBytes.length > 0xffff) {
    throw new Error(`invalid entry name ${JSON.stringify(entry.name)}`);
  }
  if (entry.shape.length === 0 || entry.shape.some((d) => d < 1)) {
    throw new Error(`entry ${entry.name}: invalid shape [${entry.shape}]`);
  }
  if (entry.data.length !== elementCount(entry.shape)) {
    throw new Error(
      `entry ${entry.name}: ${entry.data.length} values for shape [${entry.shape}]`,
    );
  }
  const header = Buffer.alloc(2 + nameBytes.length + 2 + 4 * entry.shape.length);
  let pos = header.writeUInt16LE(nameBytes.length, 0);
  pos += nameBytes.copy(header, pos);
  pos = header.writeUInt8(DTYPE_F32, pos);
  pos = header.writeUInt8(entry.shape.length, pos);
  for (const dim of entry.shape) {
    pos = header.writeUInt32LE(dim, pos);
  }
  const payload = Buffer.alloc(4 * entry.data.length);
  const view = new DataView(payload.buffer, payload.byteOffset, payload.length);
  for (let i = 0; i < entry.data.length; i++) {
    view.setFloat32(4 * i, entry.data[i], true);
  }
  return Buffer.concat([header, payload]);
}

/** Serialize entries in order into a single CCW buffer. */
export function encodeArchive(entries: ArchiveEntry[]): Buffer {
  const names = new Set<string>();
  for (const entry of entries) {
    if (names.has(entry.name)) {
      throw new Error(`duplicate entry name ${entry.name}`);
    }
    names.add(entry.name);
  }
  const header = Buffer.alloc(12);
  header.write(MAGIC, 0, 'ascii');
  header.writeUInt32LE(FORMAT_VERSION, 4);
  header.writeUInt32LE(entries.length, 8);
  return Buffer.concat([header, ...entries.map(encodeEntry)]);
}

/** Raw payload bytes of every entry concatenated in order (checksum input). */
export function concatPayloads(entries: ArchiveEntry[]): Buffer {
  const parts = entries.map((entry) => {
    const payload = Buffer.alloc(4 * entry.data.length);
    const view = new DataView(payload.buffer, payload.byteOffset, payload.length);
    for (let i = 0; i < entry.data.length; i++) {
      view.setFloat32(4 * i, entry.data[i], true);
    }
    return payload;
  });
  return Buffer.concat(parts);
}
