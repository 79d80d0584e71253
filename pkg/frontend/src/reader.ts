/**
 * Independent minimal CCW reader used by `verify`.
 *
 * Deliberately shares no code with the writer: it walks the byte layout
 * from scratch so a bug in encodeArchive cannot hide itself.
 */

import { ArchiveEntry } from './ccw';

export class CcwReadError extends Error {}

export function decodeArchive(buffer: Buffer): ArchiveEntry[] {
  let pos = 0;
  const need = (n: number, what: string): void => {
    if (pos + n > buffer.length) {
      throw new CcwReadError(
        `truncated archive: needed ${n} bytes for ${what} at offset ${pos}, ` +
          `file has ${buffer.length}`,
      );
    }
  };
  need(4, 'magic');
  const magic = buffer.toString('ascii', 0, 4);
  pos = 4;
  if (magic !== 'CCBW') {
    throw new CcwReadError(`bad magic ${JSON.stringify(magic)}, expected "CCBW"`);
  }
  need(8, 'header');
  const version = buffer.readUInt32LE(pos);
  const count = buffer.readUInt32LE(pos + 4);
  pos += 8;
  if (version !== 1) {
    throw new CcwReadError(`unknown format version ${version}`);
  }
  const entries: ArchiveEntry[] = [];
  const seen = new Set<string>();
  for (let e = 0; e < count; e++) {
    need(2, 'name length');
    const nameLen = buffer.readUInt16LE(pos);
    pos += 2;
    need(nameLen, 'name');
    const name = buffer.toString('utf-8', pos, pos + nameLen);
    pos += nameLen;
    need(2, 'dtype/ndim');
    const dtype = buffer.readUInt8(pos);
    const ndim = buffer.readUInt8(pos + 1);
    pos += 2;
    if (dtype !== 0) {
      throw new CcwReadError(`entry ${name}: unsupported dtype code ${dtype}`);
    }
    const shape: number[] = [];
    need(4 * ndim, 'dims');
    for (let d = 0; d < ndim; d++) {
      shape.push(buffer.readUInt32LE(pos));
      pos += 4;
    }
    const n = shape.reduce((a, b) => a * b, 1);
    need(4 * n, `payload of ${name}`);
    const view = new DataView(buffer.buffer, buffer.byteOffset + pos, 4 * n);
    const data = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      data[i] = view.getFloat32(4 * i, true);
    }
    pos += 4 * n;
    if (seen.has(name)) {
      throw new CcwReadError(`duplicate entry name ${name}`);
    }
    seen.add(name);
    entries.push({ name, shape, data });
  }
  if (pos !== buffer.length) {
    throw new CcwReadError(`${buffer.length - pos} trailing bytes after ${count} entries`);
  }
  return entries;
}
