/**
 * Archive verification: re-read with the independent reader, check every
 * entry against the export plan, and recompute the payload checksum
 * against the sidecar written at export time.
 */

import * as fs from 'fs';
import * as zlib from 'zlib';

import { ArchiveEntry, concatPayloads } from './ccw';
import { exportPlan } from './plan';
import { decodeArchive } from './reader';

export interface VerifyResult {
  ok: boolean;
  problems: string[];
  crc32: string;
  entryCount: number;
}

export function verifyEntries(entries: ArchiveEntry[]): string[] {
  const problems: string[] = [];
  const byName = new Map(entries.map((e) => [e.name, e]));
  for (const planned of exportPlan()) {
    const entry = byName.get(planned.name);
    if (!entry) {
      problems.push(`missing entry ${planned.name}`);
      continue;
    }
    if (entry.shape.join('x') !== planned.shape.join('x')) {
      problems.push(
        `entry ${planned.name}: shape ${entry.shape.join('x')}, ` +
          `expected ${planned.shape.join('x')}`,
      );
    }
  }
  for (const entry of entries) {
    if (!exportPlan().some((p) => p.name === entry.name)) {
      problems.push(`unexpected entry ${entry.name}`);
    }
  }
  return problems;
}

export function verifyArchive(archivePath: string): VerifyResult {
  const problems: string[] = [];
  let entries: ArchiveEntry[] = [];
  try {
    entries = decodeArchive(fs.readFileSync(archivePath));
  } catch (err) {
    return {
      ok: false,
      problems: [`unreadable archive: ${(err as Error).message}`],
      crc32: '',
      entryCount: 0,
    };
  }
  problems.push(...verifyEntries(entries));
  const crc32 = zlib.crc32(concatPayloads(entries)).toString(16).padStart(8, '0');

  const summaryPath = `${archivePath}.summary.json`;
  if (fs.existsSync(summaryPath)) {
    const summary = JSON.parse(fs.readFileSync(summaryPath, 'utf-8'));
    if (summary.crc32 !== crc32) {
      problems.push(
        `checksum mismatch: archive payloads hash to ${crc32}, ` +
          `summary recorded ${summary.crc32}`,
      );
    }
  } else {
    problems.push(`missing checksum sidecar ${summaryPath}`);
  }
  return { ok: problems.length === 0, problems, crc32, entryCount: entries.length };
}
