/**
 * Export pipeline: pull backbone weights from a source, convert kernel
 * layout, write the CCW archive plus a checksum sidecar and an
 * activation probe.
 *
 * The probe pairs a fixed 224x224x3 test pattern with the first conv
 * layer's response computed by tfjs from the *source-layout* kernel, so
 * the consuming classifier can detect a transposed-kernel export end to
 * end.
 */

import * as fs from 'fs';
import * as zlib from 'zlib';

import * as tf from '@tensorflow/tfjs';

import { ArchiveEntry, concatPayloads, encodeArchive } from './ccw';
import { exportPlan } from './plan';
import { WeightSource, gaussianGenerator } from './sources';

export interface ExportSummary {
  source: string;
  entries: { name: string; shape: number[] }[];
  crc32: string;
  archiveBytes: number;
}

/** kh x kw x inC x outC (HWIO) -> outC x inC x kh x kw, both row-major. */
export function hwioToOihw(kernel: Float32Array, shape: number[]): Float32Array {
  const [kh, kw, inC, outC] = shape;
  const out = new Float32Array(kernel.length);
  for (let ki = 0; ki < kh; ki++) {
    for (let kj = 0; kj < kw; kj++) {
      for (let ci = 0; ci < inC; ci++) {
        const srcBase = ((ki * kw + kj) * inC + ci) * outC;
        for (let co = 0; co < outC; co++) {
          out[((co * inC + ci) * kh + ki) * kw + kj] = kernel[srcBase + co];
        }
      }
    }
  }
  return out;
}

export function buildEntries(source: WeightSource): ArchiveEntry[] {
  const entries: ArchiveEntry[] = [];
  for (const planned of exportPlan()) {
    if (planned.name.endsWith('.bias')) {
      continue; // handled together with the matching kernel below
    }
    const [outC, inC, kh, kw] = planned.shape;
    const layer = source.layer(planned.sourceLayer, [kh, kw, inC, outC]);
    if (layer.bias.length !== outC) {
      throw new Error(
        `${planned.sourceLayer}: bias has ${layer.bias.length} values, expected ${outC}`,
      );
    }
    entries.push({
      name: planned.name,
      shape: planned.shape,
      data: hwioToOihw(layer.kernel, layer.kernelShape),
    });
    entries.push({
      name: planned.name.replace(/\.weight$/, '.bias'),
      shape: [outC],
      data: layer.bias,
    });
  }
  return entries;
}

export function payloadChecksum(entries: ArchiveEntry[]): string {
  return zlib.crc32(concatPayloads(entries)).toString(16).padStart(8, '0');
}

const PROBE_SEED = 0x5eed;

/** Fixed test pattern, 3 x 224 x 224 in the classifier's CHW order. */
export function probePattern(): Float32Array {
  const next = gaussianGenerator(PROBE_SEED);
  const data = new Float32Array(3 * 224 * 224);
  for (let i = 0; i < data.length; i++) {
    data[i] = next();
  }
  return data;
}

function chwToHwc(data: Float32Array, c: number, h: number, w: number): Float32Array {
  const out = new Float32Array(data.length);
  for (let ci = 0; ci < c; ci++) {
    for (let y = 0; y < h; y++) {
      for (let x = 0; x < w; x++) {
        out[(y * w + x) * c + ci] = data[(ci * h + y) * w + x];
      }
    }
  }
  return out;
}

function hwcToChw(data: Float32Array, h: number, w: number, c: number): Float32Array {
  const out = new Float32Array(data.length);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      for (let ci = 0; ci < c; ci++) {
        out[(ci * h + y) * w + x] = data[(y * w + x) * c + ci];
      }
    }
  }
  return out;
}

/**
 * conv1_1 response to the probe pattern, computed in this ecosystem
 * (tfjs conv2d, stride 1, 'same' padding) from the source-layout kernel.
 */
export function probeActivation(source: WeightSource): Float32Array {
  const layer = source.layer('block1_conv1', [3, 3, 3, 64]);
  const pattern = probePattern();
  const result = tf.tidy(() => {
    const input = tf.tensor4d(chwToHwc(pattern, 3, 224, 224), [1, 224, 224, 3]);
    const kernel = tf.tensor4d(layer.kernel, [3, 3, 3, 64]);
    const bias = tf.tensor1d(layer.bias);
    return tf.conv2d(input, kernel, 1, 'same').add(bias);
  });
  const hwc = result.dataSync() as Float32Array;
  result.dispose();
  return hwcToChw(hwc, 224, 224, 64);
}

export function exportArchive(outPath: string, source: WeightSource): ExportSummary {
  const entries = buildEntries(source);
  const archive = encodeArchive(entries);
  fs.writeFileSync(outPath, archive);

  const probeEntries: ArchiveEntry[] = [
    { name: 'probe.input', shape: [3, 224, 224], data: probePattern() },
    { name: 'probe.conv1_1', shape: [64, 224, 224], data: probeActivation(source) },
  ];
  fs.writeFileSync(`${outPath}.probe.ccw`, encodeArchive(probeEntries));

  const summary: ExportSummary = {
    source: source.describe,
    entries: entries.map((e) => ({ name: e.name, shape: e.shape })),
    crc32: payloadChecksum(entries),
    archiveBytes: archive.length,
  };
  fs.writeFileSync(`${outPath}.summary.json`, JSON.stringify(summary, null, 2) + '\n');
  return summary;
}
