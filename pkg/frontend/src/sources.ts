/**
 * Weight sources. A source yields, per conv layer, the kernel in the
 * HWIO layout (kh x kw x inC x outC, as tfjs/keras store it) plus the
 * bias vector. Layout conversion to the archive order happens in the
 * exporter, never here.
 */

import * as fs from 'fs';
import * as path from 'path';

import { elementCount } from './ccw';
import { PlanEntry, exportPlan } from './plan';

export class SourceUnavailableError extends Error {}
export class PlanMismatchError extends Error {}

export interface LayerWeights {
  /** kh x kw x inC x outC, row-major */
  kernel: Float32Array;
  kernelShape: number[];
  bias: Float32Array;
}

export type WeightSource = {
  describe: string;
  layer(sourceLayer: string, kernelShapeHwio: number[]): LayerWeights;
};

/** Deterministic 32-bit PRNG (mulberry32) with a Box-Muller gaussian. */
export function gaussianGenerator(seed: number): () => number {
  let state = seed >>> 0;
  const uniform = (): number => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
  let spare: number | null = null;
  return () => {
    if (spare !== null) {
      const value = spare;
      spare = null;
      return value;
    }
    let u = 0;
    let v = 0;
    do {
      u = uniform();
    } while (u === 0);
    v = uniform();
    const radius = Math.sqrt(-2.0 * Math.log(u));
    spare = radius * Math.sin(2.0 * Math.PI * v);
    return radius * Math.cos(2.0 * Math.PI * v);
  };
}

function layerSeed(seed: number, name: string): number {
  let hash = (0x811c9dc5 ^ seed) >>> 0; // FNV-1a folded with the base seed
  for (let i = 0; i < name.length; i++) {
    hash = Math.imul(hash ^ name.charCodeAt(i), 0x01000193) >>> 0;
  }
  return hash;
}

/**
 * Seeded random weights with realistic fan-in scaling. Stands in for a
 * pretrained release when none is on disk (tests, offline runs); the
 * archive it produces is byte-identical for a given seed. Each layer is
 * derived from its own sub-seed, so repeated queries for one layer
 * always return the same tensors.
 */
export function syntheticSource(seed: number): WeightSource {
  return {
    describe: `synthetic:${seed}`,
    layer(sourceLayer: string, kernelShapeHwio: number[]): LayerWeights {
      const next = gaussianGenerator(layerSeed(seed, sourceLayer));
      const [kh, kw, inC, outC] = kernelShapeHwio;
      const std = Math.sqrt(2.0 / (kh * kw * inC));
      const kernel = new Float32Array(kh * kw * inC * outC);
      for (let i = 0; i < kernel.length; i++) {
        kernel[i] = next() * std;
      }
      const bias = new Float32Array(outC);
      for (let i = 0; i < bias.length; i++) {
        bias[i] = next() * 0.01;
      }
      return { kernel, kernelShape: kernelShapeHwio, bias };
    },
  };
}

interface TfjsWeightSpec {
  name: string;
  shape: number[];
  dtype: string;
}

interface TfjsManifestGroup {
  paths: string[];
  weights: TfjsWeightSpec[];
}

/**
 * Pretrained weights from a TFJS layers-model directory (model.json +
 * binary shards), the format `tensorflowjs_converter` emits for Keras
 * VGG-16. Kernels there are HWIO; names look like block1_conv1/kernel.
 */
export function tfjsLayersSource(modelJsonPath: string): WeightSource {
  if (!fs.existsSync(modelJsonPath)) {
    throw new SourceUnavailableError(
      `no pretrained weights at ${modelJsonPath}; supply a TFJS layers-format ` +
        `VGG-16 (model.json + shards) or use --synthetic <seed>`,
    );
  }
  const modelDir = path.dirname(modelJsonPath);
  const manifest = JSON.parse(fs.readFileSync(modelJsonPath, 'utf-8'));
  const groups: TfjsManifestGroup[] = manifest.weightsManifest;
  if (!groups) {
    throw new PlanMismatchError(`${modelJsonPath} has no weightsManifest`);
  }
  const tensors = new Map<string, { shape: number[]; data: Float32Array }>();
  for (const group of groups) {
    const shard = Buffer.concat(
      group.paths.map((p) => fs.readFileSync(path.join(modelDir, p))),
    );
    let offset = 0;
    for (const weight of group.weights) {
      const n = elementCount(weight.shape);
      if (weight.dtype !== 'float32') {
        throw new PlanMismatchError(
          `${weight.name}: expected float32, found ${weight.dtype}`,
        );
      }
      const view = new DataView(shard.buffer, shard.byteOffset + offset, 4 * n);
      const data = new Float32Array(n);
      for (let i = 0; i < n; i++) {
        data[i] = view.getFloat32(4 * i, true);
      }
      tensors.set(weight.name, { shape: weight.shape, data });
      offset += 4 * n;
    }
  }

  const lookup = (name: string): { shape: number[]; data: Float32Array } => {
    const tensor = tensors.get(name);
    if (!tensor) {
      throw new PlanMismatchError(`source has no tensor named ${name}`);
    }
    return tensor;
  };

  return {
    describe: `tfjs:${modelJsonPath}`,
    layer(sourceLayer: string, kernelShapeHwio: number[]): LayerWeights {
      const kernel = lookup(`${sourceLayer}/kernel`);
      if (kernel.shape.join('x') !== kernelShapeHwio.join('x')) {
        throw new PlanMismatchError(
          `${sourceLayer}/kernel: expected ${kernelShapeHwio.join('x')}, ` +
            `found ${kernel.shape.join('x')}`,
        );
      }
      const bias = lookup(`${sourceLayer}/bias`);
      return { kernel: kernel.data, kernelShape: kernel.shape, bias: bias.data };
    },
  };
}

export function planForSource(): PlanEntry[] {
  return exportPlan();
}
