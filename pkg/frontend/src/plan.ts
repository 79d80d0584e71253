/**
 * Export plan: the 26 backbone tensors (13 conv kernels + 13 biases) the
 * classifier imports, with their canonical VGG-16 shapes and names.
 *
 * Kernel shapes are in the classifier's outC x inC x kh x kw order; the
 * exporter converts from whatever layout its source uses.
 */

export interface PlanEntry {
  /** archive entry name, e.g. backbone.conv3_2.weight */
  name: string;
  /** tfjs/keras layer identifier, e.g. block3_conv2 */
  sourceLayer: string;
  shape: number[];
}

const STAGE_PLAN: number[][] = [
  [64, 64],
  [128, 128],
  [256, 256, 256],
  [512, 512, 512],
  [512, 512, 512],
];

export function exportPlan(): PlanEntry[] {
  const entries: PlanEntry[] = [];
  let channels = 3;
  STAGE_PLAN.forEach((stage, stageIdx) => {
    stage.forEach((width, convIdx) => {
      const base = `backbone.conv${stageIdx + 1}_${convIdx + 1}`;
      const sourceLayer = `block${stageIdx + 1}_conv${convIdx + 1}`;
      entries.push({
        name: `${base}.weight`,
        sourceLayer,
        shape: [width, channels, 3, 3],
      });
      entries.push({ name: `${base}.bias`, sourceLayer, shape: [width] });
      channels = width;
    });
  });
  return entries;
}

export const PLAN_ENTRY_COUNT = 26;
