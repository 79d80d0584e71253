/**
 * Usage:
 *   node dist/cli.js export --out <path> (--from-tfjs <model.json> | --synthetic <seed>)
 *   node dist/cli.js verify <path>
 */

import { exportArchive } from './exporter';
import { SourceUnavailableError, syntheticSource, tfjsLayersSource } from './sources';
import { verifyArchive } from './verify';

function flagValue(argv: string[], flag: string): string | undefined {
  const idx = argv.indexOf(flag);
  return idx >= 0 && idx + 1 < argv.length ? argv[idx + 1] : undefined;
}

function runExport(argv: string[]): number {
  const out = flagValue(argv, '--out');
  if (!out) {
    console.error('export: --out <path> is required');
    return 2;
  }
  const tfjsPath = flagValue(argv, '--from-tfjs');
  const syntheticSeed = flagValue(argv, '--synthetic');
  let source;
  if (tfjsPath) {
    source = tfjsLayersSource(tfjsPath);
  } else if (syntheticSeed !== undefined) {
    source = syntheticSource(Number(syntheticSeed));
  } else {
    throw new SourceUnavailableError(
      'no weight source: pass --from-tfjs <model.json> pointing at a ' +
        'pretrained VGG-16 in TFJS layers format, or --synthetic <seed>',
    );
  }
  const summary = exportArchive(out, source);
  for (const entry of summary.entries) {
    console.log(`${entry.name} ${entry.shape.join('x')}`);
  }
  console.log(
    `wrote ${out} (${summary.entries.length} entries, ` +
      `${summary.archiveBytes} bytes, crc32 ${summary.crc32}, ` +
      `source ${summary.source})`,
  );
  return 0;
}

function runVerify(argv: string[]): number {
  const target = argv.find((a) => !a.startsWith('--'));
  if (!target) {
    console.error('verify: archive path is required');
    return 2;
  }
  const result = verifyArchive(target);
  if (result.ok) {
    console.log(
      `verify: ${target} ok (${result.entryCount} entries, crc32 ${result.crc32})`,
    );
    return 0;
  }
  console.error(`verify: ${target} FAILED`);
  for (const problem of result.problems) {
    console.error(`  ${problem}`);
  }
  return 1;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === 'export') {
      return runExport(rest);
    }
    if (command === 'verify') {
      return runVerify(rest);
    }
    console.error('usage: cli.js <export|verify> ...');
    return 2;
  } catch (err) {
    console.error(`${command}: ${(err as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
