#!/usr/bin/env node
import { batchSegment } from './batch';
import { loadModelConfig, segmentPanorama } from './segment';

function usage(): never {
  console.error(
    'usage: seg-adapter --model CONFIG.json (--image pano.png [--out mask.png] | --bundles DIR)',
  );
  process.exit(1);
}

function main(argv: string[]): number {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith('--') || argv[i + 1] === undefined) usage();
    args.set(argv[i].slice(2), argv[i + 1]);
  }
  const modelPath = args.get('model');
  if (!modelPath) usage();
  const config = loadModelConfig(modelPath);

  const image = args.get('image');
  if (image) {
    const result = segmentPanorama(image, config, args.get('out'));
    console.log(`${result.maskPath} doors=${result.doorInstances} ${result.height}x${result.width}`);
    return 0;
  }
  const bundles = args.get('bundles');
  if (!bundles) usage();
  const report = batchSegment(bundles, config);
  console.log(
    `segmented=${report.segmented.length} skipped=${report.skipped.length} ` +
    `failed=${Object.keys(report.failed).length}`,
  );
  for (const [name, message] of Object.entries(report.failed)) {
    console.error(`${name}: ${message}`);
  }
  return Object.keys(report.failed).length > 0 ? 2 : 0;
}

process.exit(main(process.argv.slice(2)));
