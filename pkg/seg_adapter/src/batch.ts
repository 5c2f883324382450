import * as fs from 'fs';
import * as path from 'path';
import { ModelConfig, segmentPanorama } from './segment';

export interface BatchReport {
  segmented: string[];
  skipped: string[];
  failed: Record<string, string>;
}

/**
 * Segment every bundle directory under `root` that has an image.png.
 * Bundles that already carry a mask.png are skipped, so reruns only do new
 * work; a failure on one bundle is recorded and the rest proceed.
 */
export function batchSegment(root: string, config: ModelConfig): BatchReport {
  const report: BatchReport = { segmented: [], skipped: [], failed: {} };
  for (const name of fs.readdirSync(root).sort()) {
    const dir = path.join(root, name);
    const imagePath = path.join(dir, 'image.png');
    if (!fs.statSync(dir).isDirectory() || !fs.existsSync(imagePath)) continue;
    if (fs.existsSync(path.join(dir, 'mask.png'))) {
      report.skipped.push(name);
      continue;
    }
    try {
      segmentPanorama(imagePath, config);
      report.segmented.push(name);
    } catch (err) {
      report.failed[name] = err instanceof Error ? err.message : String(err);
    }
  }
  return report;
}
