import * as fs from 'fs';
import * as path from 'path';
import { findDoorInstances } from './components';
import { CategoryMapping, DEFAULT_CATEGORY_MAPPING, LabelCode, PALETTE, toCode, validateMapping } from './palette';
import { readPng, writeGrayPng } from './png';

/**
 * One "model" here is a set of RGB prototypes per category plus the
 * category-to-palette mapping. The color-rule backend classifies each pixel
 * to the nearest prototype within a distance budget; anything farther is
 * "other". That is the whole inference story for synthetic and color-keyed
 * imagery, and it keeps the adapter contract (palette, sidecar, batch I/O)
 * identical for heavier backends swapped in through the same config file.
 */
export interface ModelConfig {
  backend: 'color-rule';
  /** category name -> [r, g, b] prototype */
  prototypes: Record<string, [number, number, number]>;
  /** max squared RGB distance to accept a prototype */
  maxDistanceSq?: number;
  mapping?: CategoryMapping;
}

export interface SegmentResult {
  maskPath: string;
  sidecarPath: string;
  width: number;
  height: number;
  doorInstances: number;
}

export function loadModelConfig(configPath: string): ModelConfig {
  const config = JSON.parse(fs.readFileSync(configPath, 'utf8')) as ModelConfig;
  if (config.backend !== 'color-rule') {
    throw new Error(`unsupported backend ${JSON.stringify(config.backend)}`);
  }
  if (!config.prototypes || Object.keys(config.prototypes).length === 0) {
    throw new Error('model config has no category prototypes');
  }
  validateMapping(config.mapping ?? DEFAULT_CATEGORY_MAPPING);
  return config;
}

export function classifyPixels(image: { width: number; height: number; data: Buffer }, config: ModelConfig): Uint8Array {
  const mapping = config.mapping ?? DEFAULT_CATEGORY_MAPPING;
  const budget = config.maxDistanceSq ?? 900;
  const categories = Object.entries(config.prototypes);
  const labels = new Uint8Array(image.width * image.height);
  for (let i = 0; i < labels.length; i++) {
    const r = image.data[4 * i];
    const g = image.data[4 * i + 1];
    const b = image.data[4 * i + 2];
    let best = budget + 1;
    let code: LabelCode = PALETTE.other;
    for (const [category, [pr, pg, pb]] of categories) {
      const d = (r - pr) * (r - pr) + (g - pg) * (g - pg) + (b - pb) * (b - pb);
      if (d < best) {
        best = d;
        code = toCode(category, mapping);
      }
    }
    labels[i] = code;
  }
  return labels;
}

/**
 * Segment one equirectangular panorama into a mask PNG plus the instance
 * sidecar the streetelev loader validates against.
 */
export function segmentPanorama(imagePath: string, config: ModelConfig, outPngPath?: string): SegmentResult {
  const image = readPng(imagePath);
  const labels = classifyPixels(image, config);
  const instances = findDoorInstances(labels, image.width, image.height);

  const maskPath = outPngPath ?? path.join(path.dirname(imagePath), 'mask.png');
  const sidecarPath = maskPath.replace(/\.png$/, '.json');
  writeGrayPng(maskPath, labels, image.width, image.height);
  const sidecar = {
    door_instances: instances.map(({ bbox, id, pixel_count }) => ({ bbox, id, pixel_count })),
    height: image.height,
    palette: PALETTE,
    width: image.width,
  };
  fs.writeFileSync(sidecarPath, JSON.stringify(sidecar, null, 2) + '\n');
  return { maskPath, sidecarPath, width: image.width, height: image.height, doorInstances: instances.length };
}
