export { findDoorInstances, DoorInstance } from './components';
export {
  CategoryMapping,
  DEFAULT_CATEGORY_MAPPING,
  LabelCode,
  PALETTE,
  PaletteName,
  toCode,
  validateMapping,
} from './palette';
export { readGrayPng, readPng, writeGrayPng } from './png';
export { batchSegment, BatchReport } from './batch';
export {
  classifyPixels,
  loadModelConfig,
  ModelConfig,
  SegmentResult,
  segmentPanorama,
} from './segment';
