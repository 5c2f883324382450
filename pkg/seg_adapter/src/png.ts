import * as fs from 'fs';
import { PNG } from 'pngjs';

export interface RgbImage {
  width: number;
  height: number;
  /** RGBA interleaved, 4 bytes per pixel (pngjs layout). */
  data: Buffer;
}

export function readPng(path: string): RgbImage {
  const png = PNG.sync.read(fs.readFileSync(path));
  return { width: png.width, height: png.height, data: png.data };
}

/**
 * Write a label grid as an 8-bit grayscale PNG, the single-channel layout
 * the streetelev loader accepts (its own masks use the same mode).
 */
export function writeGrayPng(path: string, labels: Uint8Array, width: number, height: number): void {
  if (labels.length !== width * height) {
    throw new Error(`label buffer has ${labels.length} bytes, grid needs ${width * height}`);
  }
  const png = new PNG({ width, height, colorType: 0, inputColorType: 0, inputHasAlpha: false });
  png.data = Buffer.from(labels);
  fs.writeFileSync(path, PNG.sync.write(png, { colorType: 0, inputColorType: 0, inputHasAlpha: false }));
}

/** Read back a grayscale mask PNG into a label grid (tests, round-trips). */
export function readGrayPng(path: string): { labels: Uint8Array; width: number; height: number } {
  const png = PNG.sync.read(fs.readFileSync(path));
  const labels = new Uint8Array(png.width * png.height);
  for (let i = 0; i < labels.length; i++) {
    labels[i] = png.data[4 * i]; // gray PNGs decode with R = G = B
  }
  return { labels, width: png.width, height: png.height };
}
