import { PALETTE } from './palette';

export interface DoorInstance {
  id: number;
  pixel_count: number;
  /** [row0, col0, row1, col1], inclusive, plain min/max like the loader's. */
  bbox: [number, number, number, number];
}

/**
 * 4-connected components of door pixels. Columns 0 and width-1 are adjacent
 * (the panorama seam), matching how the streetelev loader discovers
 * instances, so a door straddling the seam stays one instance.
 */
export function findDoorInstances(labels: Uint8Array, width: number, height: number): DoorInstance[] {
  const visited = new Uint8Array(labels.length);
  const instances: DoorInstance[] = [];
  const stack: number[] = [];

  for (let start = 0; start < labels.length; start++) {
    if (labels[start] !== PALETTE.door || visited[start]) continue;
    let pixels = 0;
    let row0 = height, row1 = -1, col0 = width, col1 = -1;
    stack.push(start);
    visited[start] = 1;
    while (stack.length) {
      const at = stack.pop()!;
      const row = Math.floor(at / width);
      const col = at - row * width;
      pixels++;
      if (row < row0) row0 = row;
      if (row > row1) row1 = row;
      if (col < col0) col0 = col;
      if (col > col1) col1 = col;
      const neighbors = [
        row > 0 ? at - width : -1,
        row < height - 1 ? at + width : -1,
        row * width + ((col + 1) % width),
        row * width + ((col - 1 + width) % width),
      ];
      for (const next of neighbors) {
        if (next >= 0 && labels[next] === PALETTE.door && !visited[next]) {
          visited[next] = 1;
          stack.push(next);
        }
      }
    }
    instances.push({
      id: instances.length + 1,
      pixel_count: pixels,
      bbox: [row0, col0, row1, col1],
    });
  }
  return instances;
}
