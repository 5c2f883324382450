/**
 * The mask palette shared with the streetelev ingestion loader. Code 0 is
 * the catch-all; everything the estimator consumes has a positive code.
 */
export const PALETTE = { other: 0, door: 1, road: 2, grass: 3, dirt: 4 } as const;

export type PaletteName = keyof typeof PALETTE;
export type LabelCode = (typeof PALETTE)[PaletteName];

/** Model category name -> palette name. Unknown categories fall to "other". */
export type CategoryMapping = Record<string, PaletteName>;

/**
 * COCO-stuff style defaults. The exact category vocabulary depends on the
 * model checkpoint, which is why the mapping ships as data (and can be
 * overridden per model config) rather than being baked into code.
 */
export const DEFAULT_CATEGORY_MAPPING: CategoryMapping = {
  'door-stuff': 'door',
  door: 'door',
  road: 'road',
  pavement: 'road',
  grass: 'grass',
  dirt: 'dirt',
  sand: 'dirt',
  gravel: 'dirt',
};

export function toCode(category: string, mapping: CategoryMapping): LabelCode {
  const name = mapping[category];
  return name === undefined ? PALETTE.other : PALETTE[name];
}

/** Every category must land on a palette name; bad mappings fail loudly. */
export function validateMapping(mapping: CategoryMapping): void {
  for (const [category, name] of Object.entries(mapping)) {
    if (!(name in PALETTE)) {
      throw new Error(`category ${JSON.stringify(category)} maps to unknown palette name ${JSON.stringify(name)}`);
    }
  }
}
