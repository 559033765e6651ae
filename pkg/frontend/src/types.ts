/** Shared domain types mirroring the query service's JSON contract. */

export const COLOR_NAMES = [
  "black", "blue", "brown", "grey", "green", "orange",
  "pink", "purple", "red", "white", "yellow",
] as const;

export type ColorName = (typeof COLOR_NAMES)[number];

/** "any" spreads a block over all eleven colors server-side. */
export type BlockColor = ColorName | "any";

/** One sketched rectangle, top-left anchored, in unit-square coordinates. */
export interface Block {
  x: number;
  y: number;
  w: number;
  h: number;
  color: BlockColor;
}

export type QueryMode = "blocks" | "statements" | "fused";

/** Wire form of a block; a missing color means "any". */
export interface BlockPayload {
  x: number;
  y: number;
  w: number;
  h: number;
  color?: ColorName;
}

export interface QueryPayload {
  statements?: string[];
  blocks?: BlockPayload[];
  fuse?: boolean;
  result_limit?: number;
}

export interface RankedResult {
  image_id: string;
  score: number;
  rank: number;
  thumbnail_url?: string;
}

export interface QueryResponse {
  results: RankedResult[];
}

/** Structured error detail the service attaches to 4xx/5xx responses. */
export interface ErrorDetail {
  error: string;
  message: string;
  token?: string;
  position?: number;
  line?: number;
}
