/** Sketch state, its wire serialization, and the undo history.

The state is plain data so tests and the canvas editor share one source of
truth. Serialization must be the identity on blocks: the service consumes
the same normalized coordinates the editor works in, so nothing is scaled
or rounded on the way out.
*/

import type { Block, BlockPayload, QueryMode, QueryPayload, RankedResult } from "./types.js";

export const MIN_BLOCK_SIZE = 0.01;

export interface SketchState {
  blocks: Block[];
  statementText: string;
  mode: QueryMode;
  lastResponse: RankedResult[] | null;
}

export function initialState(): SketchState {
  return { blocks: [], statementText: "", mode: "blocks", lastResponse: null };
}

/** Non-empty statement lines, in order. */
export function statementLines(state: SketchState): string[] {
  return state.statementText
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
}

export function canSubmit(state: SketchState): boolean {
  const hasBlocks = state.blocks.length > 0;
  const hasStatements = statementLines(state).length > 0;
  if (state.mode === "blocks") return hasBlocks;
  if (state.mode === "statements") return hasStatements;
  return hasBlocks && hasStatements;
}

/** Force a block inside the unit canvas without flipping or vanishing it. */
export function clampBlock(block: Block): Block {
  const w = Math.min(Math.max(block.w, MIN_BLOCK_SIZE), 1);
  const h = Math.min(Math.max(block.h, MIN_BLOCK_SIZE), 1);
  const x = Math.min(Math.max(block.x, 0), 1 - w);
  const y = Math.min(Math.max(block.y, 0), 1 - h);
  return { x, y, w, h, color: block.color };
}

export function blocksToPayload(blocks: Block[]): BlockPayload[] {
  return blocks.map((block) => {
    const payload: BlockPayload = { x: block.x, y: block.y, w: block.w, h: block.h };
    if (block.color !== "any") payload.color = block.color;
    return payload;
  });
}

export function blocksFromPayload(payload: BlockPayload[]): Block[] {
  return payload.map((entry) => ({
    x: entry.x, y: entry.y, w: entry.w, h: entry.h,
    color: entry.color ?? "any",
  }));
}

export function buildQueryPayload(state: SketchState, resultLimit = 20): QueryPayload {
  const payload: QueryPayload = { result_limit: resultLimit };
  if (state.mode === "blocks" || state.mode === "fused") {
    payload.blocks = blocksToPayload(state.blocks);
  }
  if (state.mode === "statements" || state.mode === "fused") {
    payload.statements = statementLines(state);
  }
  if (state.mode === "fused") payload.fuse = true;
  return payload;
}

/** Snapshot history over the block list; one entry per completed gesture. */
export class UndoStack {
  private snapshots: Block[][] = [];

  get depth(): number {
    return this.snapshots.length;
  }

  push(blocks: Block[]): void {
    this.snapshots.push(blocks.map((b) => ({ ...b })));
  }

  undo(): Block[] | null {
    const previous = this.snapshots.pop();
    if (!previous) return null;
    return previous.map((b) => ({ ...b }));
  }

  clear(): void {
    this.snapshots = [];
  }
}
