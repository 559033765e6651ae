/** Pointer gesture logic for the block editor, in normalized coordinates.

Pure functions over the block list so every gesture is unit-testable
without a canvas: hit testing decides what a press means, then a drag
updates a working copy until release.
*/

import { clampBlock, MIN_BLOCK_SIZE } from "./state.js";
import type { Block } from "./types.js";

/** Corner-handle radius; matches the painted handle size on a 480px canvas. */
export const HANDLE_RADIUS = 0.025;

export type GestureKind = "create" | "move" | "resize";

export interface Gesture {
  kind: GestureKind;
  index: number;
  startX: number;
  startY: number;
  /** Geometry of the touched block at press time (the new block for create). */
  origin: Block;
}

function contains(block: Block, x: number, y: number): boolean {
  return x >= block.x && x <= block.x + block.w && y >= block.y && y <= block.y + block.h;
}

function onResizeHandle(block: Block, x: number, y: number): boolean {
  const cornerX = block.x + block.w;
  const cornerY = block.y + block.h;
  return Math.abs(x - cornerX) <= HANDLE_RADIUS && Math.abs(y - cornerY) <= HANDLE_RADIUS;
}

/** Topmost block under the pointer, last-drawn wins. */
export function hitTest(blocks: Block[], x: number, y: number): number {
  for (let i = blocks.length - 1; i >= 0; i--) {
    if (contains(blocks[i], x, y) || onResizeHandle(blocks[i], x, y)) return i;
  }
  return -1;
}

/** Interpret a press: resize a corner, move a body, or start a new block. */
export function beginGesture(
  blocks: Block[], x: number, y: number, color: Block["color"],
): { blocks: Block[]; gesture: Gesture } {
  const index = hitTest(blocks, x, y);
  if (index >= 0) {
    const block = blocks[index];
    const kind: GestureKind = onResizeHandle(block, x, y) ? "resize" : "move";
    return {
      blocks,
      gesture: { kind, index, startX: x, startY: y, origin: { ...block } },
    };
  }
  const created = clampBlock({ x, y, w: MIN_BLOCK_SIZE, h: MIN_BLOCK_SIZE, color });
  return {
    blocks: [...blocks, created],
    gesture: { kind: "create", index: blocks.length, startX: x, startY: y, origin: created },
  };
}

/** Apply the pointer's current position to an in-progress gesture. */
export function updateGesture(blocks: Block[], gesture: Gesture, x: number, y: number): Block[] {
  const next = blocks.map((b) => ({ ...b }));
  const origin = gesture.origin;
  let block: Block;
  if (gesture.kind === "move") {
    block = { ...origin, x: origin.x + (x - gesture.startX), y: origin.y + (y - gesture.startY) };
  } else if (gesture.kind === "resize") {
    block = { ...origin, w: x - origin.x, h: y - origin.y };
  } else {
    // Create drags toward any corner; keep width/height positive.
    block = {
      ...origin,
      x: Math.min(gesture.startX, x),
      y: Math.min(gesture.startY, y),
      w: Math.abs(x - gesture.startX),
      h: Math.abs(y - gesture.startY),
    };
  }
  next[gesture.index] = clampBlock(block);
  return next;
}
