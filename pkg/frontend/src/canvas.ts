/** Canvas block editor: draw, move, resize, recolor and delete blocks.

The canvas is a unit square; all geometry lives in normalized coordinates
and only painting multiplies by pixel size. An optional 3x3 overlay marks
the default statement bins so users can aim at "top middle" and friends.
*/

import { fillFor, outlineFor } from "./colors.js";
import { beginGesture, Gesture, HANDLE_RADIUS, updateGesture } from "./gestures.js";
import { clampBlock, UndoStack } from "./state.js";
import type { Block, BlockColor } from "./types.js";

export class BlockEditor {
  blocks: Block[] = [];
  selected = -1;
  showGrid = true;
  drawColor: BlockColor = "any";

  onChange: ((blocks: Block[]) => void) | null = null;

  private readonly ctx: CanvasRenderingContext2D;
  private gesture: Gesture | null = null;
  private readonly undoStack = new UndoStack();

  constructor(private readonly canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    this.ctx = ctx;
    canvas.addEventListener("pointerdown", (e) => {
      canvas.setPointerCapture?.(e.pointerId);
      const { x, y } = this.eventPoint(e);
      this.pointerDown(x, y);
    });
    canvas.addEventListener("pointermove", (e) => {
      const { x, y } = this.eventPoint(e);
      this.pointerMove(x, y);
    });
    canvas.addEventListener("pointerup", () => this.pointerUp());
    this.paint();
  }

  private eventPoint(e: PointerEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    const scaleX = rect.width > 0 ? rect.width : this.canvas.width;
    const scaleY = rect.height > 0 ? rect.height : this.canvas.height;
    return { x: (e.clientX - rect.left) / scaleX, y: (e.clientY - rect.top) / scaleY };
  }

  /** Press at a normalized point: select, start a move/resize, or create. */
  pointerDown(x: number, y: number): void {
    this.undoStack.push(this.blocks);
    const begun = beginGesture(this.blocks, x, y, this.drawColor);
    this.blocks = begun.blocks;
    this.gesture = begun.gesture;
    this.selected = begun.gesture.index;
    this.paint();
  }

  pointerMove(x: number, y: number): void {
    if (!this.gesture) return;
    this.blocks = updateGesture(this.blocks, this.gesture, x, y);
    this.paint();
  }

  pointerUp(): void {
    if (!this.gesture) return;
    this.gesture = null;
    this.emitChange();
  }

  /** Recolor the selected block (palette click). */
  recolorSelected(color: BlockColor): void {
    this.drawColor = color;
    if (this.selected < 0 || this.selected >= this.blocks.length) return;
    this.undoStack.push(this.blocks);
    this.blocks = this.blocks.map((b, i) =>
      i === this.selected ? { ...b, color } : b);
    this.emitChange();
  }

  deleteSelected(): void {
    if (this.selected < 0 || this.selected >= this.blocks.length) return;
    this.undoStack.push(this.blocks);
    this.blocks = this.blocks.filter((_, i) => i !== this.selected);
    this.selected = -1;
    this.emitChange();
  }

  undo(): void {
    const previous = this.undoStack.undo();
    if (previous === null) return;
    this.blocks = previous;
    this.selected = -1;
    this.emitChange();
  }

  setBlocks(blocks: Block[]): void {
    this.blocks = blocks.map((b) => clampBlock(b));
    this.selected = -1;
    this.undoStack.clear();
    this.emitChange();
  }

  toggleGrid(): void {
    this.showGrid = !this.showGrid;
    this.paint();
  }

  private emitChange(): void {
    this.paint();
    this.onChange?.(this.blocks);
  }

  private paint(): void {
    const { width, height } = this.canvas;
    const ctx = this.ctx;
    ctx.clearRect(0, 0, width, height);
    ctx.fillStyle = "#ffffff";
    ctx.fillRect(0, 0, width, height);
    if (this.showGrid) {
      ctx.strokeStyle = "#e2e8f0";
      ctx.lineWidth = 1;
      for (const t of [1 / 3, 2 / 3]) {
        ctx.beginPath();
        ctx.moveTo(t * width, 0);
        ctx.lineTo(t * width, height);
        ctx.moveTo(0, t * height);
        ctx.lineTo(width, t * height);
        ctx.stroke();
      }
    }
    this.blocks.forEach((block, i) => {
      const px = block.x * width;
      const py = block.y * height;
      const pw = block.w * width;
      const ph = block.h * height;
      ctx.globalAlpha = 0.55;
      ctx.fillStyle = fillFor(block.color);
      ctx.fillRect(px, py, pw, ph);
      ctx.globalAlpha = 1;
      ctx.strokeStyle = i === this.selected ? "#0f172a" : outlineFor(block.color);
      ctx.lineWidth = i === this.selected ? 3 : 2;
      ctx.strokeRect(px, py, pw, ph);
      if (i === this.selected) {
        const r = HANDLE_RADIUS * width;
        ctx.fillStyle = "#0f172a";
        ctx.fillRect(px + pw - r / 2, py + ph - r / 2, r, r);
      }
    });
    ctx.strokeStyle = "#94a3b8";
    ctx.lineWidth = 1;
    ctx.strokeRect(0.5, 0.5, width - 1, height - 1);
  }
}
