/** Application wiring: editor + composer + mode switch + submit + grid. */

import { isAbort, QueryClient, QueryError } from "./api.js";
import { BlockEditor } from "./canvas.js";
import { ResultsGrid } from "./grid.js";
import { buildQueryPayload, canSubmit, initialState, SketchState } from "./state.js";
import { StatementComposer } from "./statements.js";
import { COLOR_NAMES, QueryMode } from "./types.js";
import { COLOR_CSS } from "./colors.js";

const MODES: QueryMode[] = ["blocks", "statements", "fused"];

export class SketchApp {
  readonly state: SketchState = initialState();
  readonly editor: BlockEditor;
  readonly composer: StatementComposer;
  readonly grid: ResultsGrid;

  private readonly submitButton: HTMLButtonElement;
  private readonly status: HTMLElement;

  constructor(
    root: HTMLElement,
    private readonly client: QueryClient,
  ) {
    const canvas = root.querySelector<HTMLCanvasElement>("#sketch-canvas");
    const composerHost = root.querySelector<HTMLElement>("#composer");
    const gridHost = root.querySelector<HTMLElement>("#results");
    const controls = root.querySelector<HTMLElement>("#controls");
    if (!canvas || !composerHost || !gridHost || !controls) {
      throw new Error("missing application containers");
    }

    this.editor = new BlockEditor(canvas);
    this.editor.onChange = (blocks) => {
      this.state.blocks = blocks;
      this.refreshSubmit();
    };
    this.composer = new StatementComposer(composerHost);
    this.composer.onChange = (text) => {
      this.state.statementText = text;
      this.refreshSubmit();
    };
    this.grid = new ResultsGrid(gridHost);

    const modeSelect = document.createElement("select");
    modeSelect.id = "mode-select";
    for (const mode of MODES) {
      const option = document.createElement("option");
      option.value = mode;
      option.textContent = mode;
      modeSelect.appendChild(option);
    }
    modeSelect.addEventListener("change", () => {
      this.state.mode = modeSelect.value as QueryMode;
      this.refreshSubmit();
    });
    controls.appendChild(modeSelect);

    const palette = document.createElement("div");
    palette.id = "palette";
    for (const color of [...COLOR_NAMES, "any"] as const) {
      const swatch = document.createElement("button");
      swatch.type = "button";
      swatch.title = color;
      swatch.dataset.color = color;
      swatch.className = "swatch";
      if (color !== "any") swatch.style.background = COLOR_CSS[color];
      else swatch.textContent = "?";
      swatch.addEventListener("click", () => this.editor.recolorSelected(color));
      palette.appendChild(swatch);
    }
    controls.appendChild(palette);

    controls.appendChild(this.button("undo", () => this.editor.undo()));
    controls.appendChild(this.button("delete", () => this.editor.deleteSelected()));
    controls.appendChild(this.button("grid", () => this.editor.toggleGrid()));

    this.submitButton = this.button("search", () => void this.submit());
    this.submitButton.id = "submit";
    controls.appendChild(this.submitButton);

    this.status = document.createElement("div");
    this.status.id = "status";
    controls.appendChild(this.status);

    this.refreshSubmit();
  }

  private button(label: string, onClick: () => void): HTMLButtonElement {
    const el = document.createElement("button");
    el.type = "button";
    el.textContent = label;
    el.addEventListener("click", onClick);
    return el;
  }

  private refreshSubmit(): void {
    this.submitButton.disabled = !canSubmit(this.state);
  }

  /** One POST per call; errors leave the sketch and last grid untouched. */
  async submit(): Promise<void> {
    if (!canSubmit(this.state)) return;
    this.composer.clearError();
    this.status.textContent = "searching...";
    try {
      const results = await this.client.submit(buildQueryPayload(this.state));
      this.state.lastResponse = results;
      this.grid.render(results);
      this.status.textContent = `${results.length} results`;
    } catch (error) {
      if (isAbort(error)) return;
      if (error instanceof QueryError && error.detail?.error === "parse-error") {
        this.composer.markError(error.detail);
        this.status.textContent = "fix the marked statement";
        return;
      }
      this.status.textContent =
        error instanceof QueryError ? error.message : "network error, try again";
    }
  }
}
