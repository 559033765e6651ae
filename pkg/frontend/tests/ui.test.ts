// @vitest-environment jsdom
import { beforeEach, describe, expect, it, vi } from "vitest";

import { QueryClient } from "../src/api.js";
import type { FetchLike } from "../src/api.js";
import { SketchApp } from "../src/app.js";
import { blocksFromPayload } from "../src/state.js";
import type { QueryPayload, RankedResult } from "../src/types.js";

const SERVER_ORDER: RankedResult[] = [
  { image_id: "mid-rank-id", score: 0.31, rank: 1 },
  { image_id: "alpha-first-id", score: 0.2, rank: 2 },
  { image_id: "zulu-last-id", score: 0.11, rank: 3 },
];

// jsdom has no 2d context; painting is irrelevant to these tests.
const ctxStub = new Proxy({}, { get: () => () => undefined });

function makeApp(fetchFn: FetchLike): { app: SketchApp; root: HTMLElement } {
  document.body.innerHTML = `
    <div id="app">
      <canvas id="sketch-canvas" width="480" height="480"></canvas>
      <div id="controls"></div>
      <div id="composer"></div>
      <div id="results"></div>
    </div>`;
  vi.spyOn(HTMLCanvasElement.prototype, "getContext")
    .mockReturnValue(ctxStub as unknown as CanvasRenderingContext2D);
  const root = document.getElementById("app")!;
  return { app: new SketchApp(root, new QueryClient("", fetchFn)), root };
}

function drawBlock(app: SketchApp, from: [number, number], to: [number, number]): void {
  app.editor.pointerDown(from[0], from[1]);
  app.editor.pointerMove(to[0], to[1]);
  app.editor.pointerUp();
}

function recordingFetch(calls: QueryPayload[], results = SERVER_ORDER): FetchLike {
  return async (_url, init) => {
    calls.push(JSON.parse(init.body as string));
    return new Response(JSON.stringify({ results }), { status: 200 });
  };
}

function gridIds(root: HTMLElement): string[] {
  return Array.from(root.querySelectorAll<HTMLElement>("#results .result-cell"))
    .map((cell) => cell.dataset.imageId!);
}

beforeEach(() => vi.restoreAllMocks());

describe("drawing and submitting", () => {
  it("three blocks yield one POST that round-trips and renders in server order", async () => {
    const calls: QueryPayload[] = [];
    const { app, root } = makeApp(recordingFetch(calls));

    drawBlock(app, [0.1, 0.1], [0.5, 0.3]);
    drawBlock(app, [0.6, 0.5], [0.9, 0.9]);
    drawBlock(app, [0.2, 0.6], [0.4, 0.8]);
    const greenSwatch = root.querySelector<HTMLButtonElement>('[data-color="green"]')!;
    greenSwatch.click();

    expect(app.state.blocks).toHaveLength(3);
    await app.submit();

    expect(calls).toHaveLength(1);
    const payload = calls[0];
    expect(payload.blocks).toHaveLength(3);
    expect(payload.statements).toBeUndefined();
    // Wire payload and editor state describe identical geometry and colors.
    expect(blocksFromPayload(payload.blocks!)).toEqual(app.state.blocks);
    expect(app.state.blocks[2].color).toBe("green");
    // The grid shows the server's order, not an alphabetical or score resort.
    expect(gridIds(root)).toEqual(["mid-rank-id", "alpha-first-id", "zulu-last-id"]);
    expect(app.state.lastResponse).toEqual(SERVER_ORDER);
  });

  it("re-submitting unchanged state renders an identical grid", async () => {
    const calls: QueryPayload[] = [];
    const { app, root } = makeApp(recordingFetch(calls));
    drawBlock(app, [0.1, 0.1], [0.5, 0.3]);
    await app.submit();
    const before = root.querySelector("#results")!.innerHTML;
    await app.submit();
    expect(calls).toHaveLength(2);
    expect(calls[1]).toEqual(calls[0]);
    expect(root.querySelector("#results")!.innerHTML).toBe(before);
  });

  it("undo after a move restores the previous geometry", () => {
    const { app } = makeApp(recordingFetch([]));
    drawBlock(app, [0.1, 0.1], [0.5, 0.3]);
    const created = app.state.blocks.map((b) => ({ ...b }));
    drawBlock(app, [0.2, 0.2], [0.45, 0.25]);   // press inside: move gesture
    expect(app.state.blocks).not.toEqual(created);
    app.editor.undo();
    expect(app.state.blocks).toEqual(created);
  });

  it("submit is disabled until the active mode has input", () => {
    const { app, root } = makeApp(recordingFetch([]));
    const submit = root.querySelector<HTMLButtonElement>("#submit")!;
    expect(submit.disabled).toBe(true);
    drawBlock(app, [0.1, 0.1], [0.5, 0.3]);
    expect(submit.disabled).toBe(false);
    app.editor.deleteSelected();
    expect(app.state.blocks).toHaveLength(0);
    expect(submit.disabled).toBe(true);
  });
});

describe("statement errors", () => {
  function typeStatements(root: HTMLElement, text: string): void {
    const select = root.querySelector<HTMLSelectElement>("#mode-select")!;
    select.value = "statements";
    select.dispatchEvent(new Event("change"));
    const textarea = root.querySelector<HTMLTextAreaElement>("#composer textarea")!;
    textarea.value = text;
    textarea.dispatchEvent(new Event("input"));
  }

  it("a parse error marks the offending token and preserves the sketch", async () => {
    const detail = {
      error: "parse-error",
      message: "line 2: unknown ratio word 'sideways'",
      token: "sideways",
      position: 2,
      line: 2,
    };
    const { app, root } = makeApp(async () =>
      new Response(JSON.stringify({ detail }), { status: 400 }));
    drawBlock(app, [0.1, 0.1], [0.5, 0.3]);
    const sketchBefore = app.state.blocks.map((b) => ({ ...b }));
    typeStatements(root,
      "Grey small tall thing at center\nGrey small sideways thing at center");
    await app.submit();

    const mark = root.querySelector("#composer mark");
    expect(mark?.textContent).toBe("sideways");
    expect(root.querySelector(".statement-error")!.textContent).toContain("line 2");
    expect(app.state.blocks).toEqual(sketchBefore);
    expect(app.state.statementText).toContain("sideways");
  });

  it("network failures leave state and grid untouched", async () => {
    let fail = false;
    const fetchFn: FetchLike = async (_url, init) => {
      if (fail) throw new TypeError("fetch failed");
      calls.push(JSON.parse(init.body as string));
      return new Response(JSON.stringify({ results: SERVER_ORDER }), { status: 200 });
    };
    const calls: QueryPayload[] = [];
    const { app, root } = makeApp(fetchFn);
    drawBlock(app, [0.1, 0.1], [0.5, 0.3]);
    await app.submit();
    const gridBefore = gridIds(root);
    fail = true;
    await app.submit();
    expect(gridIds(root)).toEqual(gridBefore);
    expect(app.state.blocks).toHaveLength(1);
    expect(root.querySelector("#status")!.textContent).toContain("network");
  });
});
