/** Statement composer: a line editor with inline parse-error markers. */

import type { ErrorDetail } from "./types.js";

export class StatementComposer {
  onChange: ((text: string) => void) | null = null;

  private readonly textarea: HTMLTextAreaElement;
  private readonly errorPanel: HTMLElement;

  constructor(container: HTMLElement) {
    this.textarea = document.createElement("textarea");
    this.textarea.rows = 5;
    this.textarea.placeholder = "One statement per line, e.g.\nGrey small tall thing at center";
    this.textarea.addEventListener("input", () => {
      this.clearError();
      this.onChange?.(this.textarea.value);
    });
    this.errorPanel = document.createElement("div");
    this.errorPanel.className = "statement-error";
    this.errorPanel.hidden = true;
    container.appendChild(this.textarea);
    container.appendChild(this.errorPanel);
  }

  get text(): string {
    return this.textarea.value;
  }

  set text(value: string) {
    this.textarea.value = value;
  }

  /** Show a parse error under the editor with the offending token marked. */
  markError(detail: ErrorDetail): void {
    this.errorPanel.hidden = false;
    this.errorPanel.replaceChildren();
    const heading = document.createElement("div");
    heading.textContent = detail.message;
    this.errorPanel.appendChild(heading);
    if (detail.line === undefined) return;
    const lines = this.textarea.value.split("\n").filter((l) => l.trim().length > 0);
    const badLine = lines[detail.line - 1];
    if (badLine === undefined) return;
    const annotated = document.createElement("div");
    annotated.className = "statement-error-line";
    // Re-render the bad line with the token at the reported position marked.
    badLine.split(/\s+/).forEach((word, index) => {
      if (index > 0) annotated.appendChild(document.createTextNode(" "));
      if (index === detail.position) {
        const mark = document.createElement("mark");
        mark.textContent = word;
        annotated.appendChild(mark);
      } else {
        annotated.appendChild(document.createTextNode(word));
      }
    });
    this.errorPanel.appendChild(annotated);
  }

  clearError(): void {
    this.errorPanel.hidden = true;
    this.errorPanel.replaceChildren();
  }
}
