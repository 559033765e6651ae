/** Ranked results grid. Renders strictly in response order: the server's
ranking is the ranking, the client never re-sorts. */

import type { RankedResult } from "./types.js";

export class ResultsGrid {
  constructor(private readonly container: HTMLElement) {}

  render(results: RankedResult[]): void {
    this.container.replaceChildren();
    for (const result of results) {
      const cell = document.createElement("figure");
      cell.className = "result-cell";
      cell.dataset.imageId = result.image_id;
      if (result.thumbnail_url) {
        const img = document.createElement("img");
        img.src = result.thumbnail_url;
        img.alt = result.image_id;
        cell.appendChild(img);
      }
      const caption = document.createElement("figcaption");
      caption.textContent = `#${result.rank} ${result.image_id} (${result.score.toFixed(3)})`;
      cell.appendChild(caption);
      this.container.appendChild(cell);
    }
  }

  clear(): void {
    this.container.replaceChildren();
  }
}
