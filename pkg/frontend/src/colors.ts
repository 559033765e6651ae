/** Display colors for the eleven palette entries plus the "any" wildcard. */

import type { BlockColor, ColorName } from "./types.js";

export const COLOR_CSS: Record<ColorName, string> = {
  black: "#1f1f1f",
  blue: "#2563eb",
  brown: "#8b5a2b",
  grey: "#9ca3af",
  green: "#16a34a",
  orange: "#f97316",
  pink: "#ec4899",
  purple: "#9333ea",
  red: "#dc2626",
  white: "#f2f2f2",
  yellow: "#eab308",
};

export function fillFor(color: BlockColor): string {
  if (color === "any") return "rgba(128, 128, 128, 0.25)";
  return COLOR_CSS[color];
}

export function outlineFor(color: BlockColor): string {
  if (color === "any" || color === "white") return "#475569";
  return COLOR_CSS[color];
}
