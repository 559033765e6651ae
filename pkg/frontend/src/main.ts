import { QueryClient } from "./api.js";
import { SketchApp } from "./app.js";

window.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");
  new SketchApp(root, new QueryClient(""));
});
