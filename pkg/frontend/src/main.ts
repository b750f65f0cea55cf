import { ApiClient } from "./api.js";
import { OthelloApp } from "./app.js";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app container");
}
new OthelloApp(root as HTMLElement, new ApiClient(""));
