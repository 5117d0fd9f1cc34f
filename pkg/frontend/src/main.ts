/** Browser entry point: same-origin API, app mounted on #app. */

import { EngineApi } from "./api.js";
import { ChatApp } from "./app.js";

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app mount point");
}
void new ChatApp(root, new EngineApi()).boot();
