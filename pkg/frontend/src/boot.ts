import { mountConsole } from "./main.js";

const root = document.getElementById("app");
if (root) {
  mountConsole(root);
}
