import { App } from "./app";
import "./style.css";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app root");
void new App(root).start();
