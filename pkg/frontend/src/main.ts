/**
 * Browser bootstrap. Open index.html with ?user=joe&server=http://host:port
 * against a running market server.
 */

import { MarketClient } from "./api.js";
import { TraderConsole } from "./console.js";

const params = new URLSearchParams(window.location.search);
const server = params.get("server") ?? "http://127.0.0.1:8000";
const user = params.get("user") ?? "trader";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");

const console_ = new TraderConsole(root, new MarketClient(server), user);
void console_.init().catch((err) => {
  root.textContent = `could not reach the market at ${server}: ${String(err)}`;
});
