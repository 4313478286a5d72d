import { GameApp } from "./app.js";
import { ServerClient } from "./client.js";
import { mount } from "./dom.js";

const params = new URLSearchParams(location.search);
const base = params.get("server") ?? "";
const client = new ServerClient(base);
const app = new GameApp(client);

mount(document.getElementById("root")!, app, client);
void app.start(params.get("session") ?? undefined);
