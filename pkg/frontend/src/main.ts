// Browser entry: binds the session panel to the page.

import { SessionPanel } from "./panel.js";
import { WebSocketTransport } from "./transport.js";
import { CALCULATOR_OPS, ViewModel } from "./viewmodel.js";

const $ = (id: string) => document.getElementById(id)!;

let panel: SessionPanel | null = null;

function drawEnabled(model: ViewModel): void {
  const list = $("enabled");
  list.innerHTML = "";
  for (const row of model.view.enabled) {
    const li = document.createElement("li");
    const button = document.createElement("button");
    button.textContent = `${row.label}`;
    button.dataset.index = String(row.index);
    button.onclick = () => panel?.fireIndex(row.index);
    li.appendChild(button);
    list.appendChild(li);
  }
  if (model.view.terminated) {
    const li = document.createElement("li");
    li.className = "terminated";
    li.textContent = "terminated";
    list.appendChild(li);
  }
}

async function drawTrace(): Promise<void> {
  if (!panel) return;
  const events = await panel.trace();
  const pre = $("trace");
  pre.textContent = events.map((e) => `${e.index}\t${e.label}`).join("\n");
  pre.scrollTop = pre.scrollHeight;
}

function onChanged(model: ViewModel): void {
  $("banner").textContent = model.banner ?? "";
  $("banner").classList.toggle("visible", model.banner !== null);
  $("connection").textContent = model.connection === "live" ? "connected" : "connection lost";
  $("connection").className = model.connection;
  $("animation").innerHTML = panel?.render() ?? "";
  $("result").textContent = model.lastResult ?? "–";
  drawEnabled(model);
  void drawTrace();
  window.sessionStorage.setItem("psfkit-session", model.session);
}

async function boot(): Promise<void> {
  const endpoint = (window.location.hash || "#ws://127.0.0.1:8790").slice(1);
  const resume = window.sessionStorage.getItem("psfkit-session") ?? undefined;
  const transport = await new Promise<WebSocketTransport>((resolve) => {
    const t = new WebSocketTransport(endpoint, () => resolve(t));
  });
  panel = await SessionPanel.connect(transport, { changed: onChanged }, "demo", 0, resume);

  $("undo").onclick = () => panel?.undo();
  $("reset").onclick = () => panel?.reset();
  $("push").onclick = () => {
    const input = $("operand") as HTMLInputElement;
    const value = Number(input.value);
    if (Number.isInteger(value) && value >= 0) void panel?.pushOperand(value);
  };
  const ops = $("ops");
  for (const op of CALCULATOR_OPS) {
    const button = document.createElement("button");
    button.textContent = op.button;
    button.onclick = async () => {
      try {
        await panel?.pressOp(op.button);
        if (op.button === "quit") await panel?.drainPipeline();
      } catch {
        /* button not enabled in this state */
      }
    };
    ops.appendChild(button);
  }
}

void boot();
