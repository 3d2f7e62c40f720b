// Pure rendering: AnimationView -> SVG markup.  One <rect> per box, one
// <ellipse> per process node, nothing else that draws; equal views render
// byte-equal markup, which is what the snapshot tests compare.

import { layoutView } from "./layout.js";
import type { AnimationView } from "./protocol.js";

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");
}

export function renderSvg(view: AnimationView): string {
  const layout = layoutView(view);
  const nodeById = new Map(view.nodes.map((n) => [n.id, n]));
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${layout.width} ${layout.height + 24}" ` +
      `width="${layout.width}" height="${layout.height + 24}" class="animation">`
  );
  for (const b of layout.boxes) {
    parts.push(
      `<g class="box" data-box="${b.id}">` +
        `<rect x="${b.x}" y="${b.y}" width="${b.w}" height="${b.h}" rx="6" ` +
        `fill="none" stroke="#526079" stroke-width="1.2"/>` +
        `<text x="${b.x + 8}" y="${b.y + 14}" class="box-label">${esc(b.label)}</text>` +
        `</g>`
    );
  }
  for (const n of layout.nodes) {
    const info = nodeById.get(n.id)!;
    const cls = info.terminated ? "done" : info.enabled ? "enabled" : "idle";
    const fill = info.terminated ? "#d8d8d8" : info.enabled ? "#355f91" : "#eef2f7";
    const textFill = info.enabled ? "#ffffff" : "#22303f";
    parts.push(
      `<g class="node ${cls}" data-node="${n.id}">` +
        `<ellipse cx="${n.x + n.w / 2}" cy="${n.y + n.h / 2}" rx="${n.w / 2}" ry="${n.h / 2}" ` +
        `fill="${fill}" stroke="#2c3e50" stroke-width="1"/>` +
        `<text x="${n.x + n.w / 2}" y="${n.y + n.h / 2 + 4}" text-anchor="middle" ` +
        `fill="${textFill}" font-size="11">${esc(info.name)}</text>` +
        `</g>`
    );
  }
  const status = view.terminated
    ? "terminated"
    : view.last_action
      ? `last action: ${view.last_action}`
      : "initial state";
  parts.push(
    `<text x="4" y="${layout.height + 16}" class="status" font-size="12">${esc(status)}</text>`
  );
  parts.push("</svg>");
  return parts.join("");
}

/** Shape census for the drawing audit: exactly one shape per box and node. */
export function countShapes(svg: string): { boxes: number; nodes: number } {
  return {
    boxes: (svg.match(/<rect /g) ?? []).length,
    nodes: (svg.match(/<ellipse /g) ?? []).length,
  };
}
