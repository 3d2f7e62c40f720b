// Static nested-box layout: boxes contain their child boxes and nodes in a
// horizontal flow.  Everything is computed from the box tree alone, so the
// positions are deterministic per view shape (no physics, no randomness).

import type { AnimationView } from "./protocol.js";

export interface NodeShape {
  kind: "node";
  id: number;
  name: string;
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface BoxShape {
  kind: "box";
  id: number;
  label: string;
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface Layout {
  boxes: BoxShape[];
  nodes: NodeShape[];
  width: number;
  height: number;
}

const PAD = 12;
const TITLE = 18;
const GAP = 10;
const NODE_H = 40;

function nodeWidth(name: string): number {
  return Math.max(110, 18 + name.length * 7.2);
}

export function layoutView(view: AnimationView): Layout {
  const kidsOf = new Map<number, number[]>();
  for (const b of view.boxes) {
    if (b.parent !== null) {
      const list = kidsOf.get(b.parent) ?? [];
      list.push(b.id);
      kidsOf.set(b.parent, list);
    }
  }
  const nodesOf = new Map<number, number[]>();
  for (const n of view.nodes) {
    const list = nodesOf.get(n.box) ?? [];
    list.push(n.id);
    nodesOf.set(n.box, list);
  }
  const boxById = new Map(view.boxes.map((b) => [b.id, b]));
  const nodeById = new Map(view.nodes.map((n) => [n.id, n]));

  const boxes: BoxShape[] = [];
  const nodes: NodeShape[] = [];

  function measure(boxId: number): { w: number; h: number } {
    let w = PAD;
    let h = 0;
    for (const nid of nodesOf.get(boxId) ?? []) {
      const node = nodeById.get(nid)!;
      w += nodeWidth(node.name) + GAP;
      h = Math.max(h, NODE_H);
    }
    for (const kid of kidsOf.get(boxId) ?? []) {
      const m = measure(kid);
      w += m.w + GAP;
      h = Math.max(h, m.h);
    }
    return { w: Math.max(w + PAD - GAP, 80), h: h + TITLE + 2 * PAD };
  }

  function place(boxId: number, x: number, y: number): { w: number; h: number } {
    const size = measure(boxId);
    const box = boxById.get(boxId)!;
    boxes.push({ kind: "box", id: boxId, label: box.label, x, y, w: size.w, h: size.h });
    let cx = x + PAD;
    const cy = y + TITLE + PAD;
    for (const nid of nodesOf.get(boxId) ?? []) {
      const node = nodeById.get(nid)!;
      const w = nodeWidth(node.name);
      nodes.push({ kind: "node", id: nid, name: node.name, x: cx, y: cy, w, h: NODE_H });
      cx += w + GAP;
    }
    for (const kid of kidsOf.get(boxId) ?? []) {
      const m = place(kid, cx, cy);
      cx += m.w + GAP;
    }
    return size;
  }

  const roots = view.boxes.filter((b) => b.parent === null).map((b) => b.id);
  let x = 0;
  let height = 0;
  for (const root of roots) {
    const size = place(root, x, 0);
    x += size.w + GAP;
    height = Math.max(height, size.h);
  }
  return { boxes, nodes, width: Math.max(x, 1), height: Math.max(height, 1) };
}
