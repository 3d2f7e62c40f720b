// The view model is a pure projection of the last received view plus
// client-side selection; no semantic simulation state lives here.

import type { AnimationView } from "./protocol.js";

export interface ViewModel {
  session: string;
  view: AnimationView;
  revision: number;
  selected: number | null; // selected enabled row
  connection: "live" | "lost";
  banner: string | null; // version mismatch or error banner
  lastResult: string | null; // calculator: value carried by the last return
}

export function project(
  session: string,
  view: AnimationView,
  revision: number,
  previous?: ViewModel
): ViewModel {
  return {
    session,
    view,
    revision,
    selected: null,
    connection: previous?.connection ?? "live",
    banner: previous?.banner ?? null,
    lastResult: extractResult(view.last_action) ?? previous?.lastResult ?? null,
  };
}

/** The result the operator just received, read off a c-return label. */
export function extractResult(label: string | null): string | null {
  if (!label) return null;
  const m = label.match(/^c-return\([^,]+, operator, (\d+)\)$/);
  return m ? m[1] : null;
}

/** Calculator buttons and the transition labels they stand for. */
export const CALCULATOR_OPS: Array<{ button: string; label: string }> = [
  { button: "++", label: "succ-op" },
  { button: "--", label: "pred-op" },
  { button: "=", label: "iszero-op" },
  { button: "add", label: "add-op" },
  { button: "sub", label: "sub-op" },
  { button: "mul", label: "mul-op" },
  { button: "div", label: "div-op" },
  { button: "quit", label: "stop" },
];

/** Index of the enabled row carrying `label`, or null when not offered. */
export function rowWithLabel(view: AnimationView, label: string): number | null {
  for (const row of view.enabled) {
    if (row.label === label) return row.index;
  }
  return null;
}
