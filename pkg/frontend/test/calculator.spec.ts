import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { SessionPanel } from "../src/panel.js";
import { countShapes } from "../src/render.js";
import { TcpTransport } from "../src/transport.js";
import type { ViewModel } from "../src/viewmodel.js";
import { LiveService, startService } from "./helpers.js";

let service: LiveService;

beforeAll(async () => {
  service = await startService();
}, 40000);

afterAll(() => {
  service.stop();
});

async function openPanel(): Promise<{ panel: SessionPanel; models: ViewModel[] }> {
  const models: ViewModel[] = [];
  const transport = await TcpTransport.connect("127.0.0.1", service.port);
  const panel = await SessionPanel.connect(transport, {
    changed: (m) => models.push(m),
  });
  return { panel, models };
}

describe("calculator panel", () => {
  it("drives multiply(3, 4) end to end and displays 12", async () => {
    const { panel } = await openPanel();
    await panel.pushOperand(3);
    await panel.pushOperand(4);
    await panel.pressOp("mul");
    expect(panel.lastResult).toBe("12");
    expect(panel.model!.view.last_action).toBe("c-return(complex, operator, 12)");
    const trace = await panel.trace();
    const succCalls = trace.filter((e) => /^s-call\(primitive, succ\(\d+\)\)$/.test(e.label));
    expect(succCalls.length).toBe(12);
    panel.close();
  }, 30000);

  it("accepts operands beyond the browse enumeration", async () => {
    const { panel } = await openPanel();
    await panel.pushOperand(13);
    await panel.pushOperand(4);
    await panel.pressOp("div");
    expect(panel.lastResult).toBe("3");
    panel.close();
  }, 30000);

  it("quit drives shutdown and the view shows the terminated state", async () => {
    const { panel } = await openPanel();
    await panel.pressOp("quit");
    await panel.drainPipeline();
    expect(panel.model!.view.terminated).toBe(true);
    expect(panel.render()).toContain("terminated");
    panel.close();
  });

  it("undo restores the previous rendering exactly", async () => {
    const { panel } = await openPanel();
    const before = panel.render();
    await panel.pushOperand(5);
    expect(panel.render()).not.toEqual(before);
    await panel.undo();
    expect(panel.render()).toEqual(before);
    panel.close();
  });

  it("renders one shape per node and box of the received view", async () => {
    const { panel } = await openPanel();
    const view = panel.model!.view;
    expect(countShapes(panel.render())).toEqual({
      boxes: view.boxes.length,
      nodes: view.nodes.length,
    });
    expect(view.nodes.map((n) => n.name)).toContain("C-I(operator, complex)");
    panel.close();
  });

  it("fires exactly the index of the clicked row", async () => {
    const { panel } = await openPanel();
    const row = panel.model!.view.enabled.find((r) => r.label === "push(7)")!;
    await panel.fireIndex(row.index);
    expect(panel.model!.view.last_action).toBe("push(7)");
    panel.close();
  });
});
