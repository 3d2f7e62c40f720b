// The live session panel: owns one protocol client and one view model,
// updates strictly from responses, and exposes the actions the widgets
// call.  Rendering is delegated to the pure functions so the DOM layer
// stays a thin shell (and the whole panel is drivable headlessly in tests).

import { Client, PROTOCOL_VERSION, Response, ServiceError, Transport } from "./protocol.js";
import { renderSvg } from "./render.js";
import { CALCULATOR_OPS, ViewModel, extractResult, project, rowWithLabel } from "./viewmodel.js";

export interface PanelEvents {
  changed(model: ViewModel): void;
}

export class SessionPanel {
  client: Client;
  model: ViewModel | null = null;
  private busy = false;

  private constructor(client: Client, private events: PanelEvents) {
    this.client = client;
  }

  /** Connect, check versions, create (or resume) a session. */
  static async connect(
    transport: Transport,
    events: PanelEvents,
    spec = "demo",
    seed = 0,
    resume?: string
  ): Promise<SessionPanel> {
    const panel = new SessionPanel(new Client(transport), events);
    const hello = await panel.client.hello();
    if (hello.protocol !== PROTOCOL_VERSION) {
      panel.model = {
        session: "",
        view: emptyView(),
        revision: -1,
        selected: null,
        connection: "live",
        banner: `service speaks protocol ${hello.protocol}, this UI needs ${PROTOCOL_VERSION}`,
        lastResult: null,
      };
      panel.events.changed(panel.model);
      return panel;
    }
    if (resume) {
      const r = await panel.client.view(resume);
      if (r.ok && r.view) {
        panel.apply(resume, r);
        return panel;
      }
    }
    const created = await panel.client.create(spec, seed);
    panel.apply(created.session!, created);
    return panel;
  }

  private apply(session: string, r: Response): void {
    if (!r.ok || !r.view) {
      if (this.model) {
        this.model = { ...this.model, banner: r.error ?? "request failed" };
        this.events.changed(this.model);
      }
      return;
    }
    this.model = project(session, r.view, r.revision ?? 0, this.model ?? undefined);
    this.events.changed(this.model);
  }

  private async exchange(run: () => Promise<Response>): Promise<void> {
    if (this.busy || !this.model) return; // one in-flight request per session
    this.busy = true;
    try {
      const r = await run();
      this.apply(this.model.session, r);
    } catch (err) {
      if (err instanceof ServiceError && this.model) {
        this.model = { ...this.model, connection: "lost" };
        this.events.changed(this.model);
      }
    } finally {
      this.busy = false;
    }
  }

  /** Fire the enabled row at `index`; sends exactly that index. */
  fireIndex(index: number): Promise<void> {
    return this.exchange(() => this.client.fire(this.model!.session, index, this.model!.revision));
  }

  fireLabel(label: string): Promise<void> {
    return this.exchange(() => this.client.fireLabel(this.model!.session, label));
  }

  undo(): Promise<void> {
    return this.exchange(() => this.client.undo(this.model!.session));
  }

  reset(): Promise<void> {
    return this.exchange(() => this.client.reset(this.model!.session));
  }

  async trace(): Promise<{ index: number; label: string }[]> {
    if (!this.model) return [];
    const r = await this.client.trace(this.model.session);
    return r.trace ?? [];
  }

  /** Push an operand typed into the calculator panel. */
  async pushOperand(value: number): Promise<void> {
    const label = `push(${value})`;
    const index = rowWithLabel(this.model!.view, label);
    if (index !== null) {
      await this.fireIndex(index);
    } else {
      await this.fireLabel(label); // beyond the browse bound: still a legal instance
    }
  }

  /**
   * Press a calculator operation button: fires the matching enabled
   * transition, then follows the deterministic pipeline while exactly one
   * transition stays enabled, so a call runs to its return.
   */
  async pressOp(button: string): Promise<void> {
    const op = CALCULATOR_OPS.find((o) => o.button === button);
    if (!op || !this.model) throw new ServiceError(`unknown calculator button ${button}`);
    const index = rowWithLabel(this.model.view, op.label);
    if (index === null) throw new ServiceError(`${op.label} is not enabled`);
    await this.fireIndex(index);
    await this.drainPipeline();
  }

  async drainPipeline(): Promise<void> {
    while (this.model && this.model.view.enabled.length === 1 && !this.model.view.terminated) {
      await this.fireIndex(this.model.view.enabled[0].index);
    }
  }

  get lastResult(): string | null {
    return this.model?.lastResult ?? null;
  }

  render(): string {
    return this.model ? renderSvg(this.model.view) : "";
  }

  close(): void {
    this.client.close();
  }
}

function emptyView() {
  return {
    boxes: [],
    nodes: [],
    last_action: null,
    enabled: [],
    terminated: false,
    error: null,
    trace_length: 0,
  };
}

export { extractResult };
