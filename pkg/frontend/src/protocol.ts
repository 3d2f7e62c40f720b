// Message protocol of the session service: one JSON object per line/frame,
// one response per request.  The client serializes requests itself so at
// most one is in flight per connection; state only ever updates from
// responses (no optimistic transitions).

export const PROTOCOL_VERSION = 1;

export interface BoxView {
  id: number;
  label: string;
  parent: number | null;
}

export interface NodeView {
  id: number;
  name: string;
  box: number;
  enabled: boolean;
  terminated: boolean;
  current: string;
}

export interface EnabledRow {
  index: number;
  label: string;
  participants: number[];
  target: string;
}

export interface AnimationView {
  boxes: BoxView[];
  nodes: NodeView[];
  last_action: string | null;
  enabled: EnabledRow[];
  terminated: boolean;
  error: string | null;
  trace_length: number;
}

export interface TraceEvent {
  index: number;
  label: string;
}

export interface Response {
  ok: boolean;
  error?: string;
  service?: string;
  protocol?: number;
  specs?: string[];
  session?: string;
  view?: AnimationView;
  revision?: number;
  enabled?: { index: number; label: string }[];
  terminated?: boolean;
  trace?: TraceEvent[];
}

export interface Transport {
  send(line: string): void;
  onLine(handler: (line: string) => void): void;
  onClose(handler: () => void): void;
  close(): void;
}

export class ServiceError extends Error {}

/** Request/response pairing over a line transport; strictly sequential. */
export class Client {
  private queue: Array<{ resolve: (r: Response) => void; reject: (e: Error) => void }> = [];
  private closed = false;

  constructor(private transport: Transport) {
    transport.onLine((line) => {
      const waiter = this.queue.shift();
      if (!waiter) return;
      try {
        waiter.resolve(JSON.parse(line) as Response);
      } catch (err) {
        waiter.reject(err as Error);
      }
    });
    transport.onClose(() => {
      this.closed = true;
      for (const waiter of this.queue.splice(0)) {
        waiter.reject(new ServiceError("connection lost"));
      }
    });
  }

  get isClosed(): boolean {
    return this.closed;
  }

  request(msg: Record<string, unknown>): Promise<Response> {
    if (this.closed) return Promise.reject(new ServiceError("connection lost"));
    return new Promise((resolve, reject) => {
      this.queue.push({ resolve, reject });
      this.transport.send(JSON.stringify(msg));
    });
  }

  async hello(): Promise<Response> {
    const r = await this.request({ op: "hello" });
    if (!r.ok) throw new ServiceError(r.error ?? "hello failed");
    return r;
  }

  async create(spec: string, seed = 0): Promise<Response> {
    const r = await this.request({ op: "create", spec, seed });
    if (!r.ok) throw new ServiceError(r.error ?? "create failed");
    return r;
  }

  view(session: string): Promise<Response> {
    return this.request({ op: "view", session });
  }

  enabled(session: string): Promise<Response> {
    return this.request({ op: "enabled", session });
  }

  fire(session: string, index: number, revision?: number): Promise<Response> {
    const msg: Record<string, unknown> = { op: "fire", session, index };
    if (revision !== undefined) msg.revision = revision;
    return this.request(msg);
  }

  fireLabel(session: string, label: string): Promise<Response> {
    return this.request({ op: "fire", session, label });
  }

  undo(session: string): Promise<Response> {
    return this.request({ op: "undo", session });
  }

  reset(session: string): Promise<Response> {
    return this.request({ op: "reset", session });
  }

  trace(session: string): Promise<Response> {
    return this.request({ op: "trace", session });
  }

  close(): void {
    this.transport.close();
  }
}
