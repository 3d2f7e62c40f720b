// Transports carrying one JSON message per line (TCP) or frame (WebSocket).

import type { Transport } from "./protocol.js";

export class WebSocketTransport implements Transport {
  private lineHandler: (line: string) => void = () => {};
  private closeHandler: () => void = () => {};
  private ws: WebSocket;

  constructor(url: string, onOpen: () => void) {
    this.ws = new WebSocket(url);
    this.ws.onopen = onOpen;
    this.ws.onmessage = (ev) => this.lineHandler(String(ev.data));
    this.ws.onclose = () => this.closeHandler();
    this.ws.onerror = () => this.closeHandler();
  }

  send(line: string): void {
    this.ws.send(line);
  }

  onLine(handler: (line: string) => void): void {
    this.lineHandler = handler;
  }

  onClose(handler: () => void): void {
    this.closeHandler = handler;
  }

  close(): void {
    this.ws.close();
  }
}

/** Raw TCP transport for tests running under node. */
export class TcpTransport implements Transport {
  private lineHandler: (line: string) => void = () => {};
  private closeHandler: () => void = () => {};
  private socket: import("node:net").Socket;
  private buffer = "";

  private constructor(socket: import("node:net").Socket) {
    this.socket = socket;
    socket.on("data", (chunk: Buffer) => {
      this.buffer += chunk.toString("utf-8");
      let nl;
      while ((nl = this.buffer.indexOf("\n")) >= 0) {
        const line = this.buffer.slice(0, nl);
        this.buffer = this.buffer.slice(nl + 1);
        if (line.trim()) this.lineHandler(line);
      }
    });
    socket.on("close", () => this.closeHandler());
    socket.on("error", () => this.closeHandler());
  }

  static async connect(host: string, port: number): Promise<TcpTransport> {
    const net = await import("node:net");
    const socket = net.createConnection({ host, port });
    await new Promise<void>((resolve, reject) => {
      socket.once("connect", resolve);
      socket.once("error", reject);
    });
    return new TcpTransport(socket);
  }

  send(line: string): void {
    this.socket.write(line + "\n");
  }

  onLine(handler: (line: string) => void): void {
    this.lineHandler = handler;
  }

  onClose(handler: () => void): void {
    this.closeHandler = handler;
  }

  close(): void {
    this.socket.end();
    this.socket.destroy();
  }
}
