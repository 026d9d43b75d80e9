/** Websocket wrapper with automatic reconnection.
 *
 * Reconnects with exponential backoff (0.5 s doubling to an 8 s cap) after
 * any close; the UI greys the canvas while `connected` is false. Commands
 * sent while disconnected are dropped (the server is the single source of
 * truth, so replaying stale commands after a gap would be worse than
 * losing them).
 */
import { parseServerMessage, ProtocolError, type ServerMessage } from "./protocol.js";

export interface SocketCallbacks {
  onMessage: (msg: ServerMessage) => void;
  onStatus: (connected: boolean, note: string) => void;
}

const BACKOFF_START_MS = 500;
const BACKOFF_CAP_MS = 8000;

export class PlaygroundSocket {
  private ws: WebSocket | null = null;
  private backoffMs = BACKOFF_START_MS;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private closed = false;
  connected = false;

  constructor(
    private readonly url: string,
    private readonly cb: SocketCallbacks,
  ) {}

  connect(): void {
    this.closed = false;
    this.open();
  }

  private open(): void {
    if (this.closed) return;
    this.cb.onStatus(false, "connecting");
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.connected = true;
      this.backoffMs = BACKOFF_START_MS;
      this.cb.onStatus(true, "connected");
    };
    ws.onmessage = (ev: MessageEvent) => {
      if (typeof ev.data !== "string") return;
      try {
        this.cb.onMessage(parseServerMessage(ev.data));
      } catch (e) {
        if (!(e instanceof ProtocolError)) throw e;
        // a malformed message is logged, not fatal: the stream continues
        console.warn("dropped malformed server message:", e.message);
      }
    };
    ws.onclose = () => {
      const wasConnected = this.connected;
      this.connected = false;
      this.ws = null;
      if (this.closed) return;
      this.cb.onStatus(false, `reconnecting in ${(this.backoffMs / 1000).toFixed(1)} s`);
      this.timer = setTimeout(() => this.open(), this.backoffMs);
      if (!wasConnected) this.backoffMs = Math.min(this.backoffMs * 2, BACKOFF_CAP_MS);
    };
    ws.onerror = () => {
      // onclose always follows; nothing to do here
    };
  }

  /** Send a pre-validated command string; returns false if disconnected. */
  send(commandJson: string): boolean {
    if (!this.connected || this.ws === null) return false;
    this.ws.send(commandJson);
    return true;
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.ws?.close();
    this.ws = null;
    this.connected = false;
  }
}
