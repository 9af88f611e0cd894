/**
 * WebSocket session client with automatic reconnect and a send loop that
 * holds the control rate at or above 30 Hz while input is active.
 */

import { InputState } from './input.js';
import { makeControl, parseState } from './protocol.js';
import { ConsoleState } from './state.js';

const SEND_HZ = 40;
const RECONNECT_MS = 1000;

export class SessionClient {
  private socket: WebSocket | null = null;
  private sendTimer: number | null = null;
  private closed = false;

  constructor(private url: string,
              private console_: ConsoleState,
              private input: InputState) {}

  connect(): void {
    this.console_.status = 'connecting';
    let socket: WebSocket;
    try {
      socket = new WebSocket(this.url);
    } catch {
      this.console_.status = 'error';
      this.scheduleReconnect();
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      this.console_.status = 'connected';
      this.startSendLoop();
    };
    socket.onmessage = (ev: MessageEvent) => {
      const msg = parseState(String(ev.data));
      if (msg) this.console_.accept(msg);
    };
    socket.onerror = () => {
      this.console_.status = 'error';
    };
    socket.onclose = () => {
      this.stopSendLoop();
      if (!this.closed) {
        this.console_.status = 'error';
        this.scheduleReconnect();
      } else {
        this.console_.status = 'closed';
      }
    };
  }

  private scheduleReconnect(): void {
    if (!this.closed) setTimeout(() => this.connect(), RECONNECT_MS);
  }

  private startSendLoop(): void {
    this.stopSendLoop();
    this.sendTimer = setInterval(() => this.sendControl(), 1000 / SEND_HZ) as unknown as number;
  }

  private stopSendLoop(): void {
    if (this.sendTimer !== null) {
      clearInterval(this.sendTimer);
      this.sendTimer = null;
    }
  }

  private sendControl(): void {
    if (!this.socket || this.socket.readyState !== WebSocket.OPEN) return;
    if (!this.input.active) return;
    const msg = makeControl(this.input.haptic, this.input.gripperFraction(),
                            this.input.scale, this.input.locks);
    this.input.scale = undefined; // scale request is one-shot; locks re-send idempotently
    this.socket.send(JSON.stringify(msg));
    this.console_.controlsSent += 1;
  }

  close(): void {
    this.closed = true;
    this.stopSendLoop();
    this.socket?.close();
  }
}
