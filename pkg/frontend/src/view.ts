// Latest-state store decoupling the render loop from the network rate.

import type { RoleMessage, StateMessage } from "./protocol.js";
import { parseServerMessage } from "./protocol.js";

export const STALE_AFTER_MS = 500;

export interface LoadedEvent {
  time: number;
  count: number;
}

export class ViewState {
  state: StateMessage | null = null;
  role: "controller" | "observer" | null = null;
  connected = false;
  lastMessageAt = -Infinity;
  parseErrors = 0;
  loadedHistory: LoadedEvent[] = [];

  handleMessage(text: string, nowMs: number): void {
    let msg: StateMessage | RoleMessage;
    try {
      msg = parseServerMessage(text);
    } catch {
      this.parseErrors += 1;
      return;
    }
    this.lastMessageAt = nowMs;
    if (msg.type === "role") {
      this.role = msg.role;
      return;
    }
    const prev = this.state?.n_loaded ?? 0;
    if (msg.n_loaded > prev) {
      this.loadedHistory.push({ time: msg.time, count: msg.n_loaded });
    }
    this.state = msg; // rendering never mutates this
  }

  isStale(nowMs: number): boolean {
    return this.connected && nowMs - this.lastMessageAt > STALE_AFTER_MS;
  }
}
