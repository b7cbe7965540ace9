// Direction + trigger input from WASD keys or a gamepad left stick, with the
// send policy: at most 20 messages/s, sent only on change or every 500 ms as
// keepalive.

export interface InputSample {
  dir: [number, number]; // UI forward convention: W => +x (robot forward)
  trigger: boolean;
}

export const DEADZONE = 0.15;
export const SEND_HZ = 20;
export const KEEPALIVE_MS = 500;

export function applyDeadzone(x: number, y: number): [number, number] {
  const mag = Math.hypot(x, y);
  if (mag < DEADZONE) return [0, 0];
  return [x / Math.max(mag, 1), y / Math.max(mag, 1)];
}

export function keysToDir(keys: Set<string>): [number, number] {
  let x = 0;
  let y = 0;
  if (keys.has("w")) x += 1;
  if (keys.has("s")) x -= 1;
  if (keys.has("a")) y += 1; // robot +y is its left
  if (keys.has("d")) y -= 1;
  const mag = Math.hypot(x, y);
  return mag > 0 ? [x / mag, y / mag] : [0, 0];
}

export function sameSample(a: InputSample, b: InputSample): boolean {
  return a.trigger === b.trigger && a.dir[0] === b.dir[0] &&
    a.dir[1] === b.dir[1];
}

/** Decides when a sample actually goes out; pure logic, testable. */
export class SendGate {
  private lastSent: InputSample | null = null;
  private lastSentAt = -Infinity;
  sentCount = 0;

  constructor(private minIntervalMs = 1000 / SEND_HZ,
              private keepaliveMs = KEEPALIVE_MS) {}

  shouldSend(sample: InputSample, nowMs: number): boolean {
    if (nowMs - this.lastSentAt < this.minIntervalMs) return false;
    const changed = this.lastSent === null ||
      !sameSample(sample, this.lastSent);
    const stale = nowMs - this.lastSentAt >= this.keepaliveMs;
    if (!changed && !stale) return false;
    this.lastSent = { dir: [sample.dir[0], sample.dir[1]],
                      trigger: sample.trigger };
    this.lastSentAt = nowMs;
    this.sentCount += 1;
    return true;
  }
}

/** Browser-side collector; keyboard always works, gamepad when present. */
export class InputSource {
  keys = new Set<string>();
  gamepadIndex: number | null = null;

  attach(target: EventTarget): void {
    target.addEventListener("keydown", (e) => {
      const k = (e as KeyboardEvent).key.toLowerCase();
      if (k === " ") this.keys.add("space");
      else this.keys.add(k);
    });
    target.addEventListener("keyup", (e) => {
      const k = (e as KeyboardEvent).key.toLowerCase();
      if (k === " ") this.keys.delete("space");
      else this.keys.delete(k);
    });
    if (typeof window !== "undefined") {
      window.addEventListener("gamepadconnected", (e) => {
        this.gamepadIndex = (e as GamepadEvent).gamepad.index;
      });
      window.addEventListener("gamepaddisconnected", () => {
        this.gamepadIndex = null;
      });
    }
  }

  sample(): InputSample {
    if (this.gamepadIndex !== null && typeof navigator !== "undefined") {
      const gp = navigator.getGamepads?.()[this.gamepadIndex];
      if (gp) {
        // stick up is -axes[1]; map to robot forward, stick left to robot left
        const [dx, dy] = applyDeadzone(-(gp.axes[1] ?? 0), -(gp.axes[0] ?? 0));
        const trigger = !!gp.buttons[0]?.pressed;
        if (dx !== 0 || dy !== 0 || trigger) return { dir: [dx, dy], trigger };
      }
    }
    return { dir: keysToDir(this.keys), trigger: this.keys.has("space") };
  }
}
