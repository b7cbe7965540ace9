// Wire protocol shared with the teleop server: single-line JSON texts.

export type Phase = "Ground" | "Carried" | "Ballistic" | "Loaded";

export interface RobotPose {
  pos: [number, number];
  yaw: number;
  vel: [number, number];
  yaw_rate: number;
  scoop_height: number;
  scoop_pitch: number;
}

export interface ObjectView {
  position: [number, number, number];
  phase: Phase;
}

export interface StateMessage {
  type: "state";
  time: number;
  robot: RobotPose;
  objects: ObjectView[];
  n_loaded: number;
  active_expert: "approach" | "scoop_toss" | "idle";
  malformed: number;
}

export interface RoleMessage {
  type: "role";
  role: "controller" | "observer";
}

export interface JoystickMessage {
  type: "joystick";
  dir: [number, number];
  trigger: boolean;
}

const PHASES = new Set(["Ground", "Carried", "Ballistic", "Loaded"]);
const EXPERTS = new Set(["approach", "scoop_toss", "idle"]);

function isVec(v: unknown, n: number): boolean {
  return Array.isArray(v) && v.length === n &&
    v.every((x) => typeof x === "number" && Number.isFinite(x));
}

export function parseServerMessage(text: string): StateMessage | RoleMessage {
  let msg: any;
  try {
    msg = JSON.parse(text);
  } catch {
    throw new Error("not JSON");
  }
  if (msg?.type === "role") {
    if (msg.role !== "controller" && msg.role !== "observer") {
      throw new Error("bad role");
    }
    return msg as RoleMessage;
  }
  if (msg?.type !== "state") throw new Error(`unknown type ${msg?.type}`);
  const r = msg.robot;
  if (
    typeof msg.time !== "number" || !r || !isVec(r.pos, 2) ||
    typeof r.yaw !== "number" || !isVec(r.vel, 2) ||
    typeof r.yaw_rate !== "number" || typeof r.scoop_height !== "number" ||
    typeof r.scoop_pitch !== "number"
  ) {
    throw new Error("bad robot block");
  }
  if (!Array.isArray(msg.objects)) throw new Error("bad objects");
  for (const o of msg.objects) {
    if (!isVec(o?.position, 3) || !PHASES.has(o?.phase)) {
      throw new Error("bad object entry");
    }
  }
  if (typeof msg.n_loaded !== "number" || !EXPERTS.has(msg.active_expert)) {
    throw new Error("bad counters");
  }
  return msg as StateMessage;
}

export function encodeJoystick(dir: [number, number], trigger: boolean): string {
  const msg: JoystickMessage = { type: "joystick", dir, trigger };
  return JSON.stringify(msg);
}
