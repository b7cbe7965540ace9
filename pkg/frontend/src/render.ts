// Top-down 2D arena renderer. The reduced robot is planar, so a plan view
// shows everything: base + heading, scoop footprint (color encodes height),
// tray with the loaded count, and objects colored by phase.

import { Camera } from "./camera.js";
import type { StateMessage } from "./protocol.js";
import type { ViewState } from "./view.js";

export const PHASE_COLORS: Record<string, string> = {
  Ground: "#ffd92f",
  Carried: "#fc8d62",
  Ballistic: "#8da0cb",
  Loaded: "#66c2a5",
};

const SCOOP_MOUNT: [number, number] = [0.25, -0.12];
const SCOOP_HALF: [number, number] = [0.0675, 0.0825];
const TRAY_OFFSET: [number, number] = [-0.2, 0.0];
const TRAY_HALF: [number, number] = [0.145, 0.145];

function rot(x: number, y: number, yaw: number): [number, number] {
  const c = Math.cos(yaw);
  const s = Math.sin(yaw);
  return [c * x - s * y, s * x + c * y];
}

export function drawGrid(ctx: CanvasRenderingContext2D, cam: Camera): void {
  ctx.strokeStyle = "#e3e3e3";
  ctx.lineWidth = 1;
  const span = 12;
  for (let i = -span; i <= span; i++) {
    let [x0, y0] = cam.toScreen(i, -span);
    let [x1, y1] = cam.toScreen(i, span);
    ctx.beginPath();
    ctx.moveTo(x0, y0);
    ctx.lineTo(x1, y1);
    ctx.stroke();
    [x0, y0] = cam.toScreen(-span, i);
    [x1, y1] = cam.toScreen(span, i);
    ctx.beginPath();
    ctx.moveTo(x0, y0);
    ctx.lineTo(x1, y1);
    ctx.stroke();
  }
}

function drawBox(ctx: CanvasRenderingContext2D, cam: Camera,
                 cx: number, cy: number, yaw: number,
                 half: [number, number], fill: string, stroke: string): void {
  const corners: [number, number][] = [
    [half[0], half[1]], [half[0], -half[1]],
    [-half[0], -half[1]], [-half[0], half[1]],
  ];
  ctx.beginPath();
  corners.forEach(([dx, dy], i) => {
    const [wx, wy] = rot(dx, dy, yaw);
    const [sx, sy] = cam.toScreen(cx + wx, cy + wy);
    if (i === 0) ctx.moveTo(sx, sy);
    else ctx.lineTo(sx, sy);
  });
  ctx.closePath();
  ctx.fillStyle = fill;
  ctx.fill();
  ctx.strokeStyle = stroke;
  ctx.stroke();
}

export function scoopColor(height: number): string {
  // low = ready to scoop (green), high = raised (red)
  const t = Math.min(1, Math.max(0, height / 0.8));
  const r = Math.round(90 + t * 165);
  const g = Math.round(190 - t * 120);
  return `rgb(${r},${g},80)`;
}

export function render(ctx: CanvasRenderingContext2D, cam: Camera,
                       view: ViewState, nowMs: number): void {
  ctx.clearRect(0, 0, cam.width, cam.height);
  drawGrid(ctx, cam);
  const st = view.state;
  if (!st) {
    badge(ctx, "waiting for state…", "#888");
    return;
  }
  const [rx, ry] = st.robot.pos;
  const yaw = st.robot.yaw;
  cam.follow(rx, ry, 0.08);

  // tray (with loaded count), then base, then scoop on top
  const [tx, ty] = rot(TRAY_OFFSET[0], TRAY_OFFSET[1], yaw);
  drawBox(ctx, cam, rx + tx, ry + ty, yaw, TRAY_HALF, "#d9d9ef", "#6a6aa0");
  drawBox(ctx, cam, rx, ry, yaw, [0.18, 0.14], "#cccccc", "#555");
  const [sxo, syo] = rot(SCOOP_MOUNT[0], SCOOP_MOUNT[1], yaw);
  drawBox(ctx, cam, rx + sxo, ry + syo, yaw, SCOOP_HALF,
          scoopColor(st.robot.scoop_height), "#333");

  // heading arrow
  const [hx, hy] = rot(0.32, 0, yaw);
  const [sx0, sy0] = cam.toScreen(rx, ry);
  const [sx1, sy1] = cam.toScreen(rx + hx, ry + hy);
  ctx.strokeStyle = "#222";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(sx0, sy0);
  ctx.lineTo(sx1, sy1);
  ctx.stroke();

  // objects by phase
  for (const o of st.objects) {
    const [ox, oy] = cam.toScreen(o.position[0], o.position[1]);
    ctx.beginPath();
    ctx.arc(ox, oy, Math.max(3, cam.scale(0.03)), 0, 2 * Math.PI);
    ctx.fillStyle = PHASE_COLORS[o.phase] ?? "#000";
    ctx.fill();
    ctx.strokeStyle = "#333";
    ctx.stroke();
  }

  // counters and status line
  const [trayX, trayY] = cam.toScreen(rx + tx, ry + ty);
  ctx.fillStyle = "#222";
  ctx.font = "bold 14px sans-serif";
  ctx.fillText(String(st.n_loaded), trayX - 4, trayY + 5);
  badge(ctx,
        `t=${st.time.toFixed(1)}s  loaded ${st.n_loaded}  ` +
        `expert: ${st.active_expert}  role: ${view.role ?? "?"}`,
        "#222");
  if (view.isStale(nowMs)) {
    ctx.fillStyle = "rgba(120,120,120,0.45)";
    ctx.fillRect(0, 0, cam.width, cam.height);
    badge(ctx, "stale — no server messages", "#a00", 46);
  }
}

function badge(ctx: CanvasRenderingContext2D, text: string, color: string,
               y = 22): void {
  ctx.fillStyle = color;
  ctx.font = "14px sans-serif";
  ctx.fillText(text, 12, y);
}
