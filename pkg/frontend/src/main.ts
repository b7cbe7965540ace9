// Entry point: connect to the teleop server (host/port via query params),
// pump input at the capped rate, render the latest state at 60 fps.

import { Camera } from "./camera.js";
import { InputSource, SendGate } from "./input.js";
import { encodeJoystick } from "./protocol.js";
import { render } from "./render.js";
import { ViewState } from "./view.js";

function main(): void {
  const params = new URLSearchParams(location.search);
  const host = params.get("host") ?? location.hostname ?? "127.0.0.1";
  const port = params.get("port") ?? "8765";
  const url = `ws://${host}:${port}/teleop`;

  const canvas = document.getElementById("arena") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const cam = new Camera(canvas.width, canvas.height);
  const view = new ViewState();
  const input = new InputSource();
  const gate = new SendGate();
  input.attach(document);

  canvas.addEventListener("wheel", (e) => {
    cam.zoomBy(e.deltaY < 0 ? 1.1 : 1 / 1.1);
    e.preventDefault();
  });

  let socket: WebSocket | null = null;
  let reconnectAt = 0;

  function connect(): void {
    socket = new WebSocket(url);
    socket.addEventListener("open", () => {
      view.connected = true;
    });
    socket.addEventListener("message", (e) => {
      view.handleMessage(String(e.data), performance.now());
    });
    socket.addEventListener("close", () => {
      view.connected = false;
      reconnectAt = performance.now() + 2000;
      socket = null;
    });
    socket.addEventListener("error", () => socket?.close());
  }

  connect();

  setInterval(() => {
    const now = performance.now();
    if (!socket && now >= reconnectAt) connect();
    if (socket?.readyState === WebSocket.OPEN) {
      const sample = input.sample();
      if (gate.shouldSend(sample, now)) {
        socket.send(encodeJoystick(sample.dir, sample.trigger));
      }
    }
  }, 25);

  function frame(): void {
    render(ctx, cam, view, performance.now());
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);

  const help = document.getElementById("help");
  if (help && typeof navigator.getGamepads !== "function") {
    help.textContent = "keyboard-only mode: WASD to steer, space to scoop";
  }
}

window.addEventListener("load", main);
