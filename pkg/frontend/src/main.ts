/** Playground client entry point.
 *
 * Wires the socket, camera, renderer, charts, and pointer tools together.
 * The server is the single source of truth: the UI renders the latest
 * received frame (dropping older ones under load rather than lagging) and
 * every interaction becomes a validated command over the socket.
 */
import { Camera } from "./transform.js";
import { Trail } from "./trail.js";
import { StripChart } from "./charts.js";
import { SceneRenderer, type DragGhost, type PendingObstacle } from "./render.js";
import { PlaygroundSocket } from "./socket.js";
import {
  addCircleObstacle,
  moveObstacle,
  nudge,
  parseTargetArray,
  pause,
  removeObstacle,
  reset,
  resume,
  setParam,
  setState,
  ProtocolError,
  type Frame,
  type Obstacle,
  type ParamName,
  type ServerMessage,
} from "./protocol.js";

type Tool = "drag" | "obstacle" | "inspect";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
};

const canvas = $<HTMLCanvasElement>("scene");
const chartCanvas = $<HTMLCanvasElement>("charts");
const statusEl = $("status");
const toastEl = $("toast");

const camera = new Camera(canvas.clientWidth || 800, canvas.clientHeight || 600);
const ctx = canvas.getContext("2d")!;
const chartCtx = chartCanvas.getContext("2d")!;
const renderer = new SceneRenderer(ctx, camera);
const trail = new Trail(2000);
const vChart = new StripChart({ label: "V(e)  [log]", logScale: true, color: "#68c487" });
const bChart = new StripChart({ label: "min B", markZero: true, color: "#d9a44a" });

let latestFrame: Frame | null = null;
let targetPoints: number[][] | null = null;
let targetPeriodic = false;
let targetDigest = "";
let connected = false;
let statusNote = "connecting";
let tool: Tool = "drag";
let dragGhost: DragGhost | null = null;
let pendingObstacle: PendingObstacle | null = null;
let framesThisSecond = 0;
let fps = 0;
let camerafit = false;

// ---- helpers -----------------------------------------------------------------

function toast(message: string, kind: "error" | "info" = "error"): void {
  const div = document.createElement("div");
  div.className = `toast ${kind}`;
  div.textContent = message;
  toastEl.appendChild(div);
  setTimeout(() => div.remove(), 4000);
}

function trySend(build: () => string): void {
  let text: string;
  try {
    text = build();
  } catch (e) {
    if (e instanceof ProtocolError) {
      toast(e.message);
      return;
    }
    throw e;
  }
  if (!socket.send(text)) toast("not connected — command dropped", "info");
}

/** Full-dimension state with the projected plane replaced by (wx, wy). */
function liftToState(w: readonly [number, number]): number[] {
  const base = latestFrame ? latestFrame.x.slice() : [0, 0];
  base[0] = w[0];
  if (base.length > 1) base[1] = w[1];
  return base;
}

function liftToVector(w: readonly [number, number], dim: number): number[] {
  const v = new Array<number>(dim).fill(0);
  v[0] = w[0];
  if (dim > 1) v[1] = w[1];
  return v;
}

function obstacleCenter(ob: Obstacle): number[] {
  if (ob.shape === "circle") return ob.center.slice();
  return ob.min.map((lo, i) => (lo + (ob.max[i] ?? lo)) / 2);
}

function hitObstacle(w: readonly [number, number]): Obstacle | null {
  if (!latestFrame) return null;
  for (const ob of latestFrame.obstacles) {
    if (ob.shape === "circle") {
      const dx = w[0] - (ob.center[0] ?? 0);
      const dy = w[1] - (ob.center[1] ?? 0);
      if (Math.hypot(dx, dy) <= ob.radius) return ob;
    } else {
      const inX = w[0] >= (ob.min[0] ?? 0) && w[0] <= (ob.max[0] ?? 0);
      const inY = w[1] >= (ob.min[1] ?? -1e30) && w[1] <= (ob.max[1] ?? 1e30);
      if (inX && inY) return ob;
    }
  }
  return null;
}

async function fetchTargetArray(): Promise<void> {
  try {
    const res = await fetch("/target_array");
    if (!res.ok) throw new Error(`HTTP ${res.status}`);
    const payload = parseTargetArray(await res.json());
    targetPoints = payload.points;
    targetPeriodic = payload.periodic;
    targetDigest = payload.digest;
    if (!camerafit && targetPoints.length > 0) {
      let minX = Infinity;
      let minY = Infinity;
      let maxX = -Infinity;
      let maxY = -Infinity;
      for (const p of targetPoints) {
        minX = Math.min(minX, p[0] ?? 0);
        maxX = Math.max(maxX, p[0] ?? 0);
        minY = Math.min(minY, p[1] ?? 0);
        maxY = Math.max(maxY, p[1] ?? 0);
      }
      camera.fitBounds([minX, minY], [maxX, maxY], 60);
      camerafit = true;
    }
  } catch (e) {
    toast(`target array fetch failed: ${String(e)}`, "info");
  }
}

// ---- socket ------------------------------------------------------------------

function onMessage(msg: ServerMessage): void {
  switch (msg.kind) {
    case "frame": {
      latestFrame = msg.frame;
      trail.push(msg.frame.x);
      vChart.push(msg.frame.t, msg.frame.V);
      bChart.push(msg.frame.t, msg.frame.minB);
      framesThisSecond += 1;
      if (msg.frame.target_array_digest !== targetDigest) void fetchTargetArray();
      break;
    }
    case "error":
      toast(msg.message);
      break;
    case "warning":
      toast(msg.message, "info");
      break;
    case "ack":
      if (msg.ack === "reset") trail.clear();
      break;
  }
}

const wsProto = location.protocol === "https:" ? "wss" : "ws";
const socket = new PlaygroundSocket(`${wsProto}://${location.host}/ws`, {
  onMessage,
  onStatus: (ok, note) => {
    connected = ok;
    statusNote = note;
    if (ok) void fetchTargetArray();
  },
});

// ---- pointer tools -----------------------------------------------------------

interface PointerSession {
  kind: "drag" | "pan" | "obstacle-new" | "obstacle-move";
  startScreen: [number, number];
  lastScreen: [number, number];
  startWorld: [number, number];
  nudgeKey: boolean;
  obstacleId?: number;
  obstacleStartCenter?: number[];
  moved: boolean;
}

let session: PointerSession | null = null;
const DRAG_PICK_PX = 24;
const CLICK_SLOP_PX = 3;

function pointerPos(ev: PointerEvent): [number, number] {
  const r = canvas.getBoundingClientRect();
  return [ev.clientX - r.left, ev.clientY - r.top];
}

canvas.addEventListener("pointerdown", (ev) => {
  const s = pointerPos(ev);
  const w = camera.screenToWorld(s);
  canvas.setPointerCapture(ev.pointerId);

  if (ev.button === 1 || tool === "inspect") {
    session = { kind: "pan", startScreen: s, lastScreen: s, startWorld: w, nudgeKey: false, moved: false };
    return;
  }
  if (tool === "drag") {
    if (!latestFrame) return;
    const robot = camera.worldToScreen([latestFrame.x[0] ?? 0, latestFrame.x[1] ?? 0]);
    if (Math.hypot(s[0] - robot[0], s[1] - robot[1]) > DRAG_PICK_PX) return;
    session = {
      kind: "drag",
      startScreen: s,
      lastScreen: s,
      startWorld: [latestFrame.x[0] ?? 0, latestFrame.x[1] ?? 0],
      nudgeKey: ev.shiftKey,
      moved: false,
    };
    return;
  }
  // obstacle tool
  const hit = hitObstacle(w);
  if (hit && ev.altKey) {
    trySend(() => removeObstacle(hit.id));
    return;
  }
  if (hit) {
    session = {
      kind: "obstacle-move",
      startScreen: s,
      lastScreen: s,
      startWorld: w,
      nudgeKey: false,
      obstacleId: hit.id,
      obstacleStartCenter: obstacleCenter(hit),
      moved: false,
    };
  } else {
    session = { kind: "obstacle-new", startScreen: s, lastScreen: s, startWorld: w, nudgeKey: false, moved: false };
    pendingObstacle = { centerWorld: w, radiusWorld: 0 };
  }
});

canvas.addEventListener("pointermove", (ev) => {
  if (!session) return;
  const s = pointerPos(ev);
  const moved =
    Math.hypot(s[0] - session.startScreen[0], s[1] - session.startScreen[1]) > CLICK_SLOP_PX;
  session.moved = session.moved || moved;

  switch (session.kind) {
    case "pan": {
      camera.panByScreen(-(s[0] - session.lastScreen[0]), -(s[1] - session.lastScreen[1]));
      break;
    }
    case "drag": {
      const d = camera.dragDeltaWorld(session.startScreen, s);
      dragGhost = {
        fromWorld: session.startWorld,
        toWorld: [session.startWorld[0] + d[0], session.startWorld[1] + d[1]],
        nudge: session.nudgeKey,
      };
      break;
    }
    case "obstacle-new": {
      const d = camera.dragDeltaWorld(session.startScreen, s);
      pendingObstacle = {
        centerWorld: session.startWorld,
        radiusWorld: Math.hypot(d[0], d[1]),
      };
      break;
    }
    case "obstacle-move": {
      // live move, throttled by the pointermove rate itself (~60 Hz)
      if (session.obstacleId !== undefined && session.obstacleStartCenter) {
        const d = camera.dragDeltaWorld(session.startScreen, s);
        const c = session.obstacleStartCenter.slice();
        c[0] = (c[0] ?? 0) + d[0];
        if (c.length > 1) c[1] = (c[1] ?? 0) + d[1];
        const id = session.obstacleId;
        trySend(() => moveObstacle(id, c));
      }
      break;
    }
  }
  session.lastScreen = s;
});

canvas.addEventListener("pointerup", (ev) => {
  if (!session) return;
  const s = pointerPos(ev);
  const sess = session;
  session = null;
  dragGhost = null;
  const pending = pendingObstacle;
  pendingObstacle = null;

  if (!sess.moved && sess.kind !== "pan") return; // click without motion: no-op

  switch (sess.kind) {
    case "drag": {
      const d = camera.dragDeltaWorld(sess.startScreen, s);
      const toW: [number, number] = [sess.startWorld[0] + d[0], sess.startWorld[1] + d[1]];
      if (sess.nudgeKey) {
        const dim = latestFrame ? latestFrame.x.length : 2;
        // held-drag length sets the bias; applied for half a second
        trySend(() => nudge(liftToVector([2 * d[0], 2 * d[1]], dim), 0.5));
      } else {
        trySend(() => setState(liftToState(toW)));
      }
      break;
    }
    case "obstacle-new": {
      if (pending && pending.radiusWorld * camera.zoom >= 6) {
        const dim = latestFrame ? latestFrame.x.length : 2;
        const center = liftToVector(
          [pending.centerWorld[0] ?? 0, pending.centerWorld[1] ?? 0],
          dim,
        );
        // in 3-D scenes the obstacle is placed in the robot's current plane
        if (dim > 2 && latestFrame) {
          for (let i = 2; i < dim; i++) center[i] = latestFrame.x[i] ?? 0;
        }
        trySend(() => addCircleObstacle(center, pending.radiusWorld));
      }
      break;
    }
    default:
      break;
  }
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  const factor = Math.exp(-ev.deltaY * 0.0015);
  camera.zoomAt(pointerPos(ev as unknown as PointerEvent), factor);
}, { passive: false });

// ---- toolbar -----------------------------------------------------------------

for (const t of ["drag", "obstacle", "inspect"] as const) {
  $(`tool-${t}`).addEventListener("click", () => {
    tool = t;
    for (const u of ["drag", "obstacle", "inspect"]) {
      $(`tool-${u}`).classList.toggle("active", u === t);
    }
  });
}
$("btn-pause").addEventListener("click", () => trySend(pause));
$("btn-resume").addEventListener("click", () => trySend(resume));
$("btn-reset").addEventListener("click", () => trySend(() => reset()));

function bindParam(id: string, name: ParamName): void {
  const input = $<HTMLInputElement>(id);
  input.addEventListener("change", () => {
    const value = Number(input.value);
    trySend(() => setParam(name, name === "lookahead" ? Math.round(value) : value));
  });
}
bindParam("param-alpha", "alpha_gain");
bindParam("param-lambda", "lambda");
bindParam("param-lookahead", "lookahead");

// ---- render loop -------------------------------------------------------------

function resizeCanvases(): void {
  for (const c of [canvas, chartCanvas]) {
    const w = c.clientWidth;
    const h = c.clientHeight;
    if (w > 0 && h > 0 && (c.width !== w || c.height !== h)) {
      c.width = w;
      c.height = h;
    }
  }
  if (canvas.width > 0) camera.resize(canvas.width, canvas.height);
}

setInterval(() => {
  fps = framesThisSecond;
  framesThisSecond = 0;
}, 1000);

function renderStatus(): void {
  if (!latestFrame) {
    statusEl.textContent = statusNote;
    return;
  }
  const f = latestFrame;
  const minB = f.minB === null ? "—" : f.minB.toFixed(4);
  statusEl.textContent =
    `seq ${f.seq}  t ${f.t.toFixed(2)} s  fps ${fps}  ` +
    `V ${f.V.toExponential(2)}  minB ${minB}  eps ${f.epsilon.toExponential(1)}  ` +
    `target #${f.target_index}`;
}

function frameLoop(): void {
  resizeCanvases();
  renderer.draw({
    targetPoints,
    targetPeriodic,
    frame: latestFrame,
    trail,
    connected,
    statusNote,
    dragGhost,
    pendingObstacle,
  });
  const w = chartCanvas.width;
  const h = chartCanvas.height;
  if (w > 0 && h > 0) {
    chartCtx.clearRect(0, 0, w, h);
    vChart.draw(chartCtx, 0, 0, w, Math.floor(h / 2) - 4);
    bChart.draw(chartCtx, 0, Math.floor(h / 2) + 4, w, Math.floor(h / 2) - 4);
  }
  renderStatus();
  requestAnimationFrame(frameLoop);
}

socket.connect();
requestAnimationFrame(frameLoop);
