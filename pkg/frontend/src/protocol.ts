/** Wire protocol for the playground server's websocket endpoint.
 *
 * Server → client messages are state frames, acks, or errors; client →
 * server messages are commands. Every outgoing command is built through a
 * validating constructor here, so malformed commands are unreachable from
 * UI code paths; every incoming message is schema-checked before the UI
 * touches it.
 */

export class ProtocolError extends Error {}

export interface CircleObstacle {
  shape: "circle";
  id: number;
  center: number[];
  radius: number;
  gamma_gain: number;
}

export interface BoxObstacle {
  shape: "box";
  id: number;
  min: number[];
  max: number[];
  margin: number;
  gamma_gain: number;
}

export type Obstacle = CircleObstacle | BoxObstacle;

export interface Frame {
  seq: number;
  t: number;
  x: number[];
  target: number[];
  target_index: number;
  u: number[];
  V: number;
  minB: number | null;
  epsilon: number;
  obstacles: Obstacle[];
  target_array_digest: string;
}

export type ServerMessage =
  | { kind: "frame"; frame: Frame }
  | { kind: "ack"; ack: string; body: Record<string, unknown> }
  | { kind: "error"; message: string }
  | { kind: "warning"; message: string };

function isFiniteNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function finiteVector(v: unknown, what: string): number[] {
  if (!Array.isArray(v) || v.length === 0 || !v.every(isFiniteNumber)) {
    throw new ProtocolError(`${what} must be a non-empty array of finite numbers`);
  }
  return v as number[];
}

function parseObstacle(rec: unknown): Obstacle {
  if (typeof rec !== "object" || rec === null) {
    throw new ProtocolError("obstacle record must be an object");
  }
  const r = rec as Record<string, unknown>;
  if (!isFiniteNumber(r.id)) throw new ProtocolError("obstacle needs a numeric id");
  const gain = isFiniteNumber(r.gamma_gain) ? r.gamma_gain : 1.0;
  if (r.shape === "circle") {
    const radius = r.radius;
    if (!isFiniteNumber(radius) || radius <= 0) {
      throw new ProtocolError("circle obstacle needs radius > 0");
    }
    return {
      shape: "circle",
      id: r.id,
      center: finiteVector(r.center, "circle center"),
      radius,
      gamma_gain: gain,
    };
  }
  if (r.shape === "box") {
    const margin = isFiniteNumber(r.margin) ? r.margin : 0;
    return {
      shape: "box",
      id: r.id,
      min: finiteVector(r.min, "box min"),
      max: finiteVector(r.max, "box max"),
      margin,
      gamma_gain: gain,
    };
  }
  throw new ProtocolError(`unknown obstacle shape ${String(r.shape)}`);
}

function parseFrame(obj: Record<string, unknown>): Frame {
  for (const key of ["seq", "t", "target_index", "V", "epsilon"] as const) {
    if (!isFiniteNumber(obj[key])) {
      throw new ProtocolError(`frame field ${key} must be a finite number`);
    }
  }
  const minB = obj.minB;
  if (minB !== null && !isFiniteNumber(minB)) {
    throw new ProtocolError("frame field minB must be a finite number or null");
  }
  if (typeof obj.target_array_digest !== "string") {
    throw new ProtocolError("frame field target_array_digest must be a string");
  }
  const obstacles = obj.obstacles;
  if (!Array.isArray(obstacles)) {
    throw new ProtocolError("frame field obstacles must be an array");
  }
  return {
    seq: obj.seq as number,
    t: obj.t as number,
    x: finiteVector(obj.x, "frame x"),
    target: finiteVector(obj.target, "frame target"),
    target_index: obj.target_index as number,
    u: finiteVector(obj.u, "frame u"),
    V: obj.V as number,
    minB: minB as number | null,
    epsilon: obj.epsilon as number,
    obstacles: obstacles.map(parseObstacle),
    target_array_digest: obj.target_array_digest,
  };
}

export function parseServerMessage(text: string): ServerMessage {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch {
    throw new ProtocolError("message is not valid JSON");
  }
  if (typeof obj !== "object" || obj === null) {
    throw new ProtocolError("message must be a JSON object");
  }
  const rec = obj as Record<string, unknown>;
  if (typeof rec.error === "string") return { kind: "error", message: rec.error };
  if (typeof rec.warning === "string") {
    return { kind: "warning", message: rec.warning };
  }
  if (typeof rec.ack === "string") {
    return { kind: "ack", ack: rec.ack, body: rec };
  }
  if ("seq" in rec && "x" in rec) return { kind: "frame", frame: parseFrame(rec) };
  throw new ProtocolError("message is neither frame, ack, error, nor warning");
}

export interface TargetArrayPayload {
  points: number[][];
  dt: number;
  periodic: boolean;
  digest: string;
}

export function parseTargetArray(obj: unknown): TargetArrayPayload {
  if (typeof obj !== "object" || obj === null) {
    throw new ProtocolError("target array payload must be an object");
  }
  const rec = obj as Record<string, unknown>;
  if (!Array.isArray(rec.points) || rec.points.length === 0) {
    throw new ProtocolError("target array needs a non-empty points list");
  }
  const points = rec.points.map((p) => finiteVector(p, "target point"));
  if (!isFiniteNumber(rec.dt) || rec.dt <= 0) {
    throw new ProtocolError("target array needs dt > 0");
  }
  if (typeof rec.digest !== "string") {
    throw new ProtocolError("target array needs a digest string");
  }
  return { points, dt: rec.dt, periodic: rec.periodic === true, digest: rec.digest };
}

// ---- command builders (client → server) -------------------------------------

function cmd(obj: Record<string, unknown>): string {
  return JSON.stringify(obj);
}

export function setState(x: readonly number[]): string {
  return cmd({ cmd: "set_state", x: finiteVector(x.slice(), "set_state x") });
}

export function nudge(bias: readonly number[], duration: number): string {
  if (!isFiniteNumber(duration) || duration <= 0) {
    throw new ProtocolError("nudge duration must be > 0");
  }
  return cmd({
    cmd: "nudge",
    bias: finiteVector(bias.slice(), "nudge bias"),
    duration,
  });
}

export function addCircleObstacle(
  center: readonly number[],
  radius: number,
  gammaGain = 2.0,
): string {
  if (!isFiniteNumber(radius) || radius <= 0) {
    throw new ProtocolError("obstacle radius must be > 0");
  }
  if (!isFiniteNumber(gammaGain) || gammaGain <= 0) {
    throw new ProtocolError("obstacle gamma gain must be > 0");
  }
  return cmd({
    cmd: "add_obstacle",
    obstacle: {
      shape: "circle",
      center: finiteVector(center.slice(), "obstacle center"),
      radius,
      gamma_gain: gammaGain,
    },
  });
}

export function moveObstacle(id: number, center: readonly number[]): string {
  if (!Number.isInteger(id) || id < 0) {
    throw new ProtocolError("obstacle id must be a non-negative integer");
  }
  return cmd({
    cmd: "move_obstacle",
    id,
    center: finiteVector(center.slice(), "obstacle center"),
  });
}

export function removeObstacle(id: number): string {
  if (!Number.isInteger(id) || id < 0) {
    throw new ProtocolError("obstacle id must be a non-negative integer");
  }
  return cmd({ cmd: "remove_obstacle", id });
}

export function pause(): string {
  return cmd({ cmd: "pause" });
}

export function resume(): string {
  return cmd({ cmd: "resume" });
}

export function reset(x0?: readonly number[]): string {
  if (x0 === undefined) return cmd({ cmd: "reset" });
  return cmd({ cmd: "reset", x0: finiteVector(x0.slice(), "reset x0") });
}

export type ParamName = "alpha_gain" | "lambda" | "lookahead";

export function setParam(name: ParamName, value: number): string {
  if (name !== "alpha_gain" && name !== "lambda" && name !== "lookahead") {
    throw new ProtocolError(`unknown parameter ${String(name)}`);
  }
  if (!isFiniteNumber(value) || value <= 0) {
    throw new ProtocolError(`${name} must be > 0`);
  }
  if (name === "lookahead" && !Number.isInteger(value)) {
    throw new ProtocolError("lookahead must be an integer");
  }
  return cmd({ cmd: "set_param", name, value });
}
