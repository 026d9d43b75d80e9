import { describe, expect, it } from "vitest";
import {
  addCircleObstacle,
  moveObstacle,
  nudge,
  parseServerMessage,
  parseTargetArray,
  pause,
  ProtocolError,
  removeObstacle,
  reset,
  resume,
  setParam,
  setState,
} from "../src/protocol.js";

const FRAME = {
  seq: 12,
  t: 0.2,
  x: [0.1, -0.2],
  target: [0.11, -0.19],
  target_index: 57,
  u: [0.0, 0.01],
  V: 2.5e-4,
  minB: 0.12,
  epsilon: 0.0,
  obstacles: [
    { shape: "circle", id: 0, center: [0.5, 0.5], radius: 0.1, gamma_gain: 2.0 },
    { shape: "box", id: 1, min: [-0.2, -0.3], max: [0.0, -0.1], margin: 0.02, gamma_gain: 1.0 },
  ],
  target_array_digest: "abc123",
};

describe("server message parsing", () => {
  it("classifies frames, acks, errors, and warnings", () => {
    expect(parseServerMessage(JSON.stringify(FRAME)).kind).toBe("frame");
    expect(parseServerMessage('{"ack": "pause"}')).toEqual({
      kind: "ack",
      ack: "pause",
      body: { ack: "pause" },
    });
    expect(parseServerMessage('{"error": "nope"}')).toEqual({
      kind: "error",
      message: "nope",
    });
    expect(parseServerMessage('{"warning": "queue full"}').kind).toBe("warning");
  });

  it("round-trips every frame field through JSON", () => {
    const msg = parseServerMessage(JSON.stringify(FRAME));
    if (msg.kind !== "frame") throw new Error("expected frame");
    expect(msg.frame).toEqual(FRAME);
  });

  it("accepts minB: null (no obstacles)", () => {
    const msg = parseServerMessage(
      JSON.stringify({ ...FRAME, minB: null, obstacles: [] }),
    );
    if (msg.kind !== "frame") throw new Error("expected frame");
    expect(msg.frame.minB).toBeNull();
  });

  it("rejects malformed payloads", () => {
    expect(() => parseServerMessage("not json")).toThrow(ProtocolError);
    expect(() => parseServerMessage('"just a string"')).toThrow(ProtocolError);
    expect(() => parseServerMessage("{}")).toThrow(ProtocolError);
    const noX = { ...FRAME } as Record<string, unknown>;
    delete noX.x;
    expect(() => parseServerMessage(JSON.stringify(noX))).toThrow(ProtocolError);
    expect(() =>
      parseServerMessage(JSON.stringify({ ...FRAME, V: "fast" })),
    ).toThrow(ProtocolError);
    expect(() =>
      parseServerMessage(JSON.stringify({ ...FRAME, x: [1, null] })),
    ).toThrow(ProtocolError);
    expect(() =>
      parseServerMessage(
        JSON.stringify({
          ...FRAME,
          obstacles: [{ shape: "circle", id: 0, center: [0, 0], radius: -1 }],
        }),
      ),
    ).toThrow(ProtocolError);
  });
});

describe("command builders", () => {
  it("produce the documented wire shapes", () => {
    expect(JSON.parse(setState([1, 2]))).toEqual({ cmd: "set_state", x: [1, 2] });
    expect(JSON.parse(nudge([0.1, 0], 0.5))).toEqual({
      cmd: "nudge",
      bias: [0.1, 0],
      duration: 0.5,
    });
    expect(JSON.parse(addCircleObstacle([0.3, 0.4], 0.1))).toEqual({
      cmd: "add_obstacle",
      obstacle: { shape: "circle", center: [0.3, 0.4], radius: 0.1, gamma_gain: 2 },
    });
    expect(JSON.parse(moveObstacle(3, [0, 1]))).toEqual({
      cmd: "move_obstacle",
      id: 3,
      center: [0, 1],
    });
    expect(JSON.parse(removeObstacle(3))).toEqual({ cmd: "remove_obstacle", id: 3 });
    expect(JSON.parse(pause())).toEqual({ cmd: "pause" });
    expect(JSON.parse(resume())).toEqual({ cmd: "resume" });
    expect(JSON.parse(reset())).toEqual({ cmd: "reset" });
    expect(JSON.parse(reset([0, 0.5]))).toEqual({ cmd: "reset", x0: [0, 0.5] });
    expect(JSON.parse(setParam("alpha_gain", 2))).toEqual({
      cmd: "set_param",
      name: "alpha_gain",
      value: 2,
    });
  });

  it("make malformed commands unreachable", () => {
    expect(() => setState([])).toThrow(ProtocolError);
    expect(() => setState([1, Number.NaN])).toThrow(ProtocolError);
    expect(() => setState([1, Infinity])).toThrow(ProtocolError);
    expect(() => nudge([1, 0], 0)).toThrow(ProtocolError);
    expect(() => nudge([1, 0], -1)).toThrow(ProtocolError);
    expect(() => addCircleObstacle([0, 0], 0)).toThrow(ProtocolError);
    expect(() => addCircleObstacle([0, 0], -0.5)).toThrow(ProtocolError);
    expect(() => addCircleObstacle([0, 0], 0.1, 0)).toThrow(ProtocolError);
    expect(() => moveObstacle(-1, [0, 0])).toThrow(ProtocolError);
    expect(() => moveObstacle(1.5, [0, 0])).toThrow(ProtocolError);
    expect(() => removeObstacle(2.7)).toThrow(ProtocolError);
    expect(() => setParam("alpha_gain", 0)).toThrow(ProtocolError);
    expect(() => setParam("lambda", -5)).toThrow(ProtocolError);
    expect(() => setParam("lookahead", 2.5)).toThrow(ProtocolError);
    expect(() => setParam("speed" as never, 1)).toThrow(ProtocolError);
  });
});

describe("target array payload", () => {
  it("parses the /target_array response", () => {
    const payload = parseTargetArray({
      points: [[0, 1], [0.1, 0.9]],
      dt: 0.001,
      periodic: true,
      digest: "d1",
    });
    expect(payload.points).toHaveLength(2);
    expect(payload.periodic).toBe(true);
  });

  it("rejects malformed payloads", () => {
    expect(() => parseTargetArray(null)).toThrow(ProtocolError);
    expect(() => parseTargetArray({ points: [], dt: 0.001, digest: "d" })).toThrow(
      ProtocolError,
    );
    expect(() =>
      parseTargetArray({ points: [[0, 1]], dt: 0, digest: "d" }),
    ).toThrow(ProtocolError);
    expect(() =>
      parseTargetArray({ points: [[0, "a"]], dt: 0.001, digest: "d" }),
    ).toThrow(ProtocolError);
  });
});
