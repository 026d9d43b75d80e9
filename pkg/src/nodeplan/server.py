"""Interactive playground server.

One control thread owns all mutable simulation state and ticks it at 1 kHz.
Network threads never touch that state directly: client commands go through
a bounded queue (capacity 64, oldest dropped with a warning) and are applied
at tick boundaries; outbound state flows through an immutable snapshot that
a single broadcaster thread samples *and* sequence-stamps at 60 Hz, so every
connected client receives byte-identical frames.

Transport is plain HTTP on one port: GET /health, /scenario, /target_array,
a static UI bundle at /, and a websocket upgrade at /ws carrying JSON both
ways. Client commands:

  {"cmd": "set_state", "x": [..]}
  {"cmd": "nudge", "bias": [..], "duration": 0.5}
  {"cmd": "reset"}                       (optional "x0": [..])
  {"cmd": "pause"} / {"cmd": "resume"}
  {"cmd": "add_obstacle", "obstacle": {"shape": "circle", ...}}
  {"cmd": "move_obstacle", "id": 0, "center": [..]}
  {"cmd": "remove_obstacle", "id": 0}
  {"cmd": "set_param", "name": "alpha_gain"|"lambda"|"lookahead", "value": v}

Server messages are either state frames (fields: seq, t, x, target,
target_index, u, V, minB, epsilon, obstacles, target_array_digest), acks
{"ack": .., ...}, or errors {"error": ..}. Obstacle placements that would
put the current state inside the obstacle (B(x) < 0) are rejected.
"""
from __future__ import annotations

import base64
import hashlib
import json
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import replace
from pathlib import Path

import numpy as np

from .cert import ObstacleSpec, CertificateSet, RateFn, obstacle_from_dict
from .core import DataError
from .integrate import step_once
from .planner import PlannerState, plan_step
from .sim import Scenario

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
_QUEUE_CAP = 64
_BROADCAST_HZ = 60.0

_MIME = {".html": "text/html; charset=utf-8", ".js": "text/javascript",
         ".mjs": "text/javascript", ".css": "text/css", ".json": "application/json",
         ".svg": "image/svg+xml", ".map": "application/json", ".ico": "image/x-icon"}

_FALLBACK_INDEX = b"""<!doctype html><meta charset="utf-8">
<title>playground</title>
<p>No UI bundle found. The websocket endpoint is at <code>/ws</code>;
see <a href="/health">/health</a>, <a href="/scenario">/scenario</a>,
<a href="/target_array">/target_array</a>.</p>
"""


def ws_accept_key(key: str) -> str:
    return base64.b64encode(
        hashlib.sha1((key + _WS_GUID).encode()).digest()).decode()


def encode_text_frame(payload: bytes) -> bytes:
    n = len(payload)
    if n < 126:
        return struct.pack("!BB", 0x81, n) + payload
    if n < 1 << 16:
        return struct.pack("!BBH", 0x81, 126, n) + payload
    return struct.pack("!BBQ", 0x81, 127, n) + payload


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("socket closed")
        buf += chunk
    return buf


def read_frame(sock: socket.socket) -> tuple[int, bytes]:
    """Read one (possibly fragmented) websocket message: (opcode, payload)."""
    opcode = None
    payload = b""
    while True:
        b1, b2 = _read_exact(sock, 2)
        fin = b1 & 0x80
        op = b1 & 0x0F
        masked = b2 & 0x80
        ln = b2 & 0x7F
        if ln == 126:
            (ln,) = struct.unpack("!H", _read_exact(sock, 2))
        elif ln == 127:
            (ln,) = struct.unpack("!Q", _read_exact(sock, 8))
        mask = _read_exact(sock, 4) if masked else None
        data = _read_exact(sock, ln) if ln else b""
        if mask:
            data = bytes(c ^ mask[i & 3] for i, c in enumerate(data))
        if op != 0:
            opcode = op
        payload += data
        if fin:
            return opcode or 0, payload


def _round_sig(v: float) -> float:
    return float(f"{v:.9g}")


def _compact(obj):
    """Round floats to 9 significant digits, recursively."""
    if isinstance(obj, float):
        return _round_sig(obj)
    if isinstance(obj, dict):
        return {k: _compact(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_compact(v) for v in obj]
    return obj


def encode_frame(frame: dict) -> bytes:
    """Compact JSON encoding with numbers trimmed to 9 significant digits."""
    return json.dumps(_compact(frame), separators=(",", ":")).encode()


class _Client:
    def __init__(self, sock: socket.socket, addr):
        self.sock = sock
        self.addr = addr
        self.lock = threading.Lock()
        self.alive = True

    def send_text(self, payload: bytes) -> None:
        if not self.alive:
            return
        try:
            with self.lock:
                self.sock.sendall(encode_text_frame(payload))
        except OSError:
            self.alive = False

    def send_json(self, obj: dict) -> None:
        self.send_text(encode_frame(obj))


class PlaygroundServer:
    """Serves one scenario; start() binds, stop() tears everything down."""

    def __init__(self, scenario: Scenario, host: str = "127.0.0.1",
                 port: int = 8732, ui_dir: str | Path | None = None):
        self.sc = scenario
        self.host = host
        self.port = port
        if ui_dir is None:
            cand = Path.cwd() / "frontend" / "dist"
            self.ui_dir = cand if cand.is_dir() else None
        else:
            self.ui_dir = Path(ui_dir)
        self._sock: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._clients: set[_Client] = set()
        self._clients_lock = threading.Lock()
        self._commands: deque = deque()
        self._cmd_lock = threading.Lock()
        self._overflow = False
        self._running = False
        self._snapshot: dict | None = None
        self._seq = 0
        self.ticks = 0
        digest_src = scenario.target.points.tobytes() + struct.pack(
            "!d", scenario.target.dt)
        self._digest = hashlib.sha1(digest_src).hexdigest()[:12]

        # control-thread-owned state
        self._x = scenario.x0.copy()
        self._t = 0.0
        self._paused = False
        self._pstate = PlannerState()
        self._planner = scenario.planner
        self._obstacles: dict[int, ObstacleSpec] = {
            i: ob for i, ob in enumerate(scenario.obstacles)}
        self._next_obstacle_id = len(scenario.obstacles)
        self._nudge_bias = np.zeros(scenario.target.dim)
        self._nudge_until = -1.0
        self._last_step = None

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        self._sock = socket.create_server((self.host, self.port))
        self.port = self._sock.getsockname()[1]
        self._running = True
        for fn in (self._accept_loop, self._control_loop, self._broadcast_loop):
            th = threading.Thread(target=fn, daemon=True, name=fn.__name__)
            th.start()
            self._threads.append(th)

    def join(self) -> None:
        while self._running:
            time.sleep(0.2)

    def stop(self) -> None:
        self._running = False
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        with self._clients_lock:
            clients = list(self._clients)
        for c in clients:
            try:
                c.sock.close()
            except OSError:
                pass
        for th in self._threads:
            th.join(timeout=2.0)

    # -- command queue ---------------------------------------------------------

    def _enqueue(self, cmd: dict, client: _Client) -> None:
        with self._cmd_lock:
            if len(self._commands) >= _QUEUE_CAP:
                self._commands.popleft()
                self._overflow = True
            self._commands.append((cmd, client))

    def _drain_commands(self) -> None:
        while True:
            with self._cmd_lock:
                if not self._commands:
                    overflow = self._overflow
                    self._overflow = False
                    break
                cmd, client = self._commands.popleft()
            try:
                self._apply_command(cmd, client)
            except (DataError, TypeError, ValueError) as exc:
                client.send_json({"error": str(exc), "cmd": cmd.get("cmd")})
        if overflow:
            self._broadcast_json({"warning": "command queue overflow, oldest dropped"})

    def _apply_command(self, cmd: dict, client: _Client) -> None:
        d = self.sc.target.dim
        name = cmd.get("cmd")
        if name == "set_state":
            x = np.asarray(cmd.get("x"), dtype=float)
            if x.shape != (d,) or not np.all(np.isfinite(x)):
                raise DataError(f"set_state needs a finite vector of length {d}")
            self._x = x
            client.send_json({"ack": "set_state"})
        elif name == "nudge":
            bias = np.asarray(cmd.get("bias"), dtype=float)
            dur = float(cmd.get("duration", 0.5))
            if bias.shape != (d,) or not np.all(np.isfinite(bias)) or dur <= 0:
                raise DataError("nudge needs a finite bias vector and duration > 0")
            self._nudge_bias = bias
            self._nudge_until = self._t + dur
            client.send_json({"ack": "nudge"})
        elif name == "reset":
            x0 = cmd.get("x0")
            x_new = (np.asarray(x0, dtype=float) if x0 is not None
                     else self.sc.x0.copy())
            if x_new.shape != (d,) or not np.all(np.isfinite(x_new)):
                raise DataError(f"reset x0 must be a finite vector of length {d}")
            self._x = x_new
            self._t = 0.0
            self._pstate = PlannerState()
            self._nudge_until = -1.0
            client.send_json({"ack": "reset"})
        elif name == "pause":
            self._paused = True
            client.send_json({"ack": "pause"})
        elif name == "resume":
            self._paused = False
            client.send_json({"ack": "resume"})
        elif name == "add_obstacle":
            spec = obstacle_from_dict(cmd.get("obstacle") or {})
            if spec.barrier.value(self._x) < 0.0:
                raise DataError("obstacle placement violates current safety")
            oid = self._next_obstacle_id
            self._next_obstacle_id += 1
            self._obstacles[oid] = spec
            client.send_json({"ack": "add_obstacle", "id": oid})
        elif name == "move_obstacle":
            oid = int(cmd.get("id", -1))
            if oid not in self._obstacles:
                raise DataError(f"no obstacle with id {oid}")
            spec = self._obstacles[oid]
            center = np.asarray(cmd.get("center"), dtype=float)
            if center.shape != (d,) or not np.all(np.isfinite(center)):
                raise DataError(f"move_obstacle needs a finite center of length {d}")
            barrier = spec.barrier
            if hasattr(barrier, "radius"):
                moved = replace(barrier, center=center)
            else:
                shift = center - barrier.center
                moved = replace(barrier, lo=barrier.lo + shift, hi=barrier.hi + shift)
            if moved.value(self._x) < 0.0:
                raise DataError("obstacle placement violates current safety")
            self._obstacles[oid] = ObstacleSpec(barrier=moved, gamma=spec.gamma,
                                                waypoints=())
            client.send_json({"ack": "move_obstacle", "id": oid})
        elif name == "remove_obstacle":
            oid = int(cmd.get("id", -1))
            if oid not in self._obstacles:
                raise DataError(f"no obstacle with id {oid}")
            del self._obstacles[oid]
            client.send_json({"ack": "remove_obstacle", "id": oid})
        elif name == "set_param":
            pname = cmd.get("name")
            value = cmd.get("value")
            if pname == "alpha_gain":
                v = float(value)
                if v <= 0:
                    raise DataError("alpha_gain must be positive")
                self._planner = replace(self._planner, alpha_gain=v)
            elif pname == "lambda":
                v = float(value)
                if v <= 0:
                    raise DataError("lambda must be positive")
                self._planner = replace(self._planner, lam=v)
            elif pname == "lookahead":
                v = int(value)
                if not 1 <= v <= len(self.sc.target):
                    raise DataError("lookahead out of range")
                self._planner = replace(self._planner, lookahead=v)
            else:
                raise DataError(f"unknown parameter {pname!r}")
            client.send_json({"ack": "set_param", "name": pname})
        else:
            raise DataError(f"unknown command {name!r}")

    # -- control loop ----------------------------------------------------------

    def _certificates(self) -> CertificateSet:
        return CertificateSet(
            alpha=RateFn(gain=self._planner.alpha_gain),
            barriers=tuple((ob.barrier_at(self._t), ob.gamma)
                           for ob in self._obstacles.values()))

    def _control_loop(self) -> None:
        dt = self.sc.control_dt
        next_tick = time.monotonic()
        while self._running:
            self._drain_commands()
            if not self._paused:
                cs = self._certificates()
                step = plan_step(self._x, self.sc.target, self.sc.model, cs,
                                 self._planner, self._pstate)
                # snapshot before advancing so x, u, V and minB in a frame
                # all describe the same instant
                self._last_step = step
                self._snapshot = self._make_snapshot(step)
                xdot = step.xdot_ref
                if self._t < self._nudge_until:
                    xdot = xdot + self._nudge_bias
                xd = xdot
                self._x = step_once(lambda s: xd, self._x, dt)
                self._t += dt
                self.ticks += 1
            elif self._snapshot is None and self._last_step is None:
                # never ticked yet: publish an initial frame so clients see state
                cs = self._certificates()
                step = plan_step(self._x, self.sc.target, self.sc.model, cs,
                                 self._planner, self._pstate)
                self._last_step = step
                self._snapshot = self._make_snapshot(step)
            next_tick += dt
            lag = time.monotonic() - next_tick
            if lag > 0.2:
                next_tick = time.monotonic()  # drop backlog after a long stall
            elif lag < 0:
                time.sleep(-lag)

    def _make_snapshot(self, step) -> dict:
        min_b = step.diagnostics.get("min_b", float("inf"))
        obstacles = []
        for oid, ob in self._obstacles.items():
            rec = ob.to_dict()
            rec["id"] = oid
            if ob.waypoints:
                rec["center"] = ob.center_at(self._t).tolist()
                rec.pop("path", None)
            obstacles.append(rec)
        return {
            "t": self._t,
            "x": self._x.tolist(),
            "target": step.target.tolist(),
            "target_index": int(step.target_index),
            "u": step.u.tolist(),
            "V": float(step.diagnostics.get("V", 0.0)),
            "minB": None if not np.isfinite(min_b) else float(min_b),
            "epsilon": float(step.slack),
            "obstacles": obstacles,
            "target_array_digest": self._digest,
        }

    # -- broadcast ---------------------------------------------------------------

    def _broadcast_json(self, obj: dict) -> None:
        data = encode_frame(obj)
        with self._clients_lock:
            clients = list(self._clients)
        for c in clients:
            c.send_text(data)

    def _broadcast_loop(self) -> None:
        period = 1.0 / _BROADCAST_HZ
        next_t = time.monotonic()
        while self._running:
            snap = self._snapshot
            if snap is not None:
                frame = {"seq": self._seq, **snap}
                self._seq += 1
                self._broadcast_json(frame)
            next_t += period
            delay = next_t - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            else:
                next_t = time.monotonic()
        # final close frames are left to stop()

    # -- network -------------------------------------------------------------------

    def _accept_loop(self) -> None:
        assert self._sock is not None
        self._sock.settimeout(0.5)
        while self._running:
            try:
                conn, addr = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            th = threading.Thread(target=self._handle_conn, args=(conn, addr),
                                  daemon=True)
            th.start()

    def _handle_conn(self, conn: socket.socket, addr) -> None:
        conn.settimeout(10.0)
        try:
            head = b""
            while b"\r\n\r\n" not in head:
                chunk = conn.recv(4096)
                if not chunk or len(head) > 65536:
                    conn.close()
                    return
                head += chunk
            request, _, _ = head.partition(b"\r\n\r\n")
            lines = request.decode("latin-1").split("\r\n")
            method, path, _ = (lines[0].split(" ") + ["", ""])[:3]
            headers = {}
            for line in lines[1:]:
                if ":" in line:
                    k, v = line.split(":", 1)
                    headers[k.strip().lower()] = v.strip()

            if path == "/ws" and headers.get("upgrade", "").lower() == "websocket":
                self._serve_ws(conn, addr, headers)
                return
            if method != "GET":
                self._respond(conn, 405, b"method not allowed", "text/plain")
                return
            self._serve_http(conn, path)
        except (OSError, ValueError, ConnectionError):
            try:
                conn.close()
            except OSError:
                pass

    def _respond(self, conn: socket.socket, code: int, body: bytes,
                 ctype: str) -> None:
        reason = {200: "OK", 404: "Not Found", 405: "Method Not Allowed"}.get(
            code, "OK")
        head = (f"HTTP/1.1 {code} {reason}\r\nContent-Type: {ctype}\r\n"
                f"Content-Length: {len(body)}\r\nConnection: close\r\n"
                f"Access-Control-Allow-Origin: *\r\n\r\n")
        conn.sendall(head.encode() + body)
        conn.close()

    def _serve_http(self, conn: socket.socket, path: str) -> None:
        if path == "/health":
            body = encode_frame({"status": "ok", "t": self._t, "seq": self._seq,
                                 "clients": len(self._clients),
                                 "paused": self._paused})
            self._respond(conn, 200, body, "application/json")
        elif path == "/scenario":
            body = encode_frame(self._scenario_info())
            self._respond(conn, 200, body, "application/json")
        elif path == "/target_array":
            ta = self.sc.target
            body = encode_frame({"points": ta.points.tolist(), "dt": ta.dt,
                                 "periodic": ta.periodic, "digest": self._digest})
            self._respond(conn, 200, body, "application/json")
        else:
            self._serve_static(conn, path)

    def _scenario_info(self) -> dict:
        cfg = self._planner
        obstacles = []
        for oid, ob in self._obstacles.items():
            rec = ob.to_dict()
            rec["id"] = oid
            obstacles.append(rec)
        return {"name": self.sc.name, "dim": self.sc.target.dim,
                "x0": self.sc.x0.tolist(), "horizon": self.sc.horizon,
                "control_dt": self.sc.control_dt,
                "periodic": self.sc.target.periodic,
                "n_target_points": len(self.sc.target),
                "target_array_digest": self._digest,
                "planner": {"lookahead": cfg.lookahead,
                            "alpha_gain": cfg.alpha_gain, "lambda": cfg.lam,
                            "nn_mode": cfg.nn_mode,
                            "infeasible_policy": cfg.infeasible_policy},
                "obstacles": obstacles}

    def _serve_static(self, conn: socket.socket, path: str) -> None:
        if path in ("", "/"):
            path = "/index.html"
        if self.ui_dir is None:
            if path == "/index.html":
                self._respond(conn, 200, _FALLBACK_INDEX, _MIME[".html"])
            else:
                self._respond(conn, 404, b"not found", "text/plain")
            return
        root = self.ui_dir.resolve()
        target = (root / path.lstrip("/")).resolve()
        if not target.is_relative_to(root) or not target.is_file():
            self._respond(conn, 404, b"not found", "text/plain")
            return
        ctype = _MIME.get(target.suffix, "application/octet-stream")
        self._respond(conn, 200, target.read_bytes(), ctype)

    def _serve_ws(self, conn: socket.socket, addr, headers: dict) -> None:
        key = headers.get("sec-websocket-key")
        if not key:
            self._respond(conn, 400, b"missing websocket key", "text/plain")
            return
        accept = ws_accept_key(key)
        conn.sendall((f"HTTP/1.1 101 Switching Protocols\r\n"
                      f"Upgrade: websocket\r\nConnection: Upgrade\r\n"
                      f"Sec-WebSocket-Accept: {accept}\r\n\r\n").encode())
        client = _Client(conn, addr)
        with self._clients_lock:
            self._clients.add(client)
        try:
            while self._running and client.alive:
                try:
                    opcode, payload = read_frame(conn)
                except socket.timeout:
                    continue
                if opcode == 8:      # close
                    break
                if opcode == 9:      # ping -> pong
                    with client.lock:
                        conn.sendall(struct.pack("!BB", 0x8A, len(payload)) + payload)
                    continue
                if opcode != 1:
                    continue
                try:
                    cmd = json.loads(payload.decode())
                    if not isinstance(cmd, dict):
                        raise ValueError("command must be a JSON object")
                except (ValueError, UnicodeDecodeError) as exc:
                    client.send_json({"error": f"malformed command: {exc}"})
                    continue
                self._enqueue(cmd, client)
        except (ConnectionError, OSError):
            pass
        finally:
            client.alive = False
            with self._clients_lock:
                self._clients.discard(client)
            try:
                conn.close()
            except OSError:
                pass
