/** Canvas scene renderer.
 *
 * Draws, in workspace coordinates projected through the camera: the target
 * array polyline, the live robot state with its bounded trail, the selected
 * target point, the virtual-control vector, and all obstacles. 3-D scenes
 * are shown as orthographic projections onto the first two axes. While the
 * socket is down, the scene greys out but keeps its last contents.
 *
 * The UI never simulates physics: everything drawn here comes from the
 * latest server frame (plus the static target array fetched over HTTP).
 */
import type { Camera } from "./transform.js";
import type { Frame, Obstacle } from "./protocol.js";
import type { Trail } from "./trail.js";

export interface DragGhost {
  fromWorld: readonly number[];
  toWorld: readonly number[];
  nudge: boolean;
}

export interface PendingObstacle {
  centerWorld: readonly number[];
  radiusWorld: number;
}

export interface Scene {
  targetPoints: number[][] | null;
  targetPeriodic: boolean;
  frame: Frame | null;
  trail: Trail;
  connected: boolean;
  statusNote: string;
  dragGhost: DragGhost | null;
  pendingObstacle: PendingObstacle | null;
}

const project = (p: readonly number[]): [number, number] => [p[0] ?? 0, p[1] ?? 0];

export class SceneRenderer {
  constructor(
    private readonly ctx: CanvasRenderingContext2D,
    private readonly camera: Camera,
  ) {}

  draw(scene: Scene): void {
    const { ctx, camera } = this;
    const W = camera.width;
    const H = camera.height;
    ctx.save();
    ctx.clearRect(0, 0, W, H);
    ctx.fillStyle = "#0e1014";
    ctx.fillRect(0, 0, W, H);

    this.drawAxes();
    if (scene.targetPoints) {
      this.drawTargetArray(scene.targetPoints, scene.targetPeriodic);
    }
    if (scene.frame) {
      for (const ob of scene.frame.obstacles) this.drawObstacle(ob);
      this.drawRobot(scene.frame, scene.trail);
    }
    if (scene.pendingObstacle) this.drawPendingObstacle(scene.pendingObstacle);
    if (scene.dragGhost) this.drawGhost(scene.dragGhost);

    if (!scene.connected) {
      ctx.fillStyle = "rgba(14, 16, 20, 0.72)";
      ctx.fillRect(0, 0, W, H);
      ctx.fillStyle = "#c7ccd6";
      ctx.font = "15px system-ui, sans-serif";
      ctx.textAlign = "center";
      ctx.fillText(`disconnected — ${scene.statusNote}`, W / 2, H / 2);
      ctx.textAlign = "start";
    }
    ctx.restore();
  }

  private drawAxes(): void {
    const { ctx, camera } = this;
    const o = camera.worldToScreen([0, 0]);
    ctx.strokeStyle = "#23262f";
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.moveTo(0, o[1]);
    ctx.lineTo(camera.width, o[1]);
    ctx.moveTo(o[0], 0);
    ctx.lineTo(o[0], camera.height);
    ctx.stroke();
  }

  private polyline(points: number[][], close: boolean): void {
    const { ctx, camera } = this;
    ctx.beginPath();
    points.forEach((p, i) => {
      const s = camera.worldToScreen(project(p));
      if (i === 0) ctx.moveTo(s[0], s[1]);
      else ctx.lineTo(s[0], s[1]);
    });
    if (close) ctx.closePath();
    ctx.stroke();
  }

  private drawTargetArray(points: number[][], periodic: boolean): void {
    const { ctx } = this;
    ctx.strokeStyle = "#3d6b4f";
    ctx.lineWidth = 2;
    // the full array can be 10k+ points; ~1k vertices is visually identical
    const stride = Math.max(1, Math.floor(points.length / 1000));
    const thin = points.filter((_, i) => i % stride === 0);
    this.polyline(thin, periodic);
  }

  private drawObstacle(ob: Obstacle): void {
    const { ctx, camera } = this;
    ctx.fillStyle = "rgba(176, 92, 92, 0.25)";
    ctx.strokeStyle = "#b05c5c";
    ctx.lineWidth = 1.5;
    if (ob.shape === "circle") {
      const c = camera.worldToScreen(project(ob.center));
      const r = ob.radius * camera.zoom;
      ctx.beginPath();
      ctx.arc(c[0], c[1], r, 0, 2 * Math.PI);
      ctx.fill();
      ctx.stroke();
    } else {
      const a = camera.worldToScreen(project(ob.min));
      const b = camera.worldToScreen(project(ob.max));
      const x = Math.min(a[0], b[0]);
      const y = Math.min(a[1], b[1]);
      ctx.fillRect(x, y, Math.abs(b[0] - a[0]), Math.abs(b[1] - a[1]));
      ctx.strokeRect(x, y, Math.abs(b[0] - a[0]), Math.abs(b[1] - a[1]));
    }
    const anchor =
      ob.shape === "circle"
        ? camera.worldToScreen(project(ob.center))
        : camera.worldToScreen(project(ob.min));
    ctx.fillStyle = "#b05c5c";
    ctx.font = "10px system-ui, sans-serif";
    ctx.fillText(`#${ob.id}`, anchor[0] + 4, anchor[1] - 4);
  }

  private drawRobot(frame: Frame, trail: Trail): void {
    const { ctx, camera } = this;

    // trail with teleport gaps: a segment much longer than its neighbours'
    // scale is a discontinuity, not motion — skip it
    const pts = trail.toArray();
    ctx.strokeStyle = "#7fb4e6";
    ctx.lineWidth = 1.25;
    ctx.beginPath();
    let pen = false;
    let prev: [number, number] | null = null;
    let prevWorld: [number, number] | null = null;
    for (const p of pts) {
      const w = project(p);
      const s = camera.worldToScreen(w);
      if (prev !== null && prevWorld !== null) {
        const jump = Math.hypot(w[0] - prevWorld[0], w[1] - prevWorld[1]);
        if (jump > 0.25 * this.sceneScale()) pen = false;
      }
      if (pen) ctx.lineTo(s[0], s[1]);
      else ctx.moveTo(s[0], s[1]);
      pen = true;
      prev = s;
      prevWorld = w;
    }
    ctx.stroke();

    // selected target point pi(x)
    const tgt = camera.worldToScreen(project(frame.target));
    ctx.strokeStyle = "#68c487";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.arc(tgt[0], tgt[1], 5, 0, 2 * Math.PI);
    ctx.stroke();

    // virtual-control vector (scaled for visibility)
    const x = camera.worldToScreen(project(frame.x));
    const uProj = project(frame.u);
    const uNorm = Math.hypot(uProj[0], uProj[1]);
    if (uNorm > 1e-9) {
      const s = (0.2 * this.sceneScale() * camera.zoom) / Math.max(uNorm, 0.25);
      ctx.strokeStyle = "#d9a44a";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(x[0], x[1]);
      ctx.lineTo(x[0] + uProj[0] * s, x[1] - uProj[1] * s);
      ctx.stroke();
    }

    // robot
    ctx.fillStyle = "#e8ecf2";
    ctx.beginPath();
    ctx.arc(x[0], x[1], 6, 0, 2 * Math.PI);
    ctx.fill();
  }

  /** Rough workspace scale (world units spanned by the viewport). */
  private sceneScale(): number {
    return Math.min(this.camera.width, this.camera.height) / this.camera.zoom;
  }

  private drawGhost(g: DragGhost): void {
    const { ctx, camera } = this;
    const a = camera.worldToScreen(project(g.fromWorld));
    const b = camera.worldToScreen(project(g.toWorld));
    ctx.strokeStyle = g.nudge ? "#d9a44a" : "#e8ecf2";
    ctx.setLineDash([5, 4]);
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.moveTo(a[0], a[1]);
    ctx.lineTo(b[0], b[1]);
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.beginPath();
    ctx.arc(b[0], b[1], 5, 0, 2 * Math.PI);
    ctx.stroke();
  }

  private drawPendingObstacle(p: PendingObstacle): void {
    const { ctx, camera } = this;
    const c = camera.worldToScreen(project(p.centerWorld));
    ctx.strokeStyle = "#b05c5c";
    ctx.setLineDash([5, 4]);
    ctx.beginPath();
    ctx.arc(c[0], c[1], Math.max(p.radiusWorld * camera.zoom, 2), 0, 2 * Math.PI);
    ctx.stroke();
    ctx.setLineDash([]);
  }
}
