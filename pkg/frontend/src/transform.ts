/** Invertible 2D camera transform: pan + uniform zoom, y-up world axes.
 *
 * Screen coordinates are CSS pixels with the origin at the canvas top-left
 * and y growing downward; world coordinates are the planner's workspace
 * with y growing upward. `zoom` is pixels per world unit.
 *
 * Drag mapping is exact by construction: a screen displacement (dx, dy)
 * corresponds to the workspace displacement (dx / zoom, -dy / zoom) — the
 * same floating-point division the unit test asserts, with no intermediate
 * additions that could round.
 */

export type Vec2 = readonly [number, number];

export class Camera {
  /** World point shown at the canvas centre. */
  cx = 0;
  cy = 0;
  /** Pixels per world unit; strictly positive. */
  zoom = 100;

  constructor(public width: number, public height: number) {
    if (!(width > 0) || !(height > 0)) {
      throw new RangeError("canvas size must be positive");
    }
  }

  resize(width: number, height: number): void {
    if (!(width > 0) || !(height > 0)) {
      throw new RangeError("canvas size must be positive");
    }
    this.width = width;
    this.height = height;
  }

  worldToScreen(p: Vec2): [number, number] {
    return [
      (p[0] - this.cx) * this.zoom + this.width / 2,
      this.height / 2 - (p[1] - this.cy) * this.zoom,
    ];
  }

  screenToWorld(s: Vec2): [number, number] {
    return [
      (s[0] - this.width / 2) / this.zoom + this.cx,
      (this.height / 2 - s[1]) / this.zoom + this.cy,
    ];
  }

  /** Workspace displacement for a drag from screen point a to b. */
  dragDeltaWorld(a: Vec2, b: Vec2): [number, number] {
    return [(b[0] - a[0]) / this.zoom, (a[1] - b[1]) / this.zoom];
  }

  /** Pan so the scene follows a screen-space drag by (dx, dy) pixels. */
  panByScreen(dx: number, dy: number): void {
    this.cx -= dx / this.zoom;
    this.cy += dy / this.zoom;
  }

  /** Multiply zoom by `factor`, keeping the world point under `anchor`
   * (screen coords) fixed on screen. */
  zoomAt(anchor: Vec2, factor: number): void {
    if (!(factor > 0) || !Number.isFinite(factor)) {
      throw new RangeError("zoom factor must be positive and finite");
    }
    const w = this.screenToWorld(anchor);
    this.zoom *= factor;
    this.cx = w[0] - (anchor[0] - this.width / 2) / this.zoom;
    this.cy = w[1] + (anchor[1] - this.height / 2) / this.zoom;
  }

  /** Frame the axis-aligned box [min, max] with a pixel margin. */
  fitBounds(min: Vec2, max: Vec2, marginPx = 40): void {
    const w = Math.max(max[0] - min[0], 1e-9);
    const h = Math.max(max[1] - min[1], 1e-9);
    this.cx = (min[0] + max[0]) / 2;
    this.cy = (min[1] + max[1]) / 2;
    this.zoom = Math.min(
      (this.width - 2 * marginPx) / w,
      (this.height - 2 * marginPx) / h,
    );
    if (!(this.zoom > 0) || !Number.isFinite(this.zoom)) this.zoom = 100;
  }
}
