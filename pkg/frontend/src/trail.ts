/** Bounded ring buffer of recent robot states (workspace coordinates).
 *
 * Holds at most `capacity` points; pushing beyond that overwrites the
 * oldest. `toArray` returns points oldest-first, so the renderer can draw
 * the trail as one polyline (discontinuities from teleports show up as
 * long segments the renderer elides).
 */
export class Trail {
  private buf: number[][];
  private head = 0; // next write slot
  private count = 0;

  constructor(public readonly capacity = 2000) {
    if (!Number.isInteger(capacity) || capacity < 1) {
      throw new RangeError("capacity must be a positive integer");
    }
    this.buf = new Array(capacity);
  }

  get size(): number {
    return this.count;
  }

  push(point: readonly number[]): void {
    this.buf[this.head] = point.slice();
    this.head = (this.head + 1) % this.capacity;
    if (this.count < this.capacity) this.count += 1;
  }

  clear(): void {
    this.head = 0;
    this.count = 0;
  }

  /** Points oldest-first. */
  toArray(): number[][] {
    const out: number[][] = new Array(this.count);
    const start = (this.head - this.count + this.capacity) % this.capacity;
    for (let i = 0; i < this.count; i++) {
      out[i] = this.buf[(start + i) % this.capacity]!;
    }
    return out;
  }
}
