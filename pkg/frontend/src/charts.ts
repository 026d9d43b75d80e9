/** Strip charts for live certificate values.
 *
 * Each chart keeps a bounded window of (t, value) samples and draws itself
 * into a rectangle of a 2D canvas. The Lyapunov chart uses a log scale
 * (convergence is exponential under a linear decrease rate, so a straight
 * line means the certificate is doing its job); the barrier chart is linear
 * with the zero line marked — dipping below it would mean a safety
 * violation.
 */

export interface ChartOptions {
  label: string;
  logScale?: boolean;
  markZero?: boolean;
  color: string;
  windowSeconds?: number;
}

const LOG_FLOOR = 1e-8;

export class StripChart {
  private ts: number[] = [];
  private vs: (number | null)[] = [];
  private readonly windowSeconds: number;

  constructor(private readonly opt: ChartOptions) {
    this.windowSeconds = opt.windowSeconds ?? 10;
  }

  push(t: number, value: number | null): void {
    this.ts.push(t);
    this.vs.push(value);
    const cutoff = t - this.windowSeconds;
    let drop = 0;
    while (drop < this.ts.length && this.ts[drop]! < cutoff) drop++;
    if (drop > 0) {
      this.ts.splice(0, drop);
      this.vs.splice(0, drop);
    }
  }

  clear(): void {
    this.ts = [];
    this.vs = [];
  }

  private mapValue(v: number): number {
    return this.opt.logScale ? Math.log10(Math.max(v, LOG_FLOOR)) : v;
  }

  draw(ctx: CanvasRenderingContext2D, x: number, y: number, w: number, h: number): void {
    ctx.save();
    ctx.fillStyle = "#14161c";
    ctx.fillRect(x, y, w, h);
    ctx.strokeStyle = "#2a2e3a";
    ctx.strokeRect(x + 0.5, y + 0.5, w - 1, h - 1);

    const mapped: number[] = [];
    for (const v of this.vs) if (v !== null) mapped.push(this.mapValue(v));
    let lo = this.opt.logScale ? Math.log10(LOG_FLOOR) : 0;
    let hi = this.opt.logScale ? 0 : 1;
    if (mapped.length > 0) {
      lo = Math.min(...mapped);
      hi = Math.max(...mapped);
    }
    if (this.opt.markZero) {
      lo = Math.min(lo, 0);
      hi = Math.max(hi, 0);
    }
    if (hi - lo < 1e-12) {
      hi += 0.5;
      lo -= 0.5;
    }
    const pad = 0.08 * (hi - lo);
    lo -= pad;
    hi += pad;

    const t1 = this.ts.length > 0 ? this.ts[this.ts.length - 1]! : 0;
    const t0 = t1 - this.windowSeconds;
    const px = (t: number) => x + ((t - t0) / this.windowSeconds) * w;
    const py = (v: number) => y + h - ((v - lo) / (hi - lo)) * h;

    if (this.opt.markZero) {
      ctx.strokeStyle = "#a04040";
      ctx.beginPath();
      ctx.moveTo(x, py(0));
      ctx.lineTo(x + w, py(0));
      ctx.stroke();
    }

    ctx.strokeStyle = this.opt.color;
    ctx.lineWidth = 1.25;
    ctx.beginPath();
    let pen = false;
    for (let i = 0; i < this.ts.length; i++) {
      const v = this.vs[i];
      if (v === null || v === undefined) {
        pen = false;
        continue;
      }
      const sx = px(this.ts[i]!);
      const sy = py(this.mapValue(v));
      if (pen) ctx.lineTo(sx, sy);
      else ctx.moveTo(sx, sy);
      pen = true;
    }
    ctx.stroke();

    ctx.fillStyle = "#9aa3b2";
    ctx.font = "11px system-ui, sans-serif";
    const last = this.vs.length > 0 ? this.vs[this.vs.length - 1] : null;
    const tail = last === null || last === undefined ? "—" : last.toExponential(2);
    ctx.fillText(`${this.opt.label}: ${tail}`, x + 6, y + 14);
    ctx.restore();
  }
}
