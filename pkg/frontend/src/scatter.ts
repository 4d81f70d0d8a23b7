import type { ProjectionPoint, TreecutNode } from "./types.js";

export interface Viewport {
  width: number;
  height: number;
  scale: number;
  offsetX: number;
  offsetY: number;
}

/** Fit all points into the canvas with a margin; zoom/pan compose on top. */
export function fitViewport(points: ProjectionPoint[], width: number, height: number, margin = 24): Viewport {
  if (points.length === 0) {
    return { width, height, scale: 1, offsetX: width / 2, offsetY: height / 2 };
  }
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const minX = Math.min(...xs);
  const maxX = Math.max(...xs);
  const minY = Math.min(...ys);
  const maxY = Math.max(...ys);
  const spanX = maxX - minX || 1;
  const spanY = maxY - minY || 1;
  const scale = Math.min((width - 2 * margin) / spanX, (height - 2 * margin) / spanY);
  return {
    width,
    height,
    scale,
    offsetX: width / 2 - scale * (minX + maxX) / 2,
    offsetY: height / 2 - scale * (minY + maxY) / 2,
  };
}

export function toScreen(view: Viewport, x: number, y: number): [number, number] {
  return [view.offsetX + view.scale * x, view.offsetY + view.scale * y];
}

export function toData(view: Viewport, sx: number, sy: number): [number, number] {
  return [(sx - view.offsetX) / view.scale, (sy - view.offsetY) / view.scale];
}

export function zoomAt(view: Viewport, sx: number, sy: number, factor: number): Viewport {
  const scale = view.scale * factor;
  return {
    ...view,
    scale,
    offsetX: sx - (sx - view.offsetX) * factor,
    offsetY: sy - (sy - view.offsetY) * factor,
  };
}

/** The treecut node whose position sits closest to the view center becomes
 * the next focus when the user zooms. */
export function nearestNode(nodes: TreecutNode[], centerX: number, centerY: number): TreecutNode | null {
  let best: TreecutNode | null = null;
  let bestDist = Infinity;
  for (const node of nodes) {
    const d = (node.x - centerX) ** 2 + (node.y - centerY) ** 2;
    if (d < bestDist || (d === bestDist && best && node.id < best.id)) {
      bestDist = d;
      best = node;
    }
  }
  return best;
}

/** Image ids inside a lasso rectangle, in data coordinates. */
export function idsInRect(points: ProjectionPoint[], x0: number, y0: number, x1: number, y1: number): string[] {
  const [lo_x, hi_x] = x0 <= x1 ? [x0, x1] : [x1, x0];
  const [lo_y, hi_y] = y0 <= y1 ? [y0, y1] : [y1, y0];
  return points
    .filter((p) => p.modality === "image" && p.x >= lo_x && p.x <= hi_x && p.y >= lo_y && p.y <= hi_y)
    .map((p) => p.id)
    .sort();
}

/** Trailing-edge debouncer for treecut refetches while zooming. */
export class Debouncer {
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(private delayMs: number) {}

  schedule(fn: () => void): void {
    this.cancel();
    this.timer = setTimeout(() => {
      this.timer = null;
      fn();
    }, this.delayMs);
  }

  cancel(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  get pending(): boolean {
    return this.timer !== null;
  }
}

export const TREECUT_DEBOUNCE_MS = 150;
