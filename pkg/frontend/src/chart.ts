import type { MetricEntry } from "./types.js";

export interface ChartSeries {
  name: "informativeness" | "diversity" | "distance";
  color: string;
  points: { iteration: number; value: number }[];
}

export interface ChartGeometry {
  series: ChartSeries[];
  /** screen-space polyline strings per series, same order */
  polylines: string[];
  markers: { x: number; y: number; color: string }[];
}

const SERIES: { name: ChartSeries["name"]; color: string }[] = [
  { name: "informativeness", color: "#1f77b4" },
  { name: "diversity", color: "#2ca02c" },
  { name: "distance", color: "#d62728" },
];

/** Null metric entries (no generated images yet) are skipped, not drawn. */
export function extractSeries(timeline: MetricEntry[]): ChartSeries[] {
  return SERIES.map(({ name, color }) => ({
    name,
    color,
    points: timeline
      .filter((e) => e[name] !== null)
      .map((e) => ({ iteration: e.iteration, value: e[name] as number })),
  }));
}

export function chartGeometry(timeline: MetricEntry[], width = 480, height = 200, pad = 28): ChartGeometry {
  const series = extractSeries(timeline);
  const values = series.flatMap((s) => s.points.map((p) => p.value));
  const iterations = series.flatMap((s) => s.points.map((p) => p.iteration));
  if (values.length === 0) {
    return { series, polylines: series.map(() => ""), markers: [] };
  }
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  const minIt = Math.min(...iterations);
  const maxIt = Math.max(...iterations);
  const itSpan = maxIt - minIt || 1;
  const sx = (it: number) => pad + ((it - minIt) / itSpan) * (width - 2 * pad);
  const sy = (v: number) => height - pad - ((v - lo) / span) * (height - 2 * pad);

  const polylines = series.map((s) =>
    s.points.map((p) => `${sx(p.iteration).toFixed(1)},${sy(p.value).toFixed(1)}`).join(" "),
  );
  const markers = series.flatMap((s) =>
    s.points.map((p) => ({ x: sx(p.iteration), y: sy(p.value), color: s.color })),
  );
  return { series, polylines, markers };
}

/** Count of drawable datapoints; the e2e flow asserts this grows by one
 * per series after an accepted prompt generates a round. */
export function visiblePointCount(timeline: MetricEntry[], name: ChartSeries["name"]): number {
  return timeline.filter((e) => e[name] !== null).length;
}
