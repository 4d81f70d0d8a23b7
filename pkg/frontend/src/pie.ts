/** Pie glyph geometry for content labels: one sector for originals, one for
 * generated, sized by the total count behind the label. All fractions come
 * straight from the payload counts. */

export interface PieSector {
  kind: "original" | "generated";
  count: number;
  fraction: number;
  startAngle: number; // radians, 0 at 12 o'clock, clockwise
  endAngle: number;
}

export interface PieGlyph {
  total: number;
  radius: number;
  sectors: PieSector[];
}

export function pieSectors(originalCount: number, generatedCount: number): PieSector[] {
  const total = originalCount + generatedCount;
  if (total === 0) return [];
  const originalFraction = originalCount / total;
  const sectors: PieSector[] = [];
  let angle = 0;
  for (const [kind, count, fraction] of [
    ["original", originalCount, originalFraction],
    ["generated", generatedCount, 1 - originalFraction],
  ] as const) {
    if (count === 0) continue;
    const end = angle + fraction * 2 * Math.PI;
    sectors.push({ kind, count, fraction, startAngle: angle, endAngle: end });
    angle = end;
  }
  return sectors;
}

/** Radius grows with the square root of the count so area tracks count. */
export function pieRadius(total: number, minRadius = 4, unit = 1.6): number {
  return minRadius + unit * Math.sqrt(total);
}

export function pieGlyph(originalCount: number, generatedCount: number): PieGlyph {
  const total = originalCount + generatedCount;
  return {
    total,
    radius: pieRadius(total),
    sectors: pieSectors(originalCount, generatedCount),
  };
}

/** SVG path for one sector centered at (cx, cy). */
export function sectorPath(cx: number, cy: number, radius: number, sector: PieSector): string {
  if (sector.fraction >= 1) {
    // full disc; arcs degenerate, draw two half circles
    return [
      `M ${cx} ${cy - radius}`,
      `A ${radius} ${radius} 0 1 1 ${cx} ${cy + radius}`,
      `A ${radius} ${radius} 0 1 1 ${cx} ${cy - radius}`,
      "Z",
    ].join(" ");
  }
  const point = (angle: number): [number, number] => [
    cx + radius * Math.sin(angle),
    cy - radius * Math.cos(angle),
  ];
  const [x0, y0] = point(sector.startAngle);
  const [x1, y1] = point(sector.endAngle);
  const largeArc = sector.endAngle - sector.startAngle > Math.PI ? 1 : 0;
  return `M ${cx} ${cy} L ${x0} ${y0} A ${radius} ${radius} 0 ${largeArc} 1 ${x1} ${y1} Z`;
}
