import { chartGeometry } from "./chart.js";
import { pieGlyph, sectorPath } from "./pie.js";
import { fitViewport, toScreen } from "./scatter.js";
import type { DiffSpan } from "./diff.js";
import type {
  LabelRow,
  MetricEntry,
  ProjectionPayload,
  TreecutPayload,
} from "./types.js";
import type { PendingCard } from "./flow.js";

const CLASS_PALETTE = [
  "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
  "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

export function classColor(classes: string[], className: string | undefined): string {
  if (!className) return "#888888";
  const idx = classes.indexOf(className);
  return CLASS_PALETTE[(idx >= 0 ? idx : classes.length) % CLASS_PALETTE.length];
}

const esc = (s: string) =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");

/** The multi-modal distribution view: image glyphs (squares for originals,
 * triangles for generated, colored by class) plus label pie glyphs from the
 * current tree cut. Renders an empty-state note when payloads are missing. */
export function renderDistribution(
  projection: ProjectionPayload | null,
  treecut: TreecutPayload | null,
  selectedIds: ReadonlySet<string>,
  width = 720,
  height = 520,
): string {
  if (!projection || projection.points.length === 0) {
    return `<svg width="${width}" height="${height}"><text x="${width / 2}" y="${height / 2}" text-anchor="middle" fill="#666">no projection yet</text></svg>`;
  }
  const view = fitViewport(projection.points, width, height);
  const classes = [...new Set(projection.points.map((p) => p.class_name).filter((c): c is string => !!c))].sort();
  const parts: string[] = [
    `<svg width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`,
  ];
  for (const p of projection.points) {
    if (p.modality !== "image") continue;
    const [sx, sy] = toScreen(view, p.x, p.y);
    const color = classColor(classes, p.class_name);
    const selected = selectedIds.has(p.id);
    const stroke = selected ? ' stroke="#111" stroke-width="2"' : "";
    if (p.kind === "generated") {
      const r = 4;
      parts.push(
        `<polygon data-id="${esc(p.id)}" class="glyph image generated" points="${sx},${sy - r} ${sx - r},${sy + r} ${sx + r},${sy + r}" fill="${color}"${stroke}/>`,
      );
    } else {
      parts.push(
        `<rect data-id="${esc(p.id)}" class="glyph image original" x="${sx - 3}" y="${sy - 3}" width="6" height="6" fill="${color}"${stroke}/>`,
      );
    }
  }
  for (const node of treecut?.nodes ?? []) {
    const [sx, sy] = toScreen(view, node.x, node.y);
    const glyph = pieGlyph(node.original_count, node.generated_count);
    parts.push(`<g data-node="${esc(node.id)}" class="label-glyph">`);
    for (const sector of glyph.sectors) {
      const fill = sector.kind === "original" ? "#b5b5b5" : "#f2f2f2";
      parts.push(
        `<path class="pie-${sector.kind}" data-count="${sector.count}" d="${sectorPath(sx, sy, glyph.radius, sector)}" fill="${fill}" stroke="#555" stroke-width="0.5"/>`,
      );
    }
    parts.push(
      `<text x="${sx + glyph.radius + 3}" y="${sy + 4}" font-size="11" fill="#222">${esc(node.name)}</text>`,
    );
    parts.push("</g>");
  }
  parts.push("</svg>");
  return parts.join("\n");
}

export function renderMetricChart(timeline: MetricEntry[], width = 480, height = 200): string {
  const geo = chartGeometry(timeline, width, height);
  const parts = [`<svg width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`];
  geo.series.forEach((s, i) => {
    if (geo.polylines[i]) {
      parts.push(`<polyline fill="none" stroke="${s.color}" stroke-width="2" points="${geo.polylines[i]}"/>`);
    }
    parts.push(`<text x="8" y="${14 + 13 * i}" font-size="11" fill="${s.color}">${s.name}</text>`);
  });
  for (const m of geo.markers) {
    parts.push(`<circle class="metric-point" cx="${m.x.toFixed(1)}" cy="${m.y.toFixed(1)}" r="3" fill="${m.color}"/>`);
  }
  parts.push("</svg>");
  return parts.join("\n");
}

export function renderDiffSpans(diff: DiffSpan[]): string {
  return diff
    .map((span) => {
      const text = esc(span.text);
      if (span.op === "added") return `<ins>${text}</ins>`;
      if (span.op === "removed") return `<del>${text}</del>`;
      return `<span>${text}</span>`;
    })
    .join("");
}

export function renderPendingCard(card: PendingCard): string {
  return [
    `<div class="pending-card" data-prompt="${esc(card.promptId)}">`,
    `<div class="pending-class">${esc(card.className)} · v${card.candidateVersion}</div>`,
    `<div class="pending-diff">${renderDiffSpans(card.diff)}</div>`,
    `<button class="accept" data-prompt="${esc(card.promptId)}">✓ accept</button>`,
    `<button class="reject" data-prompt="${esc(card.promptId)}">✗ reject</button>`,
    "</div>",
  ].join("\n");
}

/** Info-panel label list, already ranked by the service. */
export function renderLabelList(rows: LabelRow[]): string {
  const items = rows.map((row) => {
    const glyph = pieGlyph(row.original_count, row.generated_count);
    const sectors = glyph.sectors
      .map((s) => `<path d="${sectorPath(10, 10, 8, s)}" fill="${s.kind === "original" ? "#b5b5b5" : "#f2f2f2"}" stroke="#555" stroke-width="0.5"/>`)
      .join("");
    return `<li data-label="${esc(row.id)}"><svg width="20" height="20">${sectors}</svg>` +
      `<span class="label-text">${esc(row.text)}</span>` +
      `<span class="label-ratio">${row.ratio.toFixed(2)}</span></li>`;
  });
  return `<ul class="label-list">${items.join("")}</ul>`;
}
