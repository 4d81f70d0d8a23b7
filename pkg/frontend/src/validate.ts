import type { ProjectionPoint } from "./types.js";

export type SelectionCheck =
  | { ok: true; class_name: string; image_ids: string[] }
  | { ok: false; error: string };

/** Client-side gate before any feedback POST: the selection must be
 * nonempty, reference live image points, and sit in exactly one class. */
export function validateSelection(
  points: ProjectionPoint[],
  selectedIds: ReadonlySet<string>,
): SelectionCheck {
  if (selectedIds.size === 0) {
    return { ok: false, error: "select at least one image" };
  }
  const byId = new Map(points.map((p) => [p.id, p]));
  const classes = new Set<string>();
  const imageIds: string[] = [];
  for (const id of [...selectedIds].sort()) {
    const point = byId.get(id);
    if (!point) {
      return { ok: false, error: `selection references unknown point '${id}'` };
    }
    if (point.modality !== "image") {
      return { ok: false, error: `'${id}' is a label, not an image` };
    }
    classes.add(point.class_name ?? "");
    imageIds.push(id);
  }
  if (classes.size > 1) {
    return {
      ok: false,
      error: `selection spans ${classes.size} classes (${[...classes].sort().join(", ")}); pick one class`,
    };
  }
  return { ok: true, class_name: [...classes][0], image_ids: imageIds };
}
