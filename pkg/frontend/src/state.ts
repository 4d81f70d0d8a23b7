import type { FeedbackKind, ProjectionPoint } from "./types.js";

/** Client view state; engine truth stays on the server. */
export interface ViewState {
  selectedIds: ReadonlySet<string>;
  focus: string | null;
  budget: number;
  filters: {
    class_name?: string;
    kind?: "original" | "generated";
    label?: string;
    iteration?: number;
  };
  pendingBanners: string[]; // prompt ids awaiting accept/reject
}

export const initialState: ViewState = {
  selectedIds: new Set(),
  focus: null,
  budget: 8,
  filters: {},
  pendingBanners: [],
};

export function toggleSelection(state: ViewState, id: string): ViewState {
  const next = new Set(state.selectedIds);
  if (next.has(id)) {
    next.delete(id);
  } else {
    next.add(id);
  }
  return { ...state, selectedIds: next };
}

export function selectMany(state: ViewState, ids: string[]): ViewState {
  return { ...state, selectedIds: new Set([...state.selectedIds, ...ids]) };
}

export function clearSelection(state: ViewState): ViewState {
  return { ...state, selectedIds: new Set() };
}

/** Drop selections that no longer exist after a corpus refresh. */
export function pruneSelection(state: ViewState, live: ProjectionPoint[]): ViewState {
  const liveIds = new Set(live.map((p) => p.id));
  const kept = [...state.selectedIds].filter((id) => liveIds.has(id));
  return { ...state, selectedIds: new Set(kept) };
}

export function setFilter(state: ViewState, key: keyof ViewState["filters"], value: ViewState["filters"][typeof key] | undefined): ViewState {
  const filters = { ...state.filters };
  if (value === undefined) {
    delete filters[key];
  } else {
    (filters as Record<string, unknown>)[key] = value;
  }
  return { ...state, filters };
}

export function setFocus(state: ViewState, focus: string | null): ViewState {
  return { ...state, focus };
}

export function setBudget(state: ViewState, budget: number): ViewState {
  return { ...state, budget: Math.max(1, Math.round(budget)) };
}

export function addBanner(state: ViewState, promptId: string): ViewState {
  if (state.pendingBanners.includes(promptId)) return state;
  return { ...state, pendingBanners: [...state.pendingBanners, promptId] };
}

export function removeBanner(state: ViewState, promptId: string): ViewState {
  return { ...state, pendingBanners: state.pendingBanners.filter((p) => p !== promptId) };
}

/** Points visible under the active filters (selection acts on these). */
export function applyFilters(points: ProjectionPoint[], filters: ViewState["filters"], imageLabels?: Map<string, string[]>): ProjectionPoint[] {
  return points.filter((p) => {
    if (p.modality !== "image") return true;
    if (filters.class_name && p.class_name !== filters.class_name) return false;
    if (filters.kind && p.kind !== filters.kind) return false;
    if (filters.iteration !== undefined && p.iteration !== filters.iteration) return false;
    if (filters.label && imageLabels && !(imageLabels.get(p.id) ?? []).includes(filters.label)) return false;
    return true;
  });
}

/** Feedback buttons stay disabled until a usable selection exists. */
export function feedbackEnabled(state: ViewState): boolean {
  return state.selectedIds.size > 0;
}

export interface FeedbackRequest {
  kind: FeedbackKind;
  class_name: string;
  image_ids: string[];
}
