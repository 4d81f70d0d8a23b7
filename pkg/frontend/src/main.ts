/** DOM wiring: panels, zoom, lasso selection, feedback buttons. All engine
 * numbers flow through the typed payloads in api.ts. */

import { ApiClient } from "./api.js";
import { acceptAndRefresh, runFeedbackFlow } from "./flow.js";
import {
  renderDistribution,
  renderLabelList,
  renderMetricChart,
  renderPendingCard,
} from "./render.js";
import {
  Debouncer,
  TREECUT_DEBOUNCE_MS,
  fitViewport,
  nearestNode,
  toData,
  zoomAt,
  type Viewport,
} from "./scatter.js";
import {
  clearSelection,
  feedbackEnabled,
  initialState,
  pruneSelection,
  toggleSelection,
  type ViewState,
} from "./state.js";
import type { ProjectionPayload, TreecutPayload } from "./types.js";

const api = new ApiClient("");
let sid: string | null = null;
let state: ViewState = initialState;
let projection: ProjectionPayload | null = null;
let treecut: TreecutPayload | null = null;
let view: Viewport | null = null;
const treecutDebounce = new Debouncer(TREECUT_DEBOUNCE_MS);

const $ = (id: string) => document.getElementById(id)!;

async function refreshAll(): Promise<void> {
  if (!sid) return;
  projection = await api.projection(sid);
  treecut = await api.treecut(sid, state.budget, state.focus ?? undefined);
  state = pruneSelection(state, projection.points);
  view = fitViewport(projection.points, 720, 520);
  $("distribution").innerHTML = renderDistribution(projection, treecut, state.selectedIds);
  const metrics = await api.metrics(sid);
  $("chart").innerHTML = renderMetricChart(metrics.timeline);
  const labels = await api.labels(sid);
  $("labels").innerHTML = renderLabelList(labels.labels);
  updateButtons();
  bindGlyphs();
}

function updateButtons(): void {
  const enabled = feedbackEnabled(state);
  ($("btn-delete") as HTMLButtonElement).disabled = !enabled;
  ($("btn-add") as HTMLButtonElement).disabled = !enabled;
  $("selection-count").textContent = `${state.selectedIds.size} selected`;
}

function bindGlyphs(): void {
  for (const el of document.querySelectorAll<SVGElement>("#distribution .glyph")) {
    el.addEventListener("click", () => {
      const id = el.dataset.id!;
      state = toggleSelection(state, id);
      $("distribution").innerHTML = renderDistribution(projection, treecut, state.selectedIds);
      updateButtons();
      bindGlyphs();
    });
  }
}

async function feedback(kind: "delete" | "add"): Promise<void> {
  if (!sid || !projection) return;
  const result = await runFeedbackFlow(api, sid, projection.points, state.selectedIds, kind);
  if (!result.ok) {
    $("flash").textContent = result.error;
    return;
  }
  $("flash").textContent = "";
  $("pending").innerHTML = renderPendingCard(result.card);
  $("pending").querySelector(".accept")!.addEventListener("click", async () => {
    const refreshed = await acceptAndRefresh(api, sid!, result.card.promptId);
    $("pending").innerHTML = "";
    $("flash").textContent = `accepted: v${refreshed.corpusVersion}, +${refreshed.generated} images`;
    state = clearSelection(state);
    await refreshAll();
  });
  $("pending").querySelector(".reject")!.addEventListener("click", async () => {
    await api.rejectPrompt(sid!, result.card.promptId);
    $("pending").innerHTML = "";
  });
}

function wireZoom(): void {
  const container = $("distribution");
  container.addEventListener("wheel", (ev) => {
    if (!view || !treecut) return;
    ev.preventDefault();
    const factor = (ev as WheelEvent).deltaY < 0 ? 1.15 : 1 / 1.15;
    view = zoomAt(view, (ev as WheelEvent).offsetX, (ev as WheelEvent).offsetY, factor);
    const [cx, cy] = toData(view, 360, 260);
    const focusNode = nearestNode(treecut.nodes, cx, cy);
    if (focusNode && focusNode.id !== state.focus) {
      state = { ...state, focus: focusNode.id };
      treecutDebounce.schedule(async () => {
        if (!sid) return;
        treecut = await api.treecut(sid, state.budget, state.focus ?? undefined);
        $("distribution").innerHTML = renderDistribution(projection, treecut, state.selectedIds);
        bindGlyphs();
      });
    }
  });
}

async function boot(): Promise<void> {
  $("btn-create").addEventListener("click", async () => {
    const path = ($("corpus-path") as HTMLInputElement).value;
    const created = await api.createSession(path, { epochs: 20 });
    sid = created.session_id;
    $("session-id").textContent = sid;
    await refreshAll();
  });
  $("btn-delete").addEventListener("click", () => void feedback("delete"));
  $("btn-add").addEventListener("click", () => void feedback("add"));
  wireZoom();
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  void boot();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => void boot());
}
