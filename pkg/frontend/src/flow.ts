import { ApiClient, ApiError } from "./api.js";
import { diffWords, type DiffSpan } from "./diff.js";
import { validateSelection } from "./validate.js";
import type { FeedbackKind, JobStatus, ProjectionPoint, PromptsPayload } from "./types.js";

export interface PendingCard {
  promptId: string;
  className: string;
  currentText: string;
  candidateText: string;
  candidateVersion: number;
  diff: DiffSpan[];
}

export type FlowResult =
  | { ok: true; card: PendingCard }
  | { ok: false; stage: "validate" | "submit" | "job"; error: string };

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/** Drives one feedback round trip: client-side validation, POST, job poll,
 * then the pending card diffed against the current prompt. Server errors
 * (409 conflicts, 422 validation) surface inline instead of throwing. */
export async function runFeedbackFlow(
  api: ApiClient,
  sid: string,
  points: ProjectionPoint[],
  selectedIds: ReadonlySet<string>,
  kind: FeedbackKind,
  options: { pollMs?: number; timeoutMs?: number } = {},
): Promise<FlowResult> {
  const check = validateSelection(points, selectedIds);
  if (!check.ok) {
    return { ok: false, stage: "validate", error: check.error };
  }

  let jobId: string;
  try {
    const resp = await api.submitFeedback(sid, kind, check.class_name, check.image_ids);
    jobId = resp.job_id;
  } catch (err) {
    if (err instanceof ApiError) {
      return { ok: false, stage: "submit", error: `${err.status}: ${err.payload.message}` };
    }
    throw err;
  }

  const pollMs = options.pollMs ?? 100;
  const deadline = Date.now() + (options.timeoutMs ?? 60_000);
  let job: JobStatus;
  do {
    job = await api.jobStatus(sid, jobId);
    if (job.status !== "running") break;
    if (Date.now() > deadline) {
      return { ok: false, stage: "job", error: "evolution job timed out" };
    }
    await sleep(pollMs);
  } while (true);

  if (job.status === "failed" || !job.prompt_id) {
    return { ok: false, stage: "job", error: job.error ?? "job failed" };
  }

  const prompts = await api.prompts(sid);
  const card = buildPendingCard(prompts, job.prompt_id);
  if (!card) {
    return { ok: false, stage: "job", error: "pending prompt disappeared" };
  }
  return { ok: true, card };
}

export function buildPendingCard(prompts: PromptsPayload, promptId: string): PendingCard | null {
  const pending = prompts.pending.find((p) => p.prompt_id === promptId);
  if (!pending) return null;
  const current = prompts.prompts.find((p) => p.class_name === pending.class_name);
  const currentText = current?.text ?? "";
  return {
    promptId,
    className: pending.class_name,
    currentText,
    candidateText: pending.text,
    candidateVersion: pending.version,
    diff: diffWords(currentText, pending.text),
  };
}

/** Accept a pending prompt and report how the engine state moved; the
 * metric chart refetch hangs off the returned version. */
export async function acceptAndRefresh(api: ApiClient, sid: string, promptId: string) {
  const result = await api.acceptPrompt(sid, promptId);
  const metrics = await api.metrics(sid);
  return {
    corpusVersion: result.corpus_version,
    generated: result.generated,
    metrics,
  };
}
