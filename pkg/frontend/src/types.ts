/** Payload shapes served by the session service. Every number the UI shows
 * comes from one of these; the client never recomputes engine quantities. */

export interface ProjectionPoint {
  id: string;
  modality: "image" | "label";
  x: number;
  y: number;
  class_name?: string;
  kind?: "original" | "generated";
  iteration?: number;
  text?: string;
}

export interface ProjectionPayload {
  corpus_version: number;
  points: ProjectionPoint[];
}

export interface TreecutNode {
  id: string;
  name: string;
  members: string[];
  original_count: number;
  generated_count: number;
  doi: number;
  x: number;
  y: number;
}

export interface TreecutPayload {
  corpus_version: number;
  focus: string;
  budget: number;
  nodes: TreecutNode[];
}

export interface MetricEntry {
  iteration: number;
  informativeness: number | null;
  diversity: number | null;
  distance: number | null;
  generated_count: number;
}

export interface MetricsPayload {
  corpus_version: number;
  timeline: MetricEntry[];
}

export interface PromptInfo {
  id: string;
  class_name: string;
  text: string;
  version: number;
  parent_version: number | null;
}

export interface PendingPrompt extends PromptInfo {
  prompt_id: string;
  job_id: string;
}

export interface PromptsPayload {
  corpus_version: number;
  prompts: PromptInfo[];
  pending: PendingPrompt[];
}

export interface ImageRow {
  id: string;
  class_name: string;
  kind: "original" | "generated";
  iteration: number;
  prompt_id: string | null;
  x: number;
  y: number;
}

export interface ImagesPayload {
  corpus_version: number;
  images: ImageRow[];
}

export interface LabelRow {
  id: string;
  text: string;
  frequency: number;
  original_count: number;
  generated_count: number;
  ratio: number;
}

export interface LabelsPayload {
  corpus_version: number;
  labels: LabelRow[];
}

export interface JobStatus {
  job_id: string;
  status: "running" | "done" | "failed";
  class_name: string;
  prompt_id: string | null;
  error: string | null;
}

export interface ServiceError {
  code: string;
  message: string;
  detail: Record<string, unknown>;
}

export type FeedbackKind = "delete" | "add";
