export type StageName =
  | "idea"
  | "literature"
  | "methods"
  | "analysis"
  | "paper"
  | "review";

export const STAGES: StageName[] = [
  "idea",
  "literature",
  "methods",
  "analysis",
  "paper",
  "review",
];

export interface ArtifactEntry {
  path: string;
  size: number;
  mtime: number;
}

export interface ProjectInfo {
  id: string;
  artifacts: ArtifactEntry[];
  active_run: string | null;
}

export interface RunEvent {
  kind:
    | "stage_started"
    | "agent_turn"
    | "exec_stdout"
    | "warning"
    | "stage_done"
    | "stage_failed"
    | "run_interrupted";
  text: string;
  stage: string;
  seq: number;
  timestamp: number;
}

export interface RunStatus {
  run_id: string;
  stage: string;
  status: "running" | "done" | "failed" | "interrupted";
  project: string;
  events: number;
}

export interface KeyPresence {
  [provider: string]: boolean;
}

export interface StartRunRequest {
  stage: StageName;
  mode?: "fast" | "planned";
  options?: Record<string, unknown>;
}
