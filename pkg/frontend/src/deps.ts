import type { ArtifactEntry, StageName } from "./types";

/** Required input artifacts per stage (the service enforces the same table;
 * the UI mirrors it so tabs can explain themselves before a run). */
export const STAGE_INPUTS: Record<StageName, string[]> = {
  idea: ["input.md"],
  literature: ["input.md", "idea.md"],
  methods: ["input.md", "idea.md"],
  analysis: ["input.md", "idea.md", "methods.md"],
  paper: ["input.md", "idea.md", "methods.md", "results.md"],
  review: ["paper.pdf"], // any compiled checkpoint
};

/** The artifact a user may hand-supply on each stage's tab. */
export const STAGE_OUTPUTS: Record<StageName, string> = {
  idea: "idea.md",
  literature: "literature.md",
  methods: "methods.md",
  analysis: "results.md",
  paper: "paper_v4.tex",
  review: "referee.md",
};

export interface TabState {
  stage: StageName;
  missing: string[];
  present: string[];
  runEnabled: boolean;
  latestArtifact: string | null;
}

function hasPaperPdf(paths: Set<string>): boolean {
  return [4, 3, 2, 1].some((v) => paths.has(`paper_v${v}.pdf`));
}

export function latestPaperPdf(paths: Set<string>): string | null {
  for (const v of [4, 3, 2, 1]) {
    if (paths.has(`paper_v${v}.pdf`)) return `paper_v${v}.pdf`;
  }
  return null;
}

/**
 * Pure dependency matrix: a tab's run button is enabled exactly when every
 * required input exists (and nothing else is running on the project).
 */
export function tabState(
  stage: StageName,
  artifacts: ArtifactEntry[],
  runActive = false,
): TabState {
  const paths = new Set(artifacts.map((a) => a.path));
  const required = STAGE_INPUTS[stage];
  const missing: string[] = [];
  const present: string[] = [];
  for (const input of required) {
    const satisfied =
      input === "paper.pdf" ? hasPaperPdf(paths) : paths.has(input);
    (satisfied ? present : missing).push(input);
  }
  const output = STAGE_OUTPUTS[stage];
  let latestArtifact: string | null = paths.has(output) ? output : null;
  if (stage === "review" && paths.has("referee.md")) latestArtifact = "referee.md";
  if (stage === "paper") latestArtifact = latestPaperPdf(paths) ?? latestArtifact;
  return {
    stage,
    missing,
    present,
    runEnabled: missing.length === 0 && !runActive,
    latestArtifact,
  };
}

export function paperVersions(artifacts: ArtifactEntry[]): string[] {
  const paths = new Set(artifacts.map((a) => a.path));
  const versions: string[] = [];
  for (const v of [1, 2, 3, 4]) {
    for (const ext of ["tex", "pdf"]) {
      const name = `paper_v${v}.${ext}`;
      if (paths.has(name)) versions.push(name);
    }
  }
  return versions;
}

export function plotPaths(artifacts: ArtifactEntry[]): string[] {
  return artifacts
    .map((a) => a.path)
    .filter((p) => p.startsWith("Plots/"))
    .sort();
}
