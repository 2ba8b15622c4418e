import { describe, expect, inject, it } from "vitest";
import { ServiceClient } from "../src/api";
import { STAGE_INPUTS, tabState } from "../src/deps";
import { STAGES, type ArtifactEntry, type StageName } from "../src/types";

const client = () => new ServiceClient(inject("baseUrl"));

function matrix(artifacts: ArtifactEntry[]): Record<StageName, boolean> {
  const out = {} as Record<StageName, boolean>;
  for (const stage of STAGES) out[stage] = tabState(stage, artifacts).runEnabled;
  return out;
}

/** Independent oracle for "every required input present", straight off the
 * service's artifact listing. */
function expectedEnabled(
  stage: StageName,
  artifacts: ArtifactEntry[],
): boolean {
  const paths = new Set(artifacts.map((a) => a.path));
  return STAGE_INPUTS[stage].every((input) =>
    input === "paper.pdf"
      ? [1, 2, 3, 4].some((v) => paths.has(`paper_v${v}.pdf`))
      : paths.has(input),
  );
}

describe("stage tab dependency matrix against the live service", () => {
  it("run button enabled iff required inputs present, at every step", async () => {
    const api = client();
    await api.createProject("matrix");

    const progression: Array<[string, string] | null> = [
      null, // fresh project
      ["input.md", "the input"],
      ["idea.md", "the idea"],
      ["methods.md", "the methods"],
      ["results.md", "the results"],
      ["paper_v1.pdf", "%PDF-1.3 fake"],
    ];

    const snapshots: Record<string, Record<StageName, boolean>> = {};
    for (const step of progression) {
      if (step) await api.upload("matrix", step[0], step[1]);
      const artifacts = await api.artifacts("matrix");
      const state = matrix(artifacts);
      snapshots[step ? `after ${step[0]}` : "fresh"] = state;
      for (const stage of STAGES) {
        expect(state[stage], `${stage} after ${step?.[0] ?? "init"}`).toBe(
          expectedEnabled(stage, artifacts),
        );
      }
    }
    expect(snapshots).toMatchSnapshot();
  });

  it("fresh project: idea runnable, methods reports missing idea.md", async () => {
    const api = client();
    await api.createProject("fresh-check");
    await api.upload("fresh-check", "input.md", "only the input");
    const artifacts = await api.artifacts("fresh-check");
    expect(tabState("idea", artifacts).runEnabled).toBe(true);
    const methods = tabState("methods", artifacts);
    expect(methods.runEnabled).toBe(false);
    expect(methods.missing).toEqual(["idea.md"]);
  });

  it("an active run disables every tab (conflict mirror)", async () => {
    const artifacts: ArtifactEntry[] = [
      "input.md",
      "idea.md",
      "methods.md",
      "results.md",
    ].map((path) => ({ path, size: 1, mtime: 0 }));
    for (const stage of STAGES) {
      expect(tabState(stage, artifacts, true).runEnabled).toBe(false);
    }
  });

  it("user-pasted idea flows into a methods run", async () => {
    const api = client();
    await api.createProject("override");
    await api.upload("override", "input.md", "the brief");
    await api.upload("override", "idea.md", "MY PASTED IDEA");
    const artifacts = await api.artifacts("override");
    expect(tabState("methods", artifacts).runEnabled).toBe(true);

    const { run_id } = await api.startRun("override", {
      stage: "methods",
      mode: "fast",
    });
    const events = await api.streamEvents(run_id, () => {});
    expect(events.at(-1)?.kind).toBe("stage_done");
    const methods = await api.downloadText("override", "methods.md");
    expect(methods).toBe("fast methods text");
  });
});
