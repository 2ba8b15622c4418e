import { ApiError, ServiceClient } from "./api";
import { STAGE_OUTPUTS, paperVersions, plotPaths, tabState } from "./deps";
import {
  renderArtifactList,
  renderEventLine,
  renderKeyPanel,
  renderMarkdown,
  renderPlotGallery,
  renderTab,
} from "./render";
import { STAGES, type ArtifactEntry, type StageName } from "./types";

/** Dashboard controller: a pure client of the pipeline service. */
export class App {
  private client: ServiceClient;
  private projectId: string | null = null;
  private artifacts: ArtifactEntry[] = [];
  private runActive = false;

  constructor(
    private root: HTMLElement,
    baseUrl = "",
  ) {
    this.client = new ServiceClient(baseUrl);
  }

  async start(): Promise<void> {
    this.root.innerHTML = `
      <header>
        <h1>Research pipeline</h1>
        <div id="keys"></div>
      </header>
      <div id="banner" hidden></div>
      <section id="project-bar">
        <select id="project-select"></select>
        <input id="project-name" placeholder="new project name">
        <button id="project-create">Create</button>
      </section>
      <section id="input-panel">
        <h2>input.md</h2>
        <textarea id="input-text" rows="5"
          placeholder="Describe the data or the problem..."></textarea>
        <button id="input-save" disabled>Save input.md</button>
      </section>
      <nav id="stage-nav"></nav>
      <main id="tabs"></main>
      <section id="browser">
        <h2>Artifacts</h2>
        <div id="artifact-list"></div>
        <div id="gallery"></div>
      </section>`;

    this.el("project-create").addEventListener("click", () => {
      void this.createProject();
    });
    this.el("input-save").addEventListener("click", () => {
      void this.saveInput();
    });
    (this.el("project-select") as HTMLSelectElement).addEventListener(
      "change",
      (ev) => {
        void this.openProject((ev.target as HTMLSelectElement).value);
      },
    );

    await this.refreshKeys();
    await this.refreshProjects();
  }

  private el(id: string): HTMLElement {
    const node = this.root.querySelector(`#${id}`);
    if (!node) throw new Error(`missing element #${id}`);
    return node as HTMLElement;
  }

  private banner(message: string | null): void {
    const banner = this.el("banner");
    if (message === null) {
      banner.hidden = true;
      return;
    }
    banner.hidden = false;
    banner.textContent = message;
  }

  private async guard<T>(work: () => Promise<T>): Promise<T | null> {
    try {
      const out = await work();
      this.banner(null);
      return out;
    } catch (error) {
      this.banner(
        error instanceof ApiError
          ? `service error ${error.status}: ${error.message}`
          : String(error),
      );
      return null;
    }
  }

  private async refreshKeys(): Promise<void> {
    const keys = await this.guard(() => this.client.keys());
    if (keys) this.el("keys").innerHTML = renderKeyPanel(keys);
  }

  private async refreshProjects(): Promise<void> {
    const projects = await this.guard(() => this.client.listProjects());
    if (!projects) return;
    const select = this.el("project-select") as HTMLSelectElement;
    select.innerHTML =
      `<option value="">select project…</option>` +
      projects.map((p) => `<option value="${p.id}">${p.id}</option>`).join("");
    if (this.projectId) select.value = this.projectId;
  }

  private async createProject(): Promise<void> {
    const name = (this.el("project-name") as HTMLInputElement).value.trim();
    if (!name) return;
    const created = await this.guard(() => this.client.createProject(name));
    if (!created) return;
    await this.refreshProjects();
    await this.openProject(created.id);
  }

  async openProject(id: string): Promise<void> {
    if (!id) return;
    this.projectId = id;
    (this.el("project-select") as HTMLSelectElement).value = id;
    (this.el("input-save") as HTMLButtonElement).disabled = false;
    await this.refreshArtifacts();
  }

  private async saveInput(): Promise<void> {
    if (!this.projectId) return;
    const text = (this.el("input-text") as HTMLTextAreaElement).value;
    await this.guard(() => this.client.upload(this.projectId!, "input.md", text));
    await this.refreshArtifacts();
  }

  async refreshArtifacts(): Promise<void> {
    if (!this.projectId) return;
    const artifacts = await this.guard(() =>
      this.client.artifacts(this.projectId!),
    );
    if (!artifacts) return;
    this.artifacts = artifacts;
    this.renderTabs();
    this.renderBrowser();
  }

  private renderTabs(): void {
    const tabs = this.el("tabs");
    tabs.innerHTML = STAGES.map((stage) =>
      renderTab(tabState(stage, this.artifacts, this.runActive)),
    ).join("\n");
    for (const stage of STAGES) {
      const section = tabs.querySelector(
        `section[data-stage="${stage}"]`,
      ) as HTMLElement;
      const runButton = section.querySelector(".run") as HTMLButtonElement;
      runButton.addEventListener("click", () => {
        void this.runStage(stage, section);
      });
      const uploadButton = section.querySelector(
        ".upload-own",
      ) as HTMLButtonElement;
      uploadButton.addEventListener("click", () => {
        void this.uploadOwn(stage, section);
      });
      void this.fillPreview(stage, section);
    }
  }

  private async fillPreview(stage: StageName, section: HTMLElement): Promise<void> {
    const preview = section.querySelector(".artifact-preview") as HTMLElement;
    const artifact = preview.dataset.artifact;
    if (!artifact || !this.projectId) return;
    if (artifact.endsWith(".pdf")) {
      const url = this.client.artifactUrl(this.projectId, artifact);
      preview.innerHTML =
        `<p>${artifact}: <a href="${url}" download>download</a></p>` +
        `<embed src="${url}" type="application/pdf" width="100%" height="320">`;
      if (stage === "paper") {
        const versions = paperVersions(this.artifacts)
          .map(
            (p) =>
              `<a href="${this.client.artifactUrl(this.projectId!, p)}" download>${p}</a>`,
          )
          .join(" · ");
        preview.innerHTML += `<p class="versions">${versions}</p>`;
      }
      return;
    }
    const text = await this.guard(() =>
      this.client.downloadText(this.projectId!, artifact),
    );
    if (text !== null) {
      preview.innerHTML =
        `<h3>${artifact}</h3>` + `<div class="md">${renderMarkdown(text)}</div>`;
    }
  }

  private async uploadOwn(stage: StageName, section: HTMLElement): Promise<void> {
    if (!this.projectId) return;
    const textarea = section.querySelector(".own-text") as HTMLTextAreaElement;
    if (!textarea.value.trim()) return;
    await this.guard(() =>
      this.client.upload(this.projectId!, STAGE_OUTPUTS[stage], textarea.value),
    );
    await this.refreshArtifacts();
  }

  private async runStage(stage: StageName, section: HTMLElement): Promise<void> {
    if (!this.projectId || this.runActive) return;
    const mode = (section.querySelector(".mode") as HTMLSelectElement).value as
      | "fast"
      | "planned";
    const log = section.querySelector(".log") as HTMLPreElement;
    log.hidden = false;
    log.textContent = "";
    this.runActive = true;
    this.setRunButtons(false);
    const started = await this.guard(() =>
      this.client.startRun(this.projectId!, { stage, mode }),
    );
    if (!started) {
      this.runActive = false;
      this.setRunButtons(true);
      return;
    }
    await this.guard(() =>
      this.client.streamEvents(started.run_id, (event) => {
        log.textContent += renderEventLine(event) + "\n";
        log.scrollTop = log.scrollHeight;
      }),
    );
    this.runActive = false;
    await this.refreshArtifacts();
  }

  private setRunButtons(enabled: boolean): void {
    for (const button of this.root.querySelectorAll("button.run")) {
      (button as HTMLButtonElement).disabled = !enabled;
    }
  }

  private renderBrowser(): void {
    const urlFor = (path: string) =>
      this.client.artifactUrl(this.projectId!, path);
    this.el("artifact-list").innerHTML = renderArtifactList(
      this.artifacts,
      urlFor,
    );
    this.el("gallery").innerHTML = renderPlotGallery(
      plotPaths(this.artifacts),
      urlFor,
    );
  }
}
