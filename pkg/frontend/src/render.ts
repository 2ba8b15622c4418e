import type { TabState } from "./deps";
import type { ArtifactEntry, KeyPresence, RunEvent } from "./types";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** One log line per run event, in stream order. Kept pure so the live view
 * can be compared 1:1 against the raw event stream. */
export function renderEventLine(event: RunEvent): string {
  switch (event.kind) {
    case "stage_started":
      return `▶ ${event.stage} started`;
    case "agent_turn":
      return `· ${event.text}`;
    case "exec_stdout":
      return `$ ${event.text.trimEnd()}`;
    case "warning":
      return `⚠ ${event.text}`;
    case "stage_done":
      return `✔ ${event.stage} done`;
    case "stage_failed":
      return `✘ ${event.stage} failed: ${event.text}`;
    case "run_interrupted":
      return `✘ interrupted: ${event.text}`;
  }
}

export function renderEventLog(events: RunEvent[]): string[] {
  return events.map(renderEventLine);
}

const INPUT_LABELS: Record<string, string> = { "paper.pdf": "compiled paper" };

export function renderTab(state: TabState): string {
  const inputs = [...state.present, ...state.missing]
    .map((name) => {
      const ok = state.present.includes(name);
      const label = INPUT_LABELS[name] ?? name;
      return `<li class="${ok ? "present" : "missing"}">${
        ok ? "✔" : "missing:"
      } ${escapeHtml(label)}</li>`;
    })
    .join("");
  return `
    <section class="tab" data-stage="${state.stage}">
      <h2>${state.stage}</h2>
      <ul class="inputs">${inputs}</ul>
      <div class="controls">
        <select class="mode"><option>fast</option><option>planned</option></select>
        <button class="run" ${state.runEnabled ? "" : "disabled"}>Run ${
          state.stage
        }</button>
      </div>
      <div class="artifact-preview" data-artifact="${
        state.latestArtifact ?? ""
      }"></div>
      <div class="override">
        <textarea class="own-text" placeholder="Paste your own ${
          state.stage
        } output"></textarea>
        <button class="upload-own">Use my version</button>
      </div>
      <pre class="log" hidden></pre>
    </section>`;
}

export function renderArtifactList(
  artifacts: ArtifactEntry[],
  urlFor: (path: string) => string,
): string {
  if (artifacts.length === 0) return "<p class='empty'>No artifacts yet.</p>";
  const rows = artifacts
    .map((a) => {
      const when = new Date(a.mtime * 1000).toISOString().replace("T", " ").slice(0, 19);
      return `<tr>
        <td><a href="${urlFor(a.path)}" download>${escapeHtml(a.path)}</a></td>
        <td class="num">${a.size}</td>
        <td>${when}</td>
      </tr>`;
    })
    .join("");
  return `<table class="artifacts"><thead>
    <tr><th>artifact</th><th>bytes</th><th>modified (UTC)</th></tr>
    </thead><tbody>${rows}</tbody></table>`;
}

export function renderPlotGallery(
  plots: string[],
  urlFor: (path: string) => string,
): string {
  if (plots.length === 0) return "";
  const cells = plots
    .map(
      (p) =>
        `<figure><img src="${urlFor(p)}" alt="${escapeHtml(p)}" loading="lazy">
         <figcaption>${escapeHtml(p.replace("Plots/", ""))}</figcaption></figure>`,
    )
    .join("");
  return `<div class="gallery">${cells}</div>`;
}

export function renderKeyPanel(keys: KeyPresence): string {
  const rows = Object.entries(keys)
    .map(
      ([provider, present]) =>
        `<li class="${present ? "key-ok" : "key-missing"}">${escapeHtml(
          provider,
        )}: ${present ? "configured" : "not set"}</li>`,
    )
    .join("");
  return `<ul class="keys">${rows}</ul>
    <p class="hint">Keys live in the service's environment
    (OPENAI_API_KEY, GOOGLE_API_KEY, ANTHROPIC_API_KEY); the browser never
    stores them.</p>`;
}

/** Minimal markdown preview: headings, bullets, paragraphs. */
export function renderMarkdown(text: string): string {
  const lines = text.split("\n");
  const out: string[] = [];
  let inList = false;
  for (const raw of lines) {
    const line = raw.trimEnd();
    const heading = /^(#{1,4})\s+(.*)$/.exec(line);
    if (heading) {
      if (inList) {
        out.push("</ul>");
        inList = false;
      }
      const level = heading[1].length;
      out.push(`<h${level}>${escapeHtml(heading[2])}</h${level}>`);
    } else if (line.startsWith("- ") || line.startsWith("* ")) {
      if (!inList) {
        out.push("<ul>");
        inList = true;
      }
      out.push(`<li>${escapeHtml(line.slice(2))}</li>`);
    } else if (line.trim() === "") {
      if (inList) {
        out.push("</ul>");
        inList = false;
      }
    } else {
      if (inList) {
        out.push("</ul>");
        inList = false;
      }
      out.push(`<p>${escapeHtml(line)}</p>`);
    }
  }
  if (inList) out.push("</ul>");
  return out.join("\n");
}
