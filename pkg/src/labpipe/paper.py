"""Paper stage: staged writer with four persisted checkpoints.

Order: preprocess -> keywords -> title/abstract -> sections (sequential,
each prompt carrying the previous ones) -> figure captions -> figure
insertion in batches of 7 -> v1 -> results polish -> v2 -> citations -> v3
-> final polish -> v4. Every version's LaTeX is persisted before work on the
next begins; a failed compile is recorded and never stops the pipeline,
because the checkpoints exist precisely for manual rescue.
"""
from __future__ import annotations

import base64
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from . import prompts, store
from .errors import (
    BadBibtex,
    CiteSearchDown,
    EmptySection,
    FigureDropped,
    MissingArtifact,
)
from .gateway import LlmGateway
from .keywords import Vocabulary, load_builtin, select_keywords
from .latex import CompileResult, Journal, Typesetter, fill_template, load_template
from .messages import ImagePart

SECTION_ORDER = ("Introduction", "Methods", "Results", "Conclusions")
FIGURE_BATCH_SIZE = 7
PAPER_AGENT = "paper"


@dataclass
class Figure:
    path: str  # project-relative, e.g. Plots/fig1.png
    caption: str = ""
    label: str = ""
    batch_index: int = 0


@dataclass
class BibEntry:
    arxiv_id: str
    bibtex: str
    cited_in: str = ""

    @property
    def key(self) -> str:
        return bibtex_key(self.bibtex)


@dataclass
class PaperDraft:
    title: str = ""
    abstract: str = ""
    keywords: list[str] = field(default_factory=list)
    sections: dict[str, str] = field(default_factory=dict)
    figures: list[Figure] = field(default_factory=list)
    bib: list[BibEntry] = field(default_factory=list)
    version: int = 0
    journal: Journal = Journal.GENERIC

    def bump(self, version: int) -> None:
        if version <= self.version:
            raise ValueError(f"version must increase, {self.version} -> {version}")
        self.version = version


class CiteSearchPort(Protocol):
    def cite(self, section_text: str) -> list[tuple[str, str | None]]:
        """(arxiv_id, matched sentence or None) pairs for the section."""
        ...


class BibFetchPort(Protocol):
    def fetch(self, arxiv_id: str) -> str: ...


class HttpBibFetch:
    """Resolve arXiv ids to BibTeX via the public export endpoint."""

    def __init__(self, base_url: str = "https://arxiv.org", client=None):
        import httpx

        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=30.0, follow_redirects=True)

    def fetch(self, arxiv_id: str) -> str:
        resp = self._client.get(f"{self.base_url}/bibtex/{arxiv_id}")
        if resp.status_code != 200:
            raise BadBibtex(arxiv_id)
        return resp.text


_BIB_KEY = re.compile(r"^\s*@\w+\s*\{\s*([^,\s{}]+)\s*,", re.DOTALL)


def bibtex_key(bibtex: str) -> str:
    m = _BIB_KEY.match(bibtex.strip())
    if not m:
        raise ValueError("no BibTeX key")
    return m.group(1)


def validate_bibtex(arxiv_id: str, bibtex: str) -> str:
    """Return the entry key; raise BadBibtex when the entry is malformed."""
    text = bibtex.strip()
    m = _BIB_KEY.match(text)
    if not m or text.count("{") != text.count("}"):
        raise BadBibtex(arxiv_id)
    return m.group(1)


_ARXIV_ID = re.compile(r"^(\d{4}\.\d{4,5}(v\d+)?|[a-z\-]+(\.[A-Z]{2})?/\d{7})$")


def well_formed_arxiv_id(arxiv_id: str) -> bool:
    return bool(_ARXIV_ID.match(arxiv_id))


# --- preprocess -------------------------------------------------------------------


@dataclass
class PaperInputs:
    input_text: str
    idea_text: str
    methods_text: str
    results_text: str

    @property
    def materials(self) -> str:
        return (f"Input description:\n{self.input_text}\n\n"
                f"Idea:\n{self.idea_text}\n\n"
                f"Methods:\n{self.methods_text}\n\n"
                f"Results:\n{self.results_text}")


def preprocess(project: store.Project) -> tuple[PaperInputs, list[Path], list[str]]:
    """Gather inputs, deduplicate plots by content hash, report counts."""
    missing = [store.relative_path(role) for role in
               (store.INPUT, store.IDEA, store.METHODS, store.RESULTS)
               if not project.has_artifact(role)]
    if missing:
        raise MissingArtifact(missing)
    inputs = PaperInputs(
        input_text=project.read_text(store.INPUT),
        idea_text=project.read_text(store.IDEA),
        methods_text=project.read_text(store.METHODS),
        results_text=project.read_text(store.RESULTS),
    )
    all_plots = project.list_plots()
    unique = store.dedup_plots(all_plots)
    warnings = []
    if len(unique) != len(all_plots):
        warnings.append(f"{len(all_plots) - len(unique)} duplicated plot(s) dropped")
    if not unique:
        warnings.append("no plots found; the paper will have an empty figure set")
    return inputs, unique, warnings


# --- title, abstract, sections ---------------------------------------------------------


_TITLE_RE = re.compile(r"^\s*TITLE:\s*(.+)$", re.MULTILINE)
_ABSTRACT_RE = re.compile(r"^\s*ABSTRACT:\s*(.+)$", re.MULTILINE | re.DOTALL)


def write_title_abstract(inputs: PaperInputs, gateway: LlmGateway,
                         model: str | None = None) -> tuple[str, str]:
    reply = gateway.complete_text(
        agent=PAPER_AGENT, model=model,
        prompt=prompts.TITLE_ABSTRACT.format(materials=inputs.materials))
    t, a = _TITLE_RE.search(reply), _ABSTRACT_RE.search(reply)
    title = t.group(1).strip() if t else reply.strip().splitlines()[0]
    abstract = a.group(1).strip() if a else reply.strip()
    return title, abstract


def write_sections(inputs: PaperInputs, gateway: LlmGateway,
                   reflect: set[str] = frozenset({"Results"}),
                   model: str | None = None) -> dict[str, str]:
    """Sections written sequentially; each prompt contains the earlier ones.
    Sections in `reflect` get a second self-reflection pass."""
    sections: dict[str, str] = {}
    for name in SECTION_ORDER:
        written = "\n\n".join(f"[{k}]\n{v}" for k, v in sections.items()) or "(none)"
        text = gateway.complete_text(
            agent=PAPER_AGENT, model=model,
            prompt=prompts.SECTION_PROMPT.format(section=name,
                                                 materials=inputs.materials,
                                                 written=written))
        if name in reflect:
            text = gateway.complete_text(
                agent=PAPER_AGENT, model=model,
                prompt=prompts.SECTION_REFLECT.format(section=name, text=text))
        if not text.strip():
            raise EmptySection(f"{name} section came back empty")
        sections[name] = text.strip()
    return sections


# --- figures ------------------------------------------------------------------------


def make_figures(unique_plots: list[Path], batch_size: int = FIGURE_BATCH_SIZE) -> list[Figure]:
    figures = []
    used: set[str] = set()
    for i, path in enumerate(unique_plots):
        label = f"fig:{re.sub(r'[^a-zA-Z0-9]+', '-', path.stem).strip('-').lower()}"
        base, n = label, 2
        while label in used:
            label = f"{base}-{n}"
            n += 1
        used.add(label)
        figures.append(Figure(path=f"{store.PLOTS_DIRNAME}/{path.name}",
                              label=label, batch_index=i // batch_size))
    return figures


def generate_captions(figures: list[Figure], inputs: PaperInputs,
                      project: store.Project, gateway: LlmGateway,
                      model: str | None = None) -> None:
    """Caption each figure; rasters are attached for bitmap formats."""
    for fig in figures:
        images = []
        suffix = Path(fig.path).suffix.lower()
        if suffix in {".png", ".jpg", ".jpeg"}:
            data = (project.root / fig.path).read_bytes()
            images.append(ImagePart(base64.b64encode(data).decode("ascii"),
                                    f"image/{'png' if suffix == '.png' else 'jpeg'}"))
        caption = gateway.complete_text(
            agent=PAPER_AGENT, model=model, images=images or None,
            prompt=prompts.CAPTION_PROMPT.format(filename=fig.path,
                                                 materials=inputs.materials))
        fig.caption = caption.strip() or f"Figure {fig.path}"


def batch_figures(figures: list[Figure],
                  batch_size: int = FIGURE_BATCH_SIZE) -> list[list[Figure]]:
    """Consecutive batches of batch_size, remainder last."""
    return [figures[i:i + batch_size] for i in range(0, len(figures), batch_size)]


def _figures_block(figs: list[Figure]) -> str:
    return "\n".join(f"- path: {f.path}; label: {f.label}; caption: {f.caption}"
                     for f in figs)


def insert_figures(results_text: str, figures: list[Figure], gateway: LlmGateway,
                   batch_size: int = FIGURE_BATCH_SIZE,
                   model: str | None = None) -> str:
    """Weave every figure into the Results text, batch by batch.

    After each batch the text must contain each figure's label exactly once;
    a dropped figure gets one re-ask for that batch, then FigureDropped.
    """
    text = results_text
    for batch in batch_figures(figures, batch_size):
        block = _figures_block(batch)
        reply = gateway.complete_text(
            agent=PAPER_AGENT, model=model,
            prompt=prompts.FIGURE_INSERT.format(figures=block, results=text))
        missing = [f.label for f in batch if f.label not in reply]
        if missing:
            reply = gateway.complete_text(
                agent=PAPER_AGENT, model=model,
                prompt=prompts.FIGURE_REINSERT.format(
                    missing=", ".join(missing), figures=block, results=text))
            missing = [f.label for f in batch if f.label not in reply]
            if missing:
                raise FigureDropped(missing[0])
        text = reply
    return text


# --- citations -----------------------------------------------------------------------


_SENTENCE_END = re.compile(r"(?<=[.!?])\s")


def _append_marker(text: str, sentence: str | None, marker: str) -> str:
    if sentence:
        idx = text.find(sentence.strip())
        if idx >= 0:
            end = idx + len(sentence.strip())
            return text[:end] + f" {marker}" + text[end:]
    return text.rstrip() + f" {marker}\n"


def add_citations(draft: PaperDraft, cite_port: CiteSearchPort,
                  bib_fetch: BibFetchPort) -> list[str]:
    """Run every section through the citation search; resolve ids to BibTeX.

    Returns warnings. A search outage skips citations (they are optional);
    a malformed BibTeX entry is dropped with a warning.
    """
    warnings: list[str] = []
    known_ids = {e.arxiv_id for e in draft.bib}
    for name in SECTION_ORDER:
        text = draft.sections.get(name, "")
        if not text:
            continue
        try:
            results = cite_port.cite(text)
        except CiteSearchDown as exc:
            warnings.append(f"citation search unavailable for {name}: {exc}")
            continue
        for arxiv_id, sentence in results:
            if not well_formed_arxiv_id(arxiv_id):
                warnings.append(f"ill-formed arXiv id dropped: {arxiv_id}")
                continue
            if arxiv_id in known_ids:
                key = next(e.key for e in draft.bib if e.arxiv_id == arxiv_id)
            else:
                try:
                    bibtex = bib_fetch.fetch(arxiv_id)
                    key = validate_bibtex(arxiv_id, bibtex)
                except BadBibtex:
                    warnings.append(f"bad BibTeX for {arxiv_id}, entry dropped")
                    continue
                draft.bib.append(BibEntry(arxiv_id=arxiv_id, bibtex=bibtex,
                                          cited_in=name))
                known_ids.add(arxiv_id)
            text = _append_marker(text, sentence, f"\\cite{{{key}}}")
        draft.sections[name] = text
    return warnings


# --- rendering + checkpoints ------------------------------------------------------------


def render_tex(draft: PaperDraft) -> str:
    body = "\n\n".join(f"\\section{{{name}}}\n{draft.sections.get(name, '')}"
                       for name in SECTION_ORDER)
    if draft.bib:
        bibliography = ("\\bibliographystyle{unsrt}\n"
                        "\\bibliography{paper}")
    else:
        bibliography = ""
    return fill_template(load_template(draft.journal),
                         title=draft.title or "Untitled",
                         abstract=draft.abstract or "",
                         keywords=", ".join(draft.keywords) or "none",
                         body=body, bibliography=bibliography)


def compile_checkpoint(project: store.Project, draft: PaperDraft, version: int,
                       typesetter: Typesetter, gateway: LlmGateway | None = None,
                       model: str | None = None) -> tuple[Path | None, str | None]:
    """Persist paper_v{version}.tex, then try to compile it.

    On failure one fixer round runs (when a gateway is given): the agent gets
    the log and the source, the fixed source is re-persisted and recompiled.
    Returns (pdf path or None, failure log or None). Never raises for a
    compile failure; the checkpoint .tex exists either way.
    """
    draft.bump(version)
    source = render_tex(draft)
    tex_path = project.write_artifact(store.paper_tex(version), source)
    if draft.bib:
        project.write_artifact(store.PAPER_BIB,
                               "\n\n".join(e.bibtex for e in draft.bib))

    result = typesetter.compile(source, project.root, f"paper_v{version}")
    if not result.ok and gateway is not None:
        fixed = gateway.complete_text(
            agent=PAPER_AGENT, model=model,
            prompt=prompts.LATEX_FIX.format(log=result.log[-3000:], source=source))
        if fixed.strip():
            source = fixed
            tex_path = project.write_artifact(store.paper_tex(version), source)
            result = typesetter.compile(source, project.root, f"paper_v{version}")

    if result.ok and result.pdf_bytes:
        project.write_artifact(store.paper_pdf(version), result.pdf_bytes)
        return project.path_for(store.paper_pdf(version)), None
    return None, result.log or "compile failed"


# --- full stage ----------------------------------------------------------------------


@dataclass
class PaperOptions:
    journal: Journal = Journal.GENERIC
    citations: bool = False
    vocab: str = "unesco"
    n_keywords: int = 5
    reflect: set[str] = field(default_factory=lambda: {"Results"})
    batch_size: int = FIGURE_BATCH_SIZE
    model: str | None = None


@dataclass
class PaperOutcome:
    draft: PaperDraft
    compile_failures: dict[int, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def write_paper(project: store.Project, gateway: LlmGateway,
                typesetter: Typesetter,
                options: PaperOptions | None = None,
                cite_port: CiteSearchPort | None = None,
                bib_fetch: BibFetchPort | None = None,
                vocabulary: Vocabulary | None = None) -> PaperOutcome:
    """Run the full staged writer, producing checkpoints v1..v4."""
    options = options or PaperOptions()
    inputs, unique_plots, warnings = preprocess(project)
    draft = PaperDraft(journal=options.journal)
    outcome = PaperOutcome(draft=draft, warnings=warnings)

    vocab = vocabulary or load_builtin(options.vocab)
    draft.keywords = select_keywords(
        f"{inputs.idea_text}\n\n{inputs.methods_text}", vocab,
        options.n_keywords, gateway, model=options.model)

    draft.title, draft.abstract = write_title_abstract(inputs, gateway,
                                                       model=options.model)
    draft.sections = write_sections(inputs, gateway, reflect=options.reflect,
                                    model=options.model)

    draft.figures = make_figures(unique_plots, options.batch_size)
    generate_captions(draft.figures, inputs, project, gateway,
                      model=options.model)
    draft.sections["Results"] = insert_figures(
        draft.sections["Results"], draft.figures, gateway,
        batch_size=options.batch_size, model=options.model)

    def checkpoint(version: int) -> None:
        _pdf, failure = compile_checkpoint(project, draft, version, typesetter,
                                           gateway, model=options.model)
        if failure:
            outcome.compile_failures[version] = failure

    checkpoint(1)

    polished = gateway.complete_text(
        agent=PAPER_AGENT, model=options.model,
        prompt=prompts.RESULTS_POLISH.format(text=draft.sections["Results"]))
    if all(f.label in polished for f in draft.figures):
        draft.sections["Results"] = polished
    else:
        outcome.warnings.append("results polish dropped figures; kept previous text")
    checkpoint(2)

    if options.citations and cite_port is not None and bib_fetch is not None:
        outcome.warnings.extend(add_citations(draft, cite_port, bib_fetch))
    checkpoint(3)

    for name in SECTION_ORDER:
        revised = gateway.complete_text(
            agent=PAPER_AGENT, model=options.model,
            prompt=prompts.FINAL_POLISH.format(section=name,
                                               text=draft.sections[name]))
        if not revised.strip():
            continue
        if name == "Results" and not all(f.label in revised for f in draft.figures):
            outcome.warnings.append("final polish dropped figures; kept previous text")
            continue
        draft.sections[name] = revised
    checkpoint(4)

    return outcome
