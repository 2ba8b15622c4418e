"""File-based project store.

One project = one directory with a fixed layout:

    input.md  idea.md  literature.md  methods.md  results.md  referee.md
    Plots/*  paper_v{1..4}.tex  paper_v{1..4}.pdf  paper.bib  transcript.jsonl

All textual artifacts are UTF-8 markdown. Writes are atomic (temp file +
rename) so a concurrent reader never observes a torn file.
"""
from __future__ import annotations

import os
import re
import tempfile
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

from .errors import FetchFailed
from .messages import AgentMessage

PAPER_VERSIONS = (1, 2, 3, 4)


class ArtifactKind(Enum):
    INPUT = "input"
    IDEA = "idea"
    LITERATURE = "literature"
    METHODS = "methods"
    RESULTS = "results"
    PLOT = "plot"
    PAPER_TEX = "paper_tex"
    PAPER_PDF = "paper_pdf"
    PAPER_BIB = "paper_bib"
    REFEREE = "referee"
    TRANSCRIPT = "transcript"


@dataclass(frozen=True)
class ArtifactRole:
    kind: ArtifactKind
    version: int | None = None

    def __post_init__(self):
        versioned = self.kind in (ArtifactKind.PAPER_TEX, ArtifactKind.PAPER_PDF)
        if versioned and self.version not in PAPER_VERSIONS:
            raise ValueError(f"{self.kind.value} requires version in {PAPER_VERSIONS}")
        if not versioned and self.version is not None:
            raise ValueError(f"{self.kind.value} takes no version")

    def __str__(self) -> str:
        if self.version is not None:
            return f"{self.kind.value}_v{self.version}"
        return self.kind.value


INPUT = ArtifactRole(ArtifactKind.INPUT)
IDEA = ArtifactRole(ArtifactKind.IDEA)
LITERATURE = ArtifactRole(ArtifactKind.LITERATURE)
METHODS = ArtifactRole(ArtifactKind.METHODS)
RESULTS = ArtifactRole(ArtifactKind.RESULTS)
PAPER_BIB = ArtifactRole(ArtifactKind.PAPER_BIB)
REFEREE = ArtifactRole(ArtifactKind.REFEREE)
TRANSCRIPT = ArtifactRole(ArtifactKind.TRANSCRIPT)


def paper_tex(version: int) -> ArtifactRole:
    return ArtifactRole(ArtifactKind.PAPER_TEX, version)


def paper_pdf(version: int) -> ArtifactRole:
    return ArtifactRole(ArtifactKind.PAPER_PDF, version)


_FLAT_FILENAMES = {
    ArtifactKind.INPUT: "input.md",
    ArtifactKind.IDEA: "idea.md",
    ArtifactKind.LITERATURE: "literature.md",
    ArtifactKind.METHODS: "methods.md",
    ArtifactKind.RESULTS: "results.md",
    ArtifactKind.PAPER_BIB: "paper.bib",
    ArtifactKind.REFEREE: "referee.md",
    ArtifactKind.TRANSCRIPT: "transcript.jsonl",
}

PLOTS_DIRNAME = "Plots"

_SAFE_PLOT_NAME = re.compile(r"^[\w.\-]+$")


def relative_path(role: ArtifactRole, filename: str | None = None) -> str:
    """Contract-relative path for a role. Plot roles need a filename."""
    if role.kind is ArtifactKind.PLOT:
        if not filename or not _SAFE_PLOT_NAME.match(filename):
            raise ValueError(f"plot artifacts need a plain filename, got {filename!r}")
        return f"{PLOTS_DIRNAME}/{filename}"
    if role.kind is ArtifactKind.PAPER_TEX:
        return f"paper_v{role.version}.tex"
    if role.kind is ArtifactKind.PAPER_PDF:
        return f"paper_v{role.version}.pdf"
    return _FLAT_FILENAMES[role.kind]


def role_for_path(rel: str) -> ArtifactRole | None:
    """Inverse of relative_path. None for paths outside the contract."""
    rel = rel.replace("\\", "/")
    for kind, name in _FLAT_FILENAMES.items():
        if rel == name:
            return ArtifactRole(kind)
    m = re.fullmatch(r"paper_v([1-4])\.(tex|pdf)", rel)
    if m:
        kind = ArtifactKind.PAPER_TEX if m.group(2) == "tex" else ArtifactKind.PAPER_PDF
        return ArtifactRole(kind, int(m.group(1)))
    m = re.fullmatch(rf"{PLOTS_DIRNAME}/([\w.\-]+)", rel)
    if m:
        return ArtifactRole(ArtifactKind.PLOT)
    return None


class Project:
    """Handle on a project directory. Create via init_project()."""

    def __init__(self, root: Path):
        self.root = Path(root)

    # -- paths ---------------------------------------------------------------

    def path_for(self, role: ArtifactRole, filename: str | None = None) -> Path:
        p = (self.root / relative_path(role, filename)).resolve()
        if not p.is_relative_to(self.root.resolve()):
            raise ValueError(f"artifact path escapes project root: {p}")
        return p

    @property
    def plots_dir(self) -> Path:
        return self.root / PLOTS_DIRNAME

    # -- artifact I/O ----------------------------------------------------------

    def write_artifact(self, role: ArtifactRole, data: bytes | str,
                       filename: str | None = None) -> Path:
        """Atomic write; returns the artifact path."""
        if isinstance(data, str):
            data = data.encode("utf-8")
        target = self.path_for(role, filename)
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=".tmp-", suffix=".part")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return target

    def read_artifact(self, role: ArtifactRole, filename: str | None = None) -> bytes:
        path = self.path_for(role, filename)
        if not path.exists():
            raise FileNotFoundError(f"artifact not found: {relative_path(role, filename)}")
        return path.read_bytes()

    def read_text(self, role: ArtifactRole, filename: str | None = None) -> str:
        return self.read_artifact(role, filename).decode("utf-8")

    def has_artifact(self, role: ArtifactRole, filename: str | None = None) -> bool:
        if role.kind is ArtifactKind.PLOT and filename is None:
            return bool(self.list_plots())
        return self.path_for(role, filename).exists()

    def list_plots(self) -> list[Path]:
        """Plot files in deterministic (lexicographic) order."""
        if not self.plots_dir.is_dir():
            return []
        return sorted(p for p in self.plots_dir.iterdir() if p.is_file())

    def list_artifacts(self) -> list[dict]:
        """Present artifacts with sizes and mtimes, contract paths only."""
        out = []
        candidates: list[str] = list(_FLAT_FILENAMES.values())
        candidates += [f"paper_v{v}.tex" for v in PAPER_VERSIONS]
        candidates += [f"paper_v{v}.pdf" for v in PAPER_VERSIONS]
        for rel in candidates:
            p = self.root / rel
            if p.exists():
                st = p.stat()
                out.append({"path": rel, "size": st.st_size, "mtime": st.st_mtime})
        for p in self.list_plots():
            st = p.stat()
            out.append({"path": f"{PLOTS_DIRNAME}/{p.name}", "size": st.st_size,
                        "mtime": st.st_mtime})
        return out

    # -- transcript --------------------------------------------------------------

    def append_transcript(self, message: AgentMessage) -> None:
        path = self.root / _FLAT_FILENAMES[ArtifactKind.TRANSCRIPT]
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(message.to_json() + "\n")

    def read_transcript(self) -> list[AgentMessage]:
        path = self.root / _FLAT_FILENAMES[ArtifactKind.TRANSCRIPT]
        if not path.exists():
            return []
        with open(path, encoding="utf-8") as fh:
            return [AgentMessage.from_json(line) for line in fh if line.strip()]


def init_project(root: str | Path) -> Project:
    """Create (or reopen) a project directory scaffold. Idempotent."""
    root = Path(root)
    if root.exists() and not root.is_dir():
        raise NotADirectoryError(f"{root} exists and is not a directory")
    root.mkdir(parents=True, exist_ok=True)
    (root / PLOTS_DIRNAME).mkdir(exist_ok=True)
    return Project(root)


# -- input enhancement ------------------------------------------------------------

ARXIV_URL_RE = re.compile(r"https?://(?:www\.)?arxiv\.org/(?:abs|pdf)/[\w.\-/]+")

SUMMARIZE_PROMPT = (
    "Summarize the following paper for use as background context in a research "
    "project. Keep the key methods, datasets and findings; stay under 300 words.\n\n"
    "{markdown}"
)


def find_arxiv_urls(text: str) -> list[str]:
    return ARXIV_URL_RE.findall(text)


def enhance_input(project: Project, input_text: str, ocr, gateway,
                  fetch: Callable[[str], bytes] | None = None,
                  summarizer_model: str = "o3-mini") -> tuple[str, list[str]]:
    """Expand arXiv links in the input text into appended paper summaries.

    For each URL: fetch the PDF, convert to markdown through the OCR port,
    summarize through the gateway, and append the summary after the original
    text (which is preserved verbatim as a prefix). A failing URL is skipped
    with a warning; it never aborts the run.

    Returns (enhanced_text, warnings).
    """
    urls = find_arxiv_urls(input_text)
    if not urls:
        return input_text, []
    if fetch is None:
        fetch = _default_fetch
    blocks: list[str] = []
    warnings: list[str] = []
    for url in urls:
        try:
            pdf = fetch(url)
        except Exception as exc:
            warnings.append(f"could not fetch {url}: {exc}")
            continue
        markdown = ocr.to_markdown(pdf)
        summary = gateway.complete_text(
            agent="summarizer",
            prompt=SUMMARIZE_PROMPT.format(markdown=markdown),
            model=summarizer_model,
        )
        blocks.append(f"\n\n## Summary of {url}\n\n{summary.strip()}\n")
    enhanced = input_text + "".join(blocks)
    return enhanced, warnings


def _default_fetch(url: str) -> bytes:
    import httpx

    # abs links serve HTML; rewrite to the pdf endpoint
    pdf_url = url.replace("/abs/", "/pdf/")
    try:
        resp = httpx.get(pdf_url, follow_redirects=True, timeout=60.0)
        resp.raise_for_status()
    except Exception as exc:  # transport + status errors
        raise FetchFailed(url, str(exc)) from exc
    return resp.content


def content_hash(data: bytes) -> str:
    import hashlib

    return hashlib.sha256(data).hexdigest()


def dedup_plots(paths: Iterable[Path]) -> list[Path]:
    """Drop byte-identical plot files, keeping first in lexicographic order."""
    seen: set[str] = set()
    unique: list[Path] = []
    for p in sorted(paths):
        digest = content_hash(Path(p).read_bytes())
        if digest not in seen:
            seen.add(digest)
            unique.append(Path(p))
    return unique


def utcnow() -> float:
    return time.time()
