"""LaTeX rendering and typesetting backends.

Journal templates are vendored files keyed by the Journal enum. Typesetting
is a port: the command backend invokes an external toolchain (pdflatex,
latexmk, tectonic...) in the project directory; the builtin backend renders
the source as paginated text through reportlab so pipelines still produce a
draft PDF on machines without TeX.
"""
from __future__ import annotations

import importlib.resources
import re
import subprocess
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol


class Journal(Enum):
    APS = "aps"
    GENERIC = "generic"


def load_template(journal: Journal) -> str:
    name = f"{journal.value}.tex"
    return importlib.resources.files("labpipe.templates").joinpath(name) \
        .read_text(encoding="utf-8")


def fill_template(template: str, title: str, abstract: str, keywords: str,
                  body: str, bibliography: str) -> str:
    return (template
            .replace("<<<TITLE>>>", title)
            .replace("<<<ABSTRACT>>>", abstract)
            .replace("<<<KEYWORDS>>>", keywords)
            .replace("<<<BODY>>>", body)
            .replace("<<<BIBLIOGRAPHY>>>", bibliography))


@dataclass
class CompileResult:
    ok: bool
    pdf_bytes: bytes | None
    log: str


class Typesetter(Protocol):
    def compile(self, tex_source: str, workdir: Path, jobname: str) -> CompileResult: ...


class CommandTypesetter:
    """External toolchain template, e.g.
    ("pdflatex", "-interaction=nonstopmode", "-jobname", "{jobname}", "{tex}").
    Runs in the project directory so relative figure paths resolve; expects
    {jobname}.pdf on success."""

    def __init__(self, command: tuple[str, ...], timeout: float = 180.0):
        self.command = tuple(command)
        self.timeout = timeout

    def compile(self, tex_source: str, workdir: Path, jobname: str) -> CompileResult:
        workdir = Path(workdir)
        tex_path = workdir / f"{jobname}.tex"
        tex_path.write_text(tex_source, encoding="utf-8")
        argv = [part.format(tex=tex_path.name, jobname=jobname)
                for part in self.command]
        try:
            proc = subprocess.run(argv, cwd=workdir, capture_output=True,
                                  text=True, timeout=self.timeout)
        except FileNotFoundError as exc:
            return CompileResult(False, None, f"toolchain not found: {exc}")
        except subprocess.TimeoutExpired:
            return CompileResult(False, None, "typesetting timed out")
        log = (proc.stdout or "") + (proc.stderr or "")
        pdf_path = workdir / f"{jobname}.pdf"
        if proc.returncode != 0 or not pdf_path.exists():
            return CompileResult(False, None, log)
        return CompileResult(True, pdf_path.read_bytes(), log)


_COMMENT = re.compile(r"(?<!\\)%.*$")
_PAGE_LINES = 54


class BuiltinTypesetter:
    """Draft renderer: paginates the LaTeX source as plain text into a real
    PDF. Good enough for checkpoints and review-page rasters; not a
    substitute for a TeX engine."""

    def compile(self, tex_source: str, workdir: Path, jobname: str) -> CompileResult:
        from io import BytesIO

        from reportlab.lib.pagesizes import letter
        from reportlab.pdfgen import canvas

        lines: list[str] = []
        for raw in tex_source.splitlines():
            stripped = _COMMENT.sub("", raw).rstrip()
            if stripped.strip() or (lines and lines[-1] != ""):
                # wrap long lines to keep the draft readable
                while len(stripped) > 95:
                    lines.append(stripped[:95])
                    stripped = "    " + stripped[95:]
                lines.append(stripped)

        buf = BytesIO()
        pdf = canvas.Canvas(buf, pagesize=letter)
        width, height = letter
        y = height - 54
        pdf.setFont("Courier", 9)
        for line in lines or [""]:
            pdf.drawString(40, y, line[:110])
            y -= 12
            if y < 54:
                pdf.showPage()
                pdf.setFont("Courier", 9)
                y = height - 54
        pdf.showPage()
        pdf.save()
        return CompileResult(True, buf.getvalue(), "builtin draft render")


def default_typesetter(prefer_command: bool = True) -> Typesetter:
    """Command toolchain when one is on PATH, builtin draft renderer else."""
    if prefer_command:
        from shutil import which

        if which("latexmk"):
            return CommandTypesetter(("latexmk", "-pdf", "-interaction=nonstopmode",
                                      "-jobname={jobname}", "{tex}"))
        if which("pdflatex"):
            return CommandTypesetter(("pdflatex", "-interaction=nonstopmode",
                                      "-jobname={jobname}", "{tex}"))
    return BuiltinTypesetter()
