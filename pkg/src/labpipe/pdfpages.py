"""PDF page counting and page rasterization.

Counting is a small pure parser (page objects, /Count fallback), enough for
the PDFs the pipeline itself produces. Rasterization is a port: the command
renderer shells out to an external tool (pdftoppm-style template), the
builtin renderer draws one placeholder raster per page carrying the page
number and whatever text the parser can pull out of the content streams --
honest plumbing for machines without a real renderer, documented as such.
"""
from __future__ import annotations

import re
import subprocess
import tempfile
import zlib
from pathlib import Path
from typing import Protocol

from .errors import CorruptPdf

DEFAULT_DPI = 150

_PAGE_OBJ = re.compile(rb"/Type\s*/Page(?!s)")
_COUNT = re.compile(rb"/Count\s+(\d+)")
_STREAM = re.compile(rb"stream\r?\n(.*?)endstream", re.DOTALL)
_TEXT_SHOW = re.compile(rb"\((?:\\.|[^()\\])*\)\s*Tj")


def count_pages(pdf_bytes: bytes) -> int:
    """Number of pages in a PDF. Raises CorruptPdf for non-PDF input."""
    if not pdf_bytes or not pdf_bytes.lstrip()[:5].startswith(b"%PDF-"):
        raise CorruptPdf("not a PDF document")
    n = len(_PAGE_OBJ.findall(pdf_bytes))
    if n:
        return n
    counts = [int(m) for m in _COUNT.findall(pdf_bytes)]
    if counts:
        return max(counts)
    raise CorruptPdf("could not locate any page objects")


def _decode_stream(raw: bytes) -> bytes:
    """Undo the common stream encodings: Flate, ASCII85, ASCII85+Flate."""
    try:
        return zlib.decompress(raw)
    except zlib.error:
        pass
    import base64

    text = raw.strip()
    if text.endswith(b"~>"):
        try:
            decoded = base64.a85decode(text, adobe=True)
        except ValueError:
            return raw
        try:
            return zlib.decompress(decoded)
        except zlib.error:
            return decoded
    return raw


def _page_texts(pdf_bytes: bytes, n_pages: int) -> list[str]:
    """Best-effort text per content stream, padded/truncated to n_pages."""
    texts: list[str] = []
    for m in _STREAM.finditer(pdf_bytes):
        raw = _decode_stream(m.group(1))
        shows = _TEXT_SHOW.findall(raw)
        if not shows:
            continue
        fragments = [s[1:s.rfind(b")")].decode("latin-1", "replace")
                     for s in shows]
        texts.append(" ".join(fragments))
    texts = texts[:n_pages]
    texts += [""] * (n_pages - len(texts))
    return texts


class PdfRenderer(Protocol):
    def render(self, pdf_bytes: bytes, dpi: int = DEFAULT_DPI) -> list[bytes]: ...


class BuiltinRenderer:
    """Placeholder rasters: page number plus extracted text, one PNG per
    page in ascending order. Configure a command renderer for faithful
    page images."""

    def render(self, pdf_bytes: bytes, dpi: int = DEFAULT_DPI) -> list[bytes]:
        from io import BytesIO

        from PIL import Image, ImageDraw

        n = count_pages(pdf_bytes)
        texts = _page_texts(pdf_bytes, n)
        width, height = int(8.5 * dpi), int(11 * dpi)
        pages = []
        for i in range(n):
            img = Image.new("RGB", (width, height), "white")
            draw = ImageDraw.Draw(img)
            draw.text((dpi // 2, dpi // 2), f"Page {i + 1} of {n}", fill="black")
            y = dpi
            for chunk in _wrap(texts[i], 90):
                draw.text((dpi // 2, y), chunk, fill="black")
                y += 14
                if y > height - dpi // 2:
                    break
            buf = BytesIO()
            img.save(buf, format="PNG")
            pages.append(buf.getvalue())
        return pages


def _wrap(text: str, width: int) -> list[str]:
    words, lines, cur = text.split(), [], ""
    for w in words:
        if len(cur) + len(w) + 1 > width:
            lines.append(cur)
            cur = w
        else:
            cur = f"{cur} {w}".strip()
    if cur:
        lines.append(cur)
    return lines


class CommandRenderer:
    """External renderer command template, e.g.
    ("pdftoppm", "-png", "-r", "{dpi}", "{pdf}", "{prefix}").
    The command must write one image per page named {prefix}-<k>.<ext>."""

    def __init__(self, command: tuple[str, ...]):
        self.command = tuple(command)

    def render(self, pdf_bytes: bytes, dpi: int = DEFAULT_DPI) -> list[bytes]:
        count_pages(pdf_bytes)  # validity check first
        with tempfile.TemporaryDirectory() as tmp:
            pdf_path = Path(tmp) / "doc.pdf"
            pdf_path.write_bytes(pdf_bytes)
            prefix = Path(tmp) / "page"
            argv = [part.format(dpi=dpi, pdf=pdf_path, prefix=prefix)
                    for part in self.command]
            proc = subprocess.run(argv, capture_output=True, text=True)
            if proc.returncode != 0:
                raise CorruptPdf(f"renderer failed: {proc.stderr[:300]}")
            images = sorted(Path(tmp).glob("page*"), key=_page_sort_key)
            if not images:
                raise CorruptPdf("renderer produced no page images")
            return [p.read_bytes() for p in images]


def _page_sort_key(path: Path) -> tuple:
    m = re.search(r"(\d+)", path.stem)
    return (int(m.group(1)) if m else 0, path.name)


def render_pages(pdf_bytes: bytes, renderer: PdfRenderer | None = None,
                 dpi: int = DEFAULT_DPI) -> list[bytes]:
    """One raster per page, ascending page order."""
    renderer = renderer or BuiltinRenderer()
    return renderer.render(pdf_bytes, dpi=dpi)


class TextExtractOcr:
    """Best-effort OCR substitute: pulls text show operators out of the
    content streams. Real deployments plug a proper OCR model behind the
    same one-method port."""

    def to_markdown(self, pdf_bytes: bytes) -> str:
        n = count_pages(pdf_bytes)
        texts = _page_texts(pdf_bytes, n)
        return "\n\n".join(f"## Page {i + 1}\n\n{t}".rstrip()
                           for i, t in enumerate(texts))
