"""Review stage: referee a paper PDF with a multimodal model.

The PDF becomes one raster per page (ascending order); a single request
carries the reviewer prompt plus every page image. The reply must contain a
delimited REVIEW block with a 0..9 score; an out-of-range or missing score is
reported as absent, never invented. referee.md is for humans; nothing
downstream consumes it.
"""
from __future__ import annotations

import base64
import re
from dataclasses import dataclass

from . import prompts, store
from .errors import MissingArtifact, MissingReviewBlock
from .gateway import ChatRequest, LlmGateway, resolve_model, STAGE_DEFAULT_MODELS
from .messages import AgentMessage, ImagePart, TextPart
from .pdfpages import DEFAULT_DPI, PdfRenderer, render_pages

REVIEWER = "reviewer"

_BLOCK_RE = re.compile(r"\\begin\{REVIEW\}(.*?)\\end\{REVIEW\}", re.DOTALL)
_SCORE_PATTERNS = (
    re.compile(r"Score[:\s]+(-?\d+)\s*(?:/\s*9)?", re.IGNORECASE),
    re.compile(r"(-?\d+)\s*/\s*9"),
    re.compile(r"(-?\d+)\s*$"),
)


@dataclass
class RefereeReport:
    review_text: str
    score: int | None
    page_count: int
    warnings: list[str]


def extract_review_block(reply: str) -> str:
    m = _BLOCK_RE.search(reply)
    if not m:
        raise MissingReviewBlock("no REVIEW block in reply")
    return m.group(1).strip()


def extract_score(review_text: str) -> tuple[int | None, list[str]]:
    """Score in [0, 9] or None; out-of-range values are reported, not fixed."""
    for pattern in _SCORE_PATTERNS:
        m = pattern.search(review_text)
        if m:
            value = int(m.group(1))
            if 0 <= value <= 9:
                return value, []
            return None, [f"score {value} outside [0, 9]; treated as absent"]
    return None, ["no score found in review"]


def parse_referee_reply(reply: str, page_count: int) -> RefereeReport:
    review = extract_review_block(reply)
    score, warnings = extract_score(review)
    return RefereeReport(review_text=review, score=score,
                         page_count=page_count, warnings=warnings)


# Very long papers are split across several requests; the continuation turns
# carry the remaining pages and only the last one asks for the REVIEW block.
MAX_PAGES_PER_REQUEST = 100

CONTINUATION_NOTE = ("The paper has {total} pages; this message carries pages "
                     "{first}-{last}. {tail}")
HOLD_REPLY = "More pages follow. Reply only: WAITING."


def _image_parts(page_images: list[bytes]) -> list[ImagePart]:
    return [ImagePart(base64.b64encode(img).decode("ascii"), "image/png")
            for img in page_images]


def build_review_request(page_images: list[bytes], input_text: str | None,
                         model_name: str,
                         history: list[AgentMessage] | None = None,
                         note: str | None = None) -> ChatRequest:
    parts: list = []
    if history is None:
        parts.append(TextPart(prompts.REVIEWER_PROMPT))
        if input_text:
            parts.append(TextPart(f"Original input description:\n{input_text}"))
    if note:
        parts.append(TextPart(note))
    parts.extend(_image_parts(page_images))
    message = AgentMessage(agent=REVIEWER, role="user", parts=parts)
    return ChatRequest(model=resolve_model(model_name).model,
                       messages=(history or []) + [message], agent=REVIEWER)


def review(pdf_bytes: bytes, gateway: LlmGateway,
           input_text: str | None = None,
           renderer: PdfRenderer | None = None,
           dpi: int = DEFAULT_DPI,
           model: str | None = None,
           max_pages_per_request: int = MAX_PAGES_PER_REQUEST) -> RefereeReport:
    """Render, request, parse. One re-ask when the REVIEW block is missing.

    Papers longer than max_pages_per_request are streamed across several
    requests; only the final one elicits the REVIEW block.
    """
    pages = render_pages(pdf_bytes, renderer=renderer, dpi=dpi)
    model_name = model or STAGE_DEFAULT_MODELS[  # critique-class default
        "review"]

    chunks = [pages[i:i + max_pages_per_request]
              for i in range(0, len(pages), max_pages_per_request)] or [[]]
    history: list[AgentMessage] | None = None
    first = 1
    for chunk in chunks[:-1]:
        note = CONTINUATION_NOTE.format(total=len(pages), first=first,
                                        last=first + len(chunk) - 1,
                                        tail=HOLD_REPLY)
        request = build_review_request(chunk, input_text, model_name,
                                       history=history, note=note)
        reply = gateway.complete_multimodal(request).text
        history = request.messages + [
            AgentMessage.text(REVIEWER, "assistant", reply)]
        first += len(chunk)

    final_chunk = chunks[-1]
    note = None
    if len(chunks) > 1:
        note = CONTINUATION_NOTE.format(
            total=len(pages), first=first, last=len(pages),
            tail="These are the final pages; write your review now.")
    request = build_review_request(final_chunk, input_text, model_name,
                                   history=history, note=note)
    reply = gateway.complete_multimodal(request).text
    try:
        return parse_referee_reply(reply, page_count=len(pages))
    except MissingReviewBlock:
        retry = ChatRequest(
            model=request.model,
            messages=request.messages + [
                AgentMessage.text(REVIEWER, "assistant", reply),
                AgentMessage.text(REVIEWER, "user", prompts.REVIEW_REASK.format()),
            ],
            agent=REVIEWER)
        reply = gateway.complete_multimodal(retry).text
        return parse_referee_reply(reply, page_count=len(pages))


def run_review_stage(project: store.Project, gateway: LlmGateway,
                     renderer: PdfRenderer | None = None,
                     dpi: int = DEFAULT_DPI,
                     model: str | None = None) -> RefereeReport:
    """Review the newest paper PDF; writes referee.md."""
    pdf_path = latest_paper_pdf(project)
    if pdf_path is None:
        raise MissingArtifact(["paper_v*.pdf"])
    input_text = None
    if project.has_artifact(store.INPUT):
        input_text = project.read_text(store.INPUT)
    report = review(pdf_path.read_bytes(), gateway, input_text=input_text,
                    renderer=renderer, dpi=dpi, model=model)
    body = report.review_text
    score_line = f"\n\nScore: {report.score}/9" if report.score is not None else \
        "\n\nScore: not provided"
    project.write_artifact(store.REFEREE, f"# Referee report\n\n{body}{score_line}\n")
    return report


def latest_paper_pdf(project: store.Project):
    for version in sorted(store.PAPER_VERSIONS, reverse=True):
        path = project.path_for(store.paper_pdf(version))
        if path.exists():
            return path
    return None
