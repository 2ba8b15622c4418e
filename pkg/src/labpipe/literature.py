"""Literature stage: tri-state novelty loop over a scholarly search port.

The novelty agent sees the idea plus every paper found so far and answers
new / not new / query. Queries go to the search port and results accumulate
(deduplicated); a verdict hands everything to the summary agent, which writes
literature.md. Hitting the iteration cap forces the verdict to "new". The
report is for humans only; no downstream stage reads it.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

from . import prompts, store
from .errors import MalformedVerdict, SearchPortDown
from .gateway import LlmGateway
from .planning import Session

DEFAULT_MAX_ITERS = 10
DEFAULT_PAGE_SIZE = 5

NOVELTY = "novelty"
SUMMARY = "summary"
SEARCHER = "scholar_search"


class Verdict(Enum):
    NEW = "new"
    NOT_NEW = "not new"
    QUERY = "query"


@dataclass(frozen=True)
class NoveltyVerdict:
    verdict: Verdict
    query: str | None = None
    reason: str = ""


@dataclass(frozen=True)
class FoundPaper:
    title: str
    abstract: str
    url: str
    source_query: str = ""

    @property
    def key(self) -> tuple[str, str]:
        return (self.title, self.url)


class SearchPort(Protocol):
    def search(self, query: str) -> list[FoundPaper]: ...


class ScriptedSearchPort:
    """Canned results; a query missing from the script returns nothing."""

    def __init__(self, results: dict[str, list[FoundPaper]] | None = None,
                 default: list[FoundPaper] | None = None,
                 down: bool = False):
        self.results = results or {}
        self.default = default or []
        self.down = down
        self.queries: list[str] = []

    def search(self, query: str) -> list[FoundPaper]:
        if not query.strip():
            raise ValueError("query must be non-empty")
        if self.down:
            raise SearchPortDown("scripted port configured as unavailable")
        self.queries.append(query)
        return list(self.results.get(query, self.default))


class HttpSearchPort:
    """Client for the public scholarly-search HTTP contract: query in, JSON
    with title/abstract/url per paper out. Respects Retry-After on 429."""

    def __init__(self, base_url: str = "https://api.semanticscholar.org",
                 page_size: int = DEFAULT_PAGE_SIZE, client=None,
                 max_retries: int = 2, sleep=None):
        import httpx
        import time as _time

        self.base_url = base_url.rstrip("/")
        self.page_size = page_size
        self._client = client or httpx.Client(timeout=30.0)
        self.max_retries = max_retries
        self._sleep = sleep or _time.sleep

    def search(self, query: str) -> list[FoundPaper]:
        import httpx

        if not query.strip():
            raise ValueError("query must be non-empty")
        url = f"{self.base_url}/graph/v1/paper/search"
        params = {"query": query, "limit": self.page_size,
                  "fields": "title,abstract,url"}
        attempts = 0
        while True:
            attempts += 1
            try:
                resp = self._client.get(url, params=params)
            except httpx.HTTPError as exc:
                raise SearchPortDown(f"search transport failure: {exc}") from exc
            if resp.status_code == 429 and attempts <= self.max_retries:
                delay = float(resp.headers.get("Retry-After", "1"))
                self._sleep(delay)
                continue
            if resp.status_code >= 400:
                raise SearchPortDown(f"search returned {resp.status_code}")
            data = resp.json()
            return [
                FoundPaper(title=p.get("title") or "",
                           abstract=p.get("abstract") or "",
                           url=p.get("url") or "",
                           source_query=query)
                for p in data.get("data", []) or []
            ]


class StubDeepSearchPort:
    """Placeholder for an external deep-search backend behind the same port.

    Interchangeable with the scholarly client; returns nothing until pointed
    at a real service.
    """

    def __init__(self, endpoint: str | None = None):
        self.endpoint = endpoint

    def search(self, query: str) -> list[FoundPaper]:
        if not query.strip():
            raise ValueError("query must be non-empty")
        if self.endpoint is None:
            return []
        raise SearchPortDown("deep-search backend not configured")


_DECISION_RE = re.compile(r"^\s*DECISION:\s*(new|not\s+new|query)\s*$",
                          re.IGNORECASE | re.MULTILINE)
_QUERY_RE = re.compile(r"^\s*QUERY:\s*(.+)$", re.IGNORECASE | re.MULTILINE)
_REASON_RE = re.compile(r"^\s*REASON:\s*(.+)$", re.IGNORECASE | re.MULTILINE)


def parse_verdict(text: str) -> NoveltyVerdict:
    m = _DECISION_RE.search(text)
    if not m:
        raise MalformedVerdict(f"no DECISION line in: {text[:120]!r}")
    word = re.sub(r"\s+", " ", m.group(1).lower())
    if word == "query":
        q = _QUERY_RE.search(text)
        if not q or not q.group(1).strip():
            raise MalformedVerdict("DECISION is query but no QUERY line")
        verdict, query = Verdict.QUERY, q.group(1).strip()
    else:
        verdict = Verdict.NEW if word == "new" else Verdict.NOT_NEW
        query = None
    reason = _REASON_RE.search(text)
    return NoveltyVerdict(verdict, query, reason.group(1).strip() if reason else "")


def _papers_block(papers: list[FoundPaper]) -> str:
    if not papers:
        return "(none yet)"
    return "\n".join(f"- {p.title} ({p.url})\n  {p.abstract[:400]}" for p in papers)


def check_novelty(input_text: str, idea_text: str, search: SearchPort,
                  gateway: LlmGateway, max_iters: int = DEFAULT_MAX_ITERS,
                  session: Session | None = None,
                  model: str | None = None) -> tuple[Verdict, str, dict]:
    """Run the novelty loop; returns (verdict, report, stats).

    stats carries queries, papers, warnings and whether the verdict was
    forced by the iteration cap. A search outage never flips the verdict: the
    iteration is counted, a warning recorded, and the loop continues.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    session = session or Session(n_rounds=10**6)

    papers: list[FoundPaper] = []
    seen: set[tuple[str, str]] = set()
    queries: list[str] = []
    warnings: list[str] = []
    reasons: list[str] = []
    verdict: Verdict | None = None
    forced = False

    for _ in range(max_iters):
        prompt = prompts.NOVELTY_TURN.format(
            input=input_text, idea=idea_text, count=len(papers),
            papers=_papers_block(papers))
        reply = gateway.complete_text(agent=NOVELTY, prompt=prompt,
                                      system=prompts.NOVELTY_SYSTEM, model=model)
        session.say(NOVELTY, reply)
        try:
            parsed = parse_verdict(reply)
        except MalformedVerdict:
            reply = gateway.complete_text(
                agent=NOVELTY, prompt=prompt + "\n\n" + prompts.NOVELTY_REASK,
                system=prompts.NOVELTY_SYSTEM, model=model)
            session.say(NOVELTY, reply)
            parsed = parse_verdict(reply)  # second failure raises
        if parsed.reason:
            reasons.append(parsed.reason)
        if parsed.verdict is not Verdict.QUERY:
            verdict = parsed.verdict
            break
        queries.append(parsed.query)
        try:
            results = search.search(parsed.query)
        except SearchPortDown as exc:
            warnings.append(f"search unavailable for {parsed.query!r}: {exc}")
            session.say(SEARCHER, f"search unavailable: {exc}", role="system")
            continue
        fresh = [p for p in results if p.key not in seen]
        for p in fresh:
            seen.add(p.key)
        papers.extend(fresh)
        session.say(SEARCHER,
                    f"{len(results)} result(s) for {parsed.query!r}, "
                    f"{len(fresh)} new", role="system")

    if verdict is None:
        # Cap reached with no relevant decision: the idea counts as new.
        verdict = Verdict.NEW
        forced = True

    report = gateway.complete_text(
        agent=SUMMARY,
        prompt=prompts.LITERATURE_SUMMARY.format(
            verdict=verdict.value, idea=idea_text,
            queries="\n".join(f"- {q}" for q in queries) or "(none)",
            papers=_papers_block(papers),
            reason="\n".join(reasons) or "(none)"),
        model=model)
    session.say(SUMMARY, report)

    stats = {"queries": queries, "papers": papers, "warnings": warnings,
             "forced_new": forced, "search_calls": len(queries) - len(warnings)}
    return verdict, report, stats


def run_literature_stage(project: store.Project, gateway: LlmGateway,
                         search: SearchPort, session: Session | None = None,
                         max_iters: int = DEFAULT_MAX_ITERS,
                         model: str | None = None) -> tuple[Verdict, str]:
    input_text = project.read_text(store.INPUT)
    idea_text = project.read_text(store.IDEA)
    verdict, report, _stats = check_novelty(
        input_text, idea_text, search, gateway,
        max_iters=max_iters, session=session, model=model)
    project.write_artifact(store.LITERATURE, report)
    return verdict, report
