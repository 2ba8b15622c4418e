"""Keyword stage: pick characterizing terms from a closed vocabulary.

Three vocabularies ship as data files: a three-level hierarchical science
nomenclature (domains -> subfields -> specific areas) walked in four chained
selections, and two flat lists (AI conference keywords, astronomy keywords)
handled in a single selection. Output is always verbatim vocabulary terms.
"""
from __future__ import annotations

import importlib.resources
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from . import prompts
from .errors import OffVocabulary
from .gateway import LlmGateway

KEYWORD_AGENT = "keywords"

MAX_DOMAINS = 3
MAX_SUBFIELDS = 3
AREAS_PER_SUBFIELD = 3


class VocabKind(Enum):
    UNESCO_HIERARCHICAL = "unesco"
    AAAI_FLAT = "aaai"
    AAS_FLAT = "aas"


@dataclass
class Vocabulary:
    kind: VocabKind
    entries: list[str]
    # domain -> subfield -> areas; only for the hierarchical kind
    tree: dict[str, dict[str, list[str]]] | None = None

    @property
    def all_terms(self) -> set[str]:
        if self.tree is None:
            return set(self.entries)
        terms: set[str] = set()
        for domain, subfields in self.tree.items():
            terms.add(domain)
            for subfield, areas in subfields.items():
                terms.add(subfield)
                terms.update(areas)
        return terms


_CODE_PREFIX = re.compile(r"^\d+\s+")


def _strip_code(line: str) -> str:
    return _CODE_PREFIX.sub("", line).strip()


def parse_flat(text: str, kind: VocabKind) -> Vocabulary:
    entries = [ln.strip() for ln in text.splitlines()
               if ln.strip() and not ln.lstrip().startswith("#")]
    return Vocabulary(kind=kind, entries=entries)


def parse_hierarchical(text: str) -> Vocabulary:
    """Three-level indented outline (2 spaces per level):
    domain / subfield / specific area."""
    tree: dict[str, dict[str, list[str]]] = {}
    domain = subfield = None
    for raw in text.expandtabs(2).splitlines():
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        indent = len(raw) - len(raw.lstrip(" "))
        level = min(indent // 2, 2)
        term = _strip_code(raw.strip())
        if level == 0:
            domain, subfield = term, None
            tree[domain] = {}
        elif level == 1:
            if domain is None:
                raise ValueError(f"subfield before any domain: {term!r}")
            subfield = term
            tree[domain][subfield] = []
        else:
            if domain is None or subfield is None:
                raise ValueError(f"area before any subfield: {term!r}")
            tree[domain][subfield].append(term)
    entries = sorted({t for d, subs in tree.items()
                      for t in [d, *subs, *(a for areas in subs.values()
                                            for a in areas)]})
    return Vocabulary(kind=VocabKind.UNESCO_HIERARCHICAL, entries=entries, tree=tree)


def load_vocabulary(path: str | Path, kind: VocabKind) -> Vocabulary:
    text = Path(path).read_text(encoding="utf-8")
    if kind is VocabKind.UNESCO_HIERARCHICAL:
        return parse_hierarchical(text)
    return parse_flat(text, kind)


def load_builtin(name: str) -> Vocabulary:
    kind = VocabKind(name)
    data = importlib.resources.files("labpipe.vocab").joinpath(f"{name}.txt")
    text = data.read_text(encoding="utf-8")
    if kind is VocabKind.UNESCO_HIERARCHICAL:
        return parse_hierarchical(text)
    return parse_flat(text, kind)


def _parse_picks(reply: str) -> list[str]:
    picks = []
    for line in reply.splitlines():
        term = line.strip().lstrip("-*").strip()
        if term:
            picks.append(term)
    return picks


def _select(gateway: LlmGateway, text: str, candidates: list[str],
            instruction: str, limit: int, fill: bool,
            model: str | None) -> list[str]:
    """One constrained selection call with a single off-vocabulary re-ask.

    Over-selection is truncated to the limit; with fill=True the result is
    completed from the candidate list (vocabulary order) up to the limit.
    """
    if not candidates:
        return []
    candidate_set = set(candidates)
    prompt = prompts.KEYWORD_SELECT.format(instruction=instruction, text=text,
                                           candidates="\n".join(candidates))
    reply = gateway.complete_text(agent=KEYWORD_AGENT, prompt=prompt, model=model)
    picks = _parse_picks(reply)
    bad = [t for t in picks if t not in candidate_set]
    if bad:
        reply = gateway.complete_text(
            agent=KEYWORD_AGENT,
            prompt=prompt + "\n\n" + prompts.KEYWORD_REASK.format(bad=", ".join(bad)),
            model=model)
        picks = _parse_picks(reply)
        bad = [t for t in picks if t not in candidate_set]
        if bad:
            raise OffVocabulary(bad[0])
    out: list[str] = []
    for term in picks:  # preserve agent order, drop duplicates
        if term not in out:
            out.append(term)
    out = out[:limit]
    if fill and len(out) < limit:
        for term in candidates:
            if term not in out:
                out.append(term)
            if len(out) >= limit:
                break
    return out


def select_keywords(text: str, vocab: Vocabulary, n: int, gateway: LlmGateway,
                    model: str | None = None) -> list[str]:
    """Pick n keywords from the vocabulary.

    Flat path: one selection. Hierarchical path: four chained phases --
    at most 3 domains, at most 3 subfields per domain, 3 specific areas per
    subfield (fewer when the subfield has fewer), then the n most relevant
    from the aggregate.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if vocab.tree is None:
        limit = min(n, len(vocab.entries))
        return _select(gateway, text, vocab.entries,
                       f"the {limit} most relevant terms", limit, fill=True,
                       model=model)

    domains = _select(gateway, text, list(vocab.tree),
                      f"at most {MAX_DOMAINS} domains", MAX_DOMAINS, fill=False,
                      model=model)
    aggregate: list[str] = list(domains)
    for domain in domains:
        subfields = _select(gateway, text, list(vocab.tree[domain]),
                            f"at most {MAX_SUBFIELDS} subfields of {domain!r}",
                            MAX_SUBFIELDS, fill=False, model=model)
        aggregate.extend(subfields)
        for subfield in subfields:
            areas_all = vocab.tree[domain][subfield]
            want = min(AREAS_PER_SUBFIELD, len(areas_all))
            areas = _select(gateway, text, areas_all,
                            f"{want} specific areas of {subfield!r}",
                            want, fill=True, model=model)
            aggregate.extend(areas)

    final_limit = min(n, len(aggregate))
    return _select(gateway, text, aggregate,
                   f"the {final_limit} most relevant keywords", final_limit,
                   fill=True, model=model)
