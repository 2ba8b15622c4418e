"""Pipeline facade: one verb per stage plus end-to-end run.

Enforces the stage dependency contract (which artifacts each stage needs and
produces), persists a run manifest, and streams run events for the service
layer. Stage order: idea -> literature -> methods -> analysis -> paper ->
review; the literature verdict never gates later stages.
"""
from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable

from . import analysis, idea, literature, methods, paper, review, store
from .errors import MissingArtifact, StageFailed
from .gateway import LlmGateway, Usage
from .latex import Journal, Typesetter, default_typesetter
from .literature import SearchPort, StubDeepSearchPort
from .paper import BibFetchPort, CiteSearchPort, PaperOptions
from .pdfpages import PdfRenderer
from .planning import OrchestratorConfig, Session
from .sandbox import SandboxPolicy

STAGES = ("idea", "literature", "methods", "analysis", "paper", "review")

# Dependency contract: required input artifacts per stage.
STAGE_INPUTS: dict[str, list[store.ArtifactRole]] = {
    "idea": [store.INPUT],
    "literature": [store.INPUT, store.IDEA],
    "methods": [store.INPUT, store.IDEA],
    "analysis": [store.INPUT, store.IDEA, store.METHODS],
    "paper": [store.INPUT, store.IDEA, store.METHODS, store.RESULTS],
    "review": [],  # needs a compiled paper pdf, checked separately
}

MANIFEST_FILENAME = "run_manifest.json"


@dataclass
class RunEvent:
    kind: str  # stage_started | agent_turn | exec_stdout | warning |
    #           stage_done | stage_failed
    text: str
    stage: str = ""
    seq: int = 0
    timestamp: float = field(default_factory=time.time)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "text": self.text, "stage": self.stage,
                "seq": self.seq, "timestamp": self.timestamp}


@dataclass
class Ports:
    """Every external dependency a run may need, injectable for tests."""

    gateway: LlmGateway
    search: SearchPort = field(default_factory=StubDeepSearchPort)
    cite: CiteSearchPort | None = None
    bib: BibFetchPort | None = None
    typesetter: Typesetter | None = None
    renderer: PdfRenderer | None = None
    ocr: object | None = None

    def resolved_typesetter(self) -> Typesetter:
        return self.typesetter or default_typesetter()


@dataclass
class RunOptions:
    mode: str = "fast"  # fast | planned, for idea and methods
    model: str | None = None
    journal: Journal = Journal.GENERIC
    citations: bool = False
    n_rounds: int = 500
    n_fails: int = 3
    max_literature_iters: int = literature.DEFAULT_MAX_ITERS
    vocab: str = "unesco"
    n_keywords: int = 5
    sandbox_time_limit: float = 120.0

    def orchestrator_config(self, agents: frozenset[str],
                            n_steps: int = 8) -> OrchestratorConfig:
        return OrchestratorConfig(involved_agents=agents, n_steps=n_steps,
                                  n_fails=self.n_fails, n_rounds=self.n_rounds,
                                  planner_model=self.model)


def check_inputs(project: store.Project, stage: str) -> None:
    """Raise MissingArtifact listing every absent required input."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage: {stage}")
    missing = [store.relative_path(role) for role in STAGE_INPUTS[stage]
               if not project.has_artifact(role)]
    if stage == "review" and review.latest_paper_pdf(project) is None:
        missing.append("paper_v*.pdf")
    if missing:
        raise MissingArtifact(missing)


def _read_manifest(project: store.Project) -> dict:
    path = project.root / MANIFEST_FILENAME
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    return {"runs": []}


def _append_manifest(project: store.Project, entry: dict) -> None:
    manifest = _read_manifest(project)
    manifest["runs"].append(entry)
    path = project.root / MANIFEST_FILENAME
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")


def read_manifest(project: store.Project) -> dict:
    return _read_manifest(project)


def run_stage(project: store.Project, stage: str, ports: Ports,
              options: RunOptions | None = None,
              events: Callable[[RunEvent], None] | None = None) -> dict:
    """Run one stage; returns its manifest entry.

    Dependencies are checked first; stage errors are re-raised as StageFailed
    tagged with the stage name, after the failure is recorded.
    """
    options = options or RunOptions()
    check_inputs(project, stage)

    seq = 0

    def emit(kind: str, text: str) -> None:
        nonlocal seq
        if events:
            events(RunEvent(kind=kind, text=text, stage=stage, seq=seq))
        seq += 1

    session = Session(n_rounds=options.n_rounds, sinks=[
        project.append_transcript,
        lambda m: emit("agent_turn", f"{m.agent}: {m.text_content[:400]}"),
    ])

    entry = {"run_id": uuid.uuid4().hex, "stage": stage, "mode": options.mode,
             "status": "running", "started": time.time()}
    usage_before: Usage = Usage() + ports.gateway.usage_total
    emit("stage_started", stage)
    try:
        _dispatch(project, stage, ports, options, session, emit)
    except Exception as exc:
        entry.update(status="failed", error=str(exc), finished=time.time())
        _finish_entry(entry, ports, usage_before)
        _append_manifest(project, entry)
        emit("stage_failed", f"{stage}: {exc}")
        raise StageFailed(stage, exc) from exc
    entry.update(status="done", finished=time.time())
    _finish_entry(entry, ports, usage_before)
    _append_manifest(project, entry)
    emit("stage_done", stage)
    return entry


def _finish_entry(entry: dict, ports: Ports, before: Usage) -> None:
    total = ports.gateway.usage_total
    entry["duration_s"] = round(entry["finished"] - entry["started"], 6)
    entry["tokens"] = {"prompt": total.prompt_tokens - before.prompt_tokens,
                       "completion": total.completion_tokens - before.completion_tokens}


def _session_checkpoint(project: store.Project) -> Callable:
    """Persist a plan/context snapshot after every control-loop step."""
    from .planning import state_snapshot

    path = project.root / "session_state.json"

    def write(state) -> None:
        path.write_text(json.dumps(state_snapshot(state), indent=2),
                        encoding="utf-8")

    return write


def _dispatch(project: store.Project, stage: str, ports: Ports,
              options: RunOptions, session: Session,
              emit: Callable[[str, str], None]) -> None:
    if stage == "idea":
        if options.mode == "planned":
            kwargs = {"cfg": options.orchestrator_config(
                frozenset({idea.MAKER, idea.HATER})),
                "checkpoint": _session_checkpoint(project)}
        else:
            kwargs = {"maker_model": options.model, "hater_model": options.model}
        idea.run_idea_stage(project, ports.gateway, mode=options.mode,
                            session=session, **kwargs)
    elif stage == "literature":
        literature.run_literature_stage(
            project, ports.gateway, ports.search, session=session,
            max_iters=options.max_literature_iters, model=options.model)
    elif stage == "methods":
        kwargs = {}
        if options.mode == "planned":
            kwargs["cfg"] = options.orchestrator_config(
                frozenset({methods.RESEARCHER}), n_steps=methods.PLANNED_N_STEPS)
            kwargs["checkpoint"] = _session_checkpoint(project)
        else:
            kwargs["model"] = options.model
        _text, warnings = methods.run_methods_stage(
            project, ports.gateway, mode=options.mode, session=session, **kwargs)
        for w in warnings:
            emit("warning", w)
    elif stage == "analysis":
        policy = SandboxPolicy(workdir=project.root / "workspace",
                               time_limit=options.sandbox_time_limit)
        cfg = options.orchestrator_config(
            frozenset({analysis.ENGINEER, analysis.RESEARCHER}))
        outcome = analysis.run_analysis(
            project, ports.gateway, cfg=cfg, policy=policy, session=session,
            on_stdout=lambda s: emit("exec_stdout", s),
            engineer_model=options.model, researcher_model=options.model,
            checkpoint=_session_checkpoint(project))
        if not outcome.succeeded:
            raise RuntimeError(f"analysis aborted: {outcome.session.reason}")
    elif stage == "paper":
        popts = PaperOptions(journal=options.journal, citations=options.citations,
                             vocab=options.vocab, n_keywords=options.n_keywords,
                             model=options.model)
        outcome = paper.write_paper(project, ports.gateway,
                                    ports.resolved_typesetter(), options=popts,
                                    cite_port=ports.cite, bib_fetch=ports.bib)
        for version, log in outcome.compile_failures.items():
            emit("warning", f"compile failed for v{version}: {log[:200]}")
        for w in outcome.warnings:
            emit("warning", w)
    elif stage == "review":
        review.run_review_stage(project, ports.gateway, renderer=ports.renderer,
                                model=options.model)


def run_all(project: store.Project, ports: Ports,
            options: RunOptions | None = None,
            events: Callable[[RunEvent], None] | None = None) -> dict:
    """Run every stage in order; first fatal stage error halts the chain and
    the remaining stages are recorded as skipped."""
    options = options or RunOptions()
    if not project.has_artifact(store.INPUT):
        raise MissingArtifact(["input.md"])
    manifest: dict = {"stages": {}, "started": time.time()}
    failed = False
    for stage in STAGES:
        if failed:
            manifest["stages"][stage] = {"status": "skipped"}
            _append_manifest(project, {"stage": stage, "status": "skipped",
                                       "run_id": uuid.uuid4().hex})
            continue
        try:
            entry = run_stage(project, stage, ports, options, events=events)
            manifest["stages"][stage] = entry
        except (StageFailed, MissingArtifact) as exc:
            manifest["stages"][stage] = {"status": "failed", "error": str(exc)}
            failed = True
    manifest["finished"] = time.time()
    return manifest
