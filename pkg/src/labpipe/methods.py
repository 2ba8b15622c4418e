"""Methods stage: methodology write-up from input + idea.

Fast mode is a single completion with the senior-to-assistant template.
Planned mode is a Planning & Control session capped at 4 steps whose final
step is entirely the methodology write-up, researcher only.
"""
from __future__ import annotations

from . import prompts, store
from .errors import MissingArtifact
from .gateway import LlmGateway
from .planning import LlmStepAgent, OrchestratorConfig, Session, run_control, run_planning

RESEARCHER = "researcher"

PLANNED_N_STEPS = 4
WORD_RANGE = (300, 800)  # soft bounds around the ~500-word target


def generate_methods_fast(input_text: str, idea_text: str, gateway: LlmGateway,
                          model: str | None = None) -> str:
    if not input_text.strip() or not idea_text.strip():
        raise ValueError("input text and idea text must both be present")
    return gateway.complete_text(
        agent="methods", model=model,
        prompt=prompts.METHODS_FAST.format(input=input_text, idea=idea_text))


def generate_methods_planned(input_text: str, idea_text: str, gateway: LlmGateway,
                             cfg: OrchestratorConfig | None = None,
                             session: Session | None = None,
                             checkpoint=None):
    """Four-step planned session; returns (outcome, warnings)."""
    if not input_text.strip() or not idea_text.strip():
        raise ValueError("input text and idea text must both be present")
    cfg = cfg or OrchestratorConfig(involved_agents=frozenset({RESEARCHER}),
                                    n_steps=PLANNED_N_STEPS)
    if cfg.n_steps != PLANNED_N_STEPS:
        raise ValueError(f"methods planned mode fixes n_steps={PLANNED_N_STEPS}")
    session = session or Session(n_rounds=cfg.n_rounds)

    task = prompts.METHODS_PLANNED_TASK.format(input=input_text, idea=idea_text)
    plan = run_planning(task, cfg, gateway, session)
    agents = {RESEARCHER: LlmStepAgent(RESEARCHER, gateway,
                                       system=prompts.RESEARCHER_SYSTEM)}
    outcome = run_control(plan, cfg, agents, gateway, session, task=task,
                          checkpoint=checkpoint)

    warnings: list[str] = []
    if outcome.succeeded:
        words = len(outcome.final_output.split())
        lo, hi = WORD_RANGE
        if not lo <= words <= hi:
            warnings.append(
                f"methodology is {words} words, outside the advisory "
                f"range [{lo}, {hi}]")
    return outcome, warnings


def run_methods_stage(project: store.Project, gateway: LlmGateway,
                      mode: str = "fast", session: Session | None = None,
                      **kwargs) -> tuple[str, list[str]]:
    if not project.has_artifact(store.IDEA):
        raise MissingArtifact(["idea.md"])
    input_text = project.read_text(store.INPUT)
    idea_text = project.read_text(store.IDEA)
    warnings: list[str] = []
    if mode == "planned":
        outcome, warnings = generate_methods_planned(
            input_text, idea_text, gateway, session=session, **kwargs)
        if not outcome.succeeded:
            raise RuntimeError(f"methods session aborted: {outcome.reason}")
        methods_text = outcome.final_output
    else:
        methods_text = generate_methods_fast(input_text, idea_text, gateway, **kwargs)
    project.write_artifact(store.METHODS, methods_text)
    return methods_text, warnings


def set_methods(project: store.Project, methods_text: str) -> None:
    """User-supplied methods bypass, mirror of set_idea."""
    project.write_artifact(store.METHODS, methods_text)
