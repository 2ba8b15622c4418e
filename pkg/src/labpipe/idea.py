"""Idea stage: propose-critique refinement producing idea.md.

Fast mode is a fixed maker/hater exchange: three critique iterations plus a
final maker pass, i.e. seven turns (M,H,M,H,M,H,M). Planned mode runs the
six-step recipe through a Planning & Control session.
"""
from __future__ import annotations

from . import prompts, store
from .errors import EmptyIdea
from .gateway import LlmGateway
from .planning import (
    OrchestratorConfig,
    Session,
    LlmStepAgent,
    run_control,
    run_planning,
)

MAKER = "idea_maker"
HATER = "idea_hater"

FAST_ITERATIONS = 3


def generate_idea_fast(input_text: str, gateway: LlmGateway,
                       session: Session | None = None,
                       maker_model: str | None = None,
                       hater_model: str | None = None) -> str:
    """Fast propose-critique loop; returns the final idea text."""
    if not input_text.strip():
        raise ValueError("input text must be non-empty")
    session = session or Session(n_rounds=10**6)

    idea = gateway.complete_text(agent=MAKER, system=prompts.IDEA_MAKER_SYSTEM,
                                 prompt=prompts.IDEA_MAKER_FIRST.format(input=input_text),
                                 model=maker_model)
    session.say(MAKER, idea)

    for _ in range(FAST_ITERATIONS):
        critique = gateway.complete_text(
            agent=HATER, system=prompts.IDEA_HATER_SYSTEM,
            prompt=prompts.IDEA_HATER_TURN.format(input=input_text, idea=idea),
            model=hater_model)
        session.say(HATER, critique)
        idea = gateway.complete_text(
            agent=MAKER, system=prompts.IDEA_MAKER_SYSTEM,
            prompt=prompts.IDEA_MAKER_REVISE.format(
                input=input_text, idea=idea, critique=critique),
            model=maker_model)
        session.say(MAKER, idea)

    if not idea.strip():
        raise EmptyIdea("maker produced an empty final idea")
    return idea


def generate_idea_planned(input_text: str, gateway: LlmGateway,
                          cfg: OrchestratorConfig | None = None,
                          session: Session | None = None,
                          checkpoint=None):
    """Planned mode: six-step recipe through Planning & Control.

    Returns the session outcome; final step output is the idea text.
    """
    if not input_text.strip():
        raise ValueError("input text must be non-empty")
    cfg = cfg or OrchestratorConfig(involved_agents=frozenset({MAKER, HATER}))
    session = session or Session(n_rounds=cfg.n_rounds)

    task = prompts.IDEA_PLANNED_TASK.format(input=input_text)
    plan = run_planning(task, cfg, gateway, session)
    agents = {
        MAKER: LlmStepAgent(MAKER, gateway, system=prompts.IDEA_MAKER_SYSTEM),
        HATER: LlmStepAgent(HATER, gateway, system=prompts.IDEA_HATER_SYSTEM),
    }
    return run_control(plan, cfg, agents, gateway, session, task=task,
                       checkpoint=checkpoint)


def run_idea_stage(project: store.Project, gateway: LlmGateway, mode: str = "fast",
                   session: Session | None = None, **kwargs) -> str:
    input_text = project.read_text(store.INPUT)
    if mode == "planned":
        outcome = generate_idea_planned(input_text, gateway, session=session, **kwargs)
        if not outcome.succeeded:
            raise RuntimeError(f"idea session aborted: {outcome.reason}")
        idea = outcome.final_output
        if not idea.strip():
            raise EmptyIdea("planned session produced an empty idea")
    else:
        idea = generate_idea_fast(input_text, gateway, session=session, **kwargs)
    project.write_artifact(store.IDEA, idea)
    return idea


def set_idea(project: store.Project, idea_text: str) -> None:
    """User-supplied idea bypass: written verbatim to idea.md."""
    project.write_artifact(store.IDEA, idea_text)
