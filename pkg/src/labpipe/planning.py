"""Planning & Control session engine.

Two phases: plan synthesis (planner proposes, reviewer critiques for a fixed
number of rounds, final plan recorded) and stepwise controlled execution
(dispatch to the step's agent, fold the step report through record_status,
transition). Termination is either success on the last step or an abort from
the failure cap or the hard round cap; both paths end with one terminator
turn and the transcript never exceeds n_rounds messages.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Protocol

from . import prompts
from .errors import EmptyStep, MalformedPlan, RoundCapExceeded, TooManySteps, UnknownAgent
from .gateway import LlmGateway
from .messages import AgentMessage

PLAN_SETTER = "plan_setter"
PLANNER = "planner"
PLAN_REVIEWER = "plan_reviewer"
CONTROL = "control"
TERMINATOR = "terminator"
INSTALLER = "installer"


@dataclass(frozen=True)
class PlanStep:
    sub_task: str
    sub_task_agent: str
    bullet_points: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"sub_task": self.sub_task, "sub_task_agent": self.sub_task_agent,
                "bullet_points": list(self.bullet_points)}


@dataclass(frozen=True)
class Plan:
    steps: tuple[PlanStep, ...]

    def to_dict(self) -> dict:
        return {"steps": [s.to_dict() for s in self.steps]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, raw: dict) -> "Plan":
        try:
            steps = tuple(
                PlanStep(
                    sub_task=str(s["sub_task"]),
                    sub_task_agent=str(s["sub_task_agent"]),
                    bullet_points=tuple(str(b) for b in s["bullet_points"]),
                )
                for s in raw["steps"]
            )
        except (KeyError, TypeError) as exc:
            raise MalformedPlan(f"plan JSON missing fields: {exc}") from exc
        return cls(steps)


def parse_plan(text: str) -> Plan:
    """Extract the plan JSON object from an agent reply."""
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        raise MalformedPlan("no JSON object in reply")
    try:
        raw = json.loads(text[start:end + 1])
    except json.JSONDecodeError as exc:
        raise MalformedPlan(f"invalid JSON: {exc}") from exc
    return Plan.from_dict(raw)


@dataclass
class OrchestratorConfig:
    involved_agents: frozenset[str] = frozenset()
    n_reviews: int = 1
    n_steps: int = 8
    n_fails: int = 3
    n_rounds: int = 500
    plan_parse_attempts: int = 2
    planner_model: str | None = None

    def __post_init__(self):
        if self.n_reviews < 0:
            raise ValueError("n_reviews must be >= 0")
        if self.n_steps < 1 or self.n_fails < 1 or self.n_rounds < 1:
            raise ValueError("n_steps, n_fails and n_rounds must be >= 1")
        if isinstance(self.involved_agents, (set, list, tuple)):
            self.involved_agents = frozenset(self.involved_agents)


def validate_plan(plan: Plan, cfg: OrchestratorConfig) -> None:
    """Raise a MalformedPlan subclass when the plan violates the contract."""
    if not plan.steps:
        raise EmptyStep("plan has no steps")
    if len(plan.steps) > cfg.n_steps:
        raise TooManySteps(f"plan has {len(plan.steps)} steps, cap is {cfg.n_steps}")
    for i, step in enumerate(plan.steps, start=1):
        if step.sub_task_agent not in cfg.involved_agents:
            raise UnknownAgent(
                f"step {i} assigned to {step.sub_task_agent!r}, "
                f"not in {sorted(cfg.involved_agents)}")
        if not step.bullet_points or not step.sub_task.strip():
            raise EmptyStep(f"step {i} is empty")


class Status(Enum):
    PLANNING = "planning"
    CONTROLLING = "controlling"
    TERMINATED = "terminated"
    ABORTED = "aborted"


@dataclass
class SessionState:
    context: dict
    rounds_used: int = 0
    failures: int = 0
    status: Status = Status.PLANNING


@dataclass(frozen=True)
class StepReport:
    """What one agent turn reports back to control."""

    agent: str
    text: str = ""
    completed: bool = False
    failed: bool = False
    missing_package: str | None = None
    new_plots: tuple[str, ...] = ()
    new_code: bool = False
    code_exec_failed: bool = False


def initial_control_state(plan: Plan, cfg: OrchestratorConfig,
                          task: str = "") -> SessionState:
    context = {
        "task": task,
        "plan": plan.to_dict()["steps"],
        "recommendations": [],
        "n_fails": cfg.n_fails,
        "current_step": 0,
        "step_status": "pending",
        "next_agent": plan.steps[0].sub_task_agent,
        "new_plots_produced": False,
        "new_code_produced": False,
        "code_exec_failed": False,
        "plots": [],
        "step_outputs": [],
        "pending_package": None,
        "abort_reason": None,
    }
    return SessionState(context=context, status=Status.CONTROLLING)


def record_status(state: SessionState, report: StepReport) -> SessionState:
    """Pure transition: fold one step report into the session state.

    Priority when several flags apply: abort > installer > retry > advance.
    No I/O; identical (state, report) pairs always produce identical states.
    """
    ctx = copy.deepcopy(state.context)
    plan: list[dict] = ctx["plan"]
    step_idx: int = ctx["current_step"]
    failures = state.failures
    status = state.status

    ctx["new_plots_produced"] = bool(report.new_plots)
    ctx["new_code_produced"] = bool(report.new_code)
    ctx["code_exec_failed"] = bool(report.code_exec_failed)
    if report.new_plots:
        ctx["plots"] = list(ctx.get("plots", [])) + list(report.new_plots)

    if report.failed:
        failures += 1
        ctx["step_status"] = "failed"
        if failures >= ctx["n_fails"]:
            status = Status.ABORTED
            ctx["abort_reason"] = f"failure cap reached at step {step_idx + 1}"
            ctx["next_agent"] = TERMINATOR
        elif report.missing_package:
            ctx["pending_package"] = report.missing_package
            ctx["next_agent"] = INSTALLER
        else:
            ctx["next_agent"] = plan[step_idx]["sub_task_agent"]
    elif report.completed:
        if report.agent == INSTALLER:
            # Install done: resume the interrupted step, never advance.
            ctx["pending_package"] = None
            ctx["step_status"] = "in_progress"
            ctx["next_agent"] = plan[step_idx]["sub_task_agent"]
        else:
            outputs = list(ctx.get("step_outputs", []))
            outputs.append(report.text)
            ctx["step_outputs"] = outputs
            ctx["step_status"] = "completed"
            if step_idx >= len(plan) - 1:
                status = Status.TERMINATED
                ctx["next_agent"] = TERMINATOR
            else:
                ctx["current_step"] = step_idx + 1
                ctx["step_status"] = "pending"
                ctx["next_agent"] = plan[step_idx + 1]["sub_task_agent"]
    else:
        # Neither flag: the agent is still working (clarification loop).
        ctx["step_status"] = "in_progress"
        ctx["next_agent"] = report.agent if report.agent != INSTALLER \
            else plan[step_idx]["sub_task_agent"]

    return SessionState(context=ctx, rounds_used=state.rounds_used,
                        failures=failures, status=status)


def state_snapshot(state: SessionState) -> dict:
    """JSON-ready view of a session state (plan and context included)."""
    return {
        "status": state.status.value,
        "rounds_used": state.rounds_used,
        "failures": state.failures,
        "context": state.context,
    }


class Session:
    """Transcript recorder shared by planning and control.

    Every turn goes through say(); sinks receive each message (transcript
    persistence, event streaming). The round cap is enforced here as a hard
    guard -- the loops abort gracefully before tripping it.
    """

    def __init__(self, n_rounds: int = 500,
                 sinks: list[Callable[[AgentMessage], None]] | None = None):
        self.n_rounds = n_rounds
        self.sinks = list(sinks or [])
        self.messages: list[AgentMessage] = []

    @property
    def rounds(self) -> int:
        return len(self.messages)

    def say(self, agent: str, text: str, role: str = "assistant",
            **meta) -> AgentMessage:
        if self.rounds >= self.n_rounds:
            raise RoundCapExceeded(f"transcript already at {self.n_rounds} messages")
        msg = AgentMessage.text(agent, role, text, **meta)
        self.messages.append(msg)
        for sink in self.sinks:
            sink(msg)
        return msg

    def agents_in_order(self) -> list[str]:
        return [m.agent for m in self.messages]


class StepAgent(Protocol):
    name: str

    def take_turn(self, step: PlanStep, state: SessionState,
                  session: Session) -> StepReport: ...


class LlmStepAgent:
    """Generic agent: one completion per turn, always reports completed."""

    def __init__(self, name: str, gateway: LlmGateway, system: str | None = None,
                 model: str | None = None):
        self.name = name
        self.gateway = gateway
        self.system = system
        self.model = model

    def build_prompt(self, step: PlanStep, state: SessionState) -> str:
        ctx = state.context
        prior = "\n\n".join(
            f"[step {i + 1} output]\n{out}"
            for i, out in enumerate(ctx.get("step_outputs", [])))
        context_text = ctx.get("task", "")
        if prior:
            context_text += "\n\n" + prior
        return prompts.STEP_DISPATCH.format(
            index=ctx["current_step"] + 1,
            total=len(ctx["plan"]),
            sub_task=step.sub_task,
            bullets="\n".join(f"- {b}" for b in step.bullet_points),
            context=context_text,
        )

    def take_turn(self, step: PlanStep, state: SessionState,
                  session: Session) -> StepReport:
        text = self.gateway.complete_text(
            agent=self.name, prompt=self.build_prompt(step, state),
            system=self.system, model=self.model)
        session.say(self.name, text)
        return StepReport(agent=self.name, text=text, completed=True)


# --- planning phase ------------------------------------------------------------


def _ask_for_plan(gateway: LlmGateway, session: Session, cfg: OrchestratorConfig,
                  first_prompt: str, system: str) -> Plan:
    prompt = first_prompt
    last_error: MalformedPlan | None = None
    for _attempt in range(max(1, cfg.plan_parse_attempts)):
        _require_room(session)
        text = gateway.complete_text(agent=PLANNER, prompt=prompt, system=system,
                                     model=cfg.planner_model)
        session.say(PLANNER, text)
        try:
            plan = parse_plan(text)
            validate_plan(plan, cfg)
            return plan
        except MalformedPlan as exc:
            last_error = exc
            prompt = first_prompt + "\n\n" + prompts.PLAN_REASK.format(problem=exc)
    raise MalformedPlan(f"planner never produced a valid plan: {last_error}")


def _require_room(session: Session) -> None:
    if session.rounds >= session.n_rounds:
        raise RoundCapExceeded("round cap hit during planning")


def run_planning(task_text: str, cfg: OrchestratorConfig, gateway: LlmGateway,
                 session: Session) -> Plan:
    """Synthesize a plan: plan_setter bookkeeping turn, planner proposal,
    n_reviews critique/revision rounds, final plan returned validated."""
    agents = ", ".join(sorted(cfg.involved_agents))
    system = prompts.PLANNER_SYSTEM.format(n_steps=cfg.n_steps, agents=agents)
    _require_room(session)
    session.say(PLAN_SETTER,
                f"Involved agents for this session: {agents}.", role="system")

    plan = _ask_for_plan(gateway, session, cfg,
                         prompts.PLANNER_TASK.format(task=task_text), system)

    for _round in range(cfg.n_reviews):
        _require_room(session)
        review = gateway.complete_text(
            agent=PLAN_REVIEWER,
            prompt=prompts.PLAN_REVIEW_REQUEST.format(plan=plan.to_json()),
            system=prompts.PLAN_REVIEWER_SYSTEM.format(n_steps=cfg.n_steps,
                                                       agents=agents),
            model=cfg.planner_model)
        session.say(PLAN_REVIEWER, review)
        plan = _ask_for_plan(
            gateway, session, cfg,
            prompts.PLANNER_REVISE.format(recommendations=review), system)

    return plan


# --- control phase -------------------------------------------------------------


@dataclass
class SessionOutcome:
    status: Status
    state: SessionState
    steps_completed: int
    reason: str
    transcript: list[AgentMessage] = field(default_factory=list)

    @property
    def succeeded(self) -> bool:
        return self.status is Status.TERMINATED

    @property
    def final_output(self) -> str:
        outputs = self.state.context.get("step_outputs", [])
        return outputs[-1] if outputs else ""


def run_control(plan: Plan, cfg: OrchestratorConfig, agents: dict[str, StepAgent],
                gateway: LlmGateway, session: Session, task: str = "",
                checkpoint: Callable[[SessionState], None] | None = None
                ) -> SessionOutcome:
    """Execute a validated plan under the control loop.

    `checkpoint`, when given, receives the session state after every folded
    step report so a crashed session can be resumed from the last snapshot.
    """
    validate_plan(plan, cfg)
    state = initial_control_state(plan, cfg, task=task)
    if checkpoint:
        checkpoint(state)

    def emit_terminator() -> None:
        reason = state.context.get("abort_reason") or "plan completed"
        session.say(TERMINATOR, f"Session ends: {reason}.")

    while True:
        nxt = state.context["next_agent"]
        if state.status in (Status.TERMINATED, Status.ABORTED) or nxt == TERMINATOR:
            emit_terminator()
            break

        # Reserve the final transcript slot for the terminator.
        if session.rounds >= cfg.n_rounds - 1:
            state = _abort_round_cap(state)
            continue

        step = plan.steps[state.context["current_step"]]
        agent = agents.get(nxt)
        if agent is None:
            state = replace(state, status=Status.ABORTED)
            state.context["abort_reason"] = f"no such agent: {nxt}"
            state.context["next_agent"] = TERMINATOR
            continue

        report = agent.take_turn(step, state, session)

        if session.rounds >= cfg.n_rounds - 1:
            state = _abort_round_cap(state)
            continue
        session.say(CONTROL, _status_line(state, report), role="system")

        state = replace(state, rounds_used=session.rounds)
        state = record_status(state, report)
        if checkpoint:
            checkpoint(state)

    state = replace(state, rounds_used=session.rounds)
    completed = len(state.context.get("step_outputs", []))
    return SessionOutcome(status=state.status, state=state,
                          steps_completed=completed,
                          reason=state.context.get("abort_reason") or "completed",
                          transcript=list(session.messages))


def _abort_round_cap(state: SessionState) -> SessionState:
    state = replace(state, status=Status.ABORTED)
    state.context["abort_reason"] = "round cap reached"
    state.context["next_agent"] = TERMINATOR
    return state


def _status_line(state: SessionState, report: StepReport) -> str:
    step = state.context["current_step"] + 1
    if report.failed:
        outcome = "failed"
    elif report.completed:
        outcome = "completed"
    else:
        outcome = "in progress"
    extras = []
    if report.missing_package:
        extras.append(f"missing package {report.missing_package}")
    if report.new_plots:
        extras.append(f"{len(report.new_plots)} new plot(s)")
    suffix = f" ({', '.join(extras)})" if extras else ""
    return f"step {step} by {report.agent}: {outcome}{suffix}"
