"""Analysis stage: execute the research plan with code-writing agents.

The engineer writes scripts (fenced code blocks) that run in the sandbox; a
failed execution opens a nested self-debug exchange whose internals stay out
of the main transcript. Missing packages route to the installer agent, which
runs the configured install command once and hands the step back. The final
researcher step writes the results report from exactly the captured stdout
and plot filenames, never file contents.
"""
from __future__ import annotations

import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import prompts, store
from .errors import SandboxTimeout, SpawnError
from .gateway import LlmGateway
from .planning import (
    INSTALLER,
    OrchestratorConfig,
    PlanStep,
    Session,
    SessionOutcome,
    SessionState,
    StepReport,
    run_control,
    run_planning,
)
from .sandbox import (
    ExecResult,
    SandboxPolicy,
    execute_script,
    extract_code_blocks,
    missing_package,
    run_install,
)

ENGINEER = "engineer"
RESEARCHER = "researcher"

NESTED_DEBUG_DEPTH = 3


@dataclass
class AnalysisAccumulator:
    """Execution outputs shared between the engineer and researcher agents."""

    stdouts: list[str] = field(default_factory=list)
    plot_files: list[str] = field(default_factory=list)
    failure_count: int = 0
    install_calls: list[str] = field(default_factory=list)

    @property
    def combined_stdout(self) -> str:
        return "\n".join(self.stdouts)


class EngineerAgent:
    """Writes and runs analysis code; self-debugs failed executions."""

    name = ENGINEER

    def __init__(self, gateway: LlmGateway, policy: SandboxPolicy,
                 project: store.Project, acc: AnalysisAccumulator,
                 model: str | None = None,
                 on_stdout: Callable[[str], None] | None = None,
                 nested_depth: int = NESTED_DEBUG_DEPTH):
        self.gateway = gateway
        self.policy = policy
        self.project = project
        self.acc = acc
        self.model = model
        self.on_stdout = on_stdout
        self.nested_depth = nested_depth
        self.nested_exchanges: list[dict] = []
        self._last_error: str | None = None

    def _prompt(self, step: PlanStep, state: SessionState) -> str:
        ctx = state.context
        parts = [
            f"Current step {ctx['current_step'] + 1}/{len(ctx['plan'])}: "
            f"{step.sub_task}",
            "Actions:\n" + "\n".join(f"- {b}" for b in step.bullet_points),
            f"Context:\n{ctx.get('task', '')}",
        ]
        if self._last_error:
            parts.append(f"Previous attempt failed with:\n{self._last_error}")
        return "\n\n".join(parts)

    def _run_block(self, code: str) -> tuple[ExecResult | None, str | None, int]:
        """Execute one block with nested self-debug.

        Returns (final result or None on unrecoverable error, the last nested
        reply text or None when no debugging happened, nested cycles used).
        Only that final reply may surface in the main transcript."""
        cycles = 0
        current = code
        final_reply: str | None = None
        while True:
            try:
                result = execute_script(current, self.policy)
            except (SandboxTimeout, SpawnError):
                return None, final_reply, cycles
            if result.ok or cycles >= self.nested_depth:
                return result, final_reply, cycles
            if missing_package(result.stderr):
                # Installer territory; do not burn debug cycles on it.
                return result, final_reply, cycles
            cycles += 1
            reply = self.gateway.complete_text(
                agent=ENGINEER, model=self.model,
                system=prompts.ENGINEER_SYSTEM,
                prompt=prompts.ENGINEER_DEBUG.format(code=current,
                                                     stderr=result.stderr))
            self.nested_exchanges.append(
                {"cycle": cycles, "stderr": result.stderr, "reply": reply})
            blocks = extract_code_blocks(reply)
            if not blocks:
                return result, final_reply, cycles
            current = blocks[0]
            final_reply = reply

    def _harvest(self, result: ExecResult) -> list[str]:
        """Record stdout and move produced images into Plots/."""
        if result.stdout:
            self.acc.stdouts.append(result.stdout)
            if self.on_stdout:
                self.on_stdout(result.stdout)
        moved = []
        self.project.plots_dir.mkdir(exist_ok=True)
        for img in result.new_images:
            target = self.project.plots_dir / img.name
            n = 1
            while target.exists():
                target = self.project.plots_dir / f"{img.stem}_{n}{img.suffix}"
                n += 1
            shutil.move(str(img), str(target))
            moved.append(target.name)
        self.acc.plot_files.extend(moved)
        return moved

    def take_turn(self, step: PlanStep, state: SessionState,
                  session: Session) -> StepReport:
        text = self.gateway.complete_text(
            agent=ENGINEER, model=self.model,
            system=prompts.ENGINEER_SYSTEM, prompt=self._prompt(step, state))
        blocks = extract_code_blocks(text)
        if not blocks:
            session.say(ENGINEER, text)
            self._last_error = None
            return StepReport(agent=ENGINEER, text=text, completed=True)

        new_plots: list[str] = []
        total_cycles = 0
        surfaced = text  # replaced by the nested chat's final output
        for code in blocks:
            result, final_reply, cycles = self._run_block(code)
            total_cycles += cycles
            if final_reply is not None:
                surfaced = final_reply
            if result is None or not result.ok:
                pkg = missing_package(result.stderr) if result else None
                self.acc.failure_count += 1
                self._last_error = (result.stderr[-2000:] if result
                                    else "execution timed out or could not start")
                summary = prompts.NESTED_SUMMARY.format(cycles=total_cycles,
                                                        status="failed")
                session.say(ENGINEER, f"{surfaced}\n\n[{summary}]",
                            nested_cycles=total_cycles, exec_failed=True)
                return StepReport(agent=ENGINEER, text=surfaced, failed=True,
                                  missing_package=pkg, new_code=True,
                                  code_exec_failed=True)
            new_plots.extend(self._harvest(result))

        self._last_error = None
        if total_cycles:
            summary = prompts.NESTED_SUMMARY.format(cycles=total_cycles,
                                                    status="success")
            main_text = f"{surfaced}\n\n[{summary}]"
        else:
            main_text = surfaced
        session.say(ENGINEER, main_text, nested_cycles=total_cycles)
        return StepReport(agent=ENGINEER, text=main_text, completed=True,
                          new_plots=tuple(new_plots), new_code=True)


class ResearcherAgent:
    """Writes the results report from the captured console output."""

    name = RESEARCHER

    def __init__(self, gateway: LlmGateway, acc: AnalysisAccumulator,
                 model: str | None = None):
        self.gateway = gateway
        self.acc = acc
        self.model = model

    def build_prompt(self, step: PlanStep) -> str:
        # Visibility contract: exactly the concatenated stdouts and the plot
        # filenames; no file contents.
        return "\n\n".join([
            f"Step: {step.sub_task}",
            "\n".join(f"- {b}" for b in step.bullet_points),
            prompts.RESEARCHER_RESULTS.format(
                stdout=self.acc.combined_stdout or "(no console output)",
                plots="\n".join(self.acc.plot_files) or "(no plots)"),
        ])

    def take_turn(self, step: PlanStep, state: SessionState,
                  session: Session) -> StepReport:
        text = self.gateway.complete_text(
            agent=RESEARCHER, model=self.model,
            system=prompts.RESEARCHER_SYSTEM, prompt=self.build_prompt(step))
        session.say(RESEARCHER, text)
        return StepReport(agent=RESEARCHER, text=text, completed=True)


class InstallerAgent:
    """Runs the configured install command for the pending package."""

    name = INSTALLER

    def __init__(self, policy: SandboxPolicy, acc: AnalysisAccumulator):
        self.policy = policy
        self.acc = acc

    def take_turn(self, step: PlanStep, state: SessionState,
                  session: Session) -> StepReport:
        package = state.context.get("pending_package")
        if not package:
            session.say(INSTALLER, "no package pending; resuming step")
            return StepReport(agent=INSTALLER, text="", completed=True)
        self.acc.install_calls.append(package)
        try:
            result = run_install(package, self.policy)
        except (SandboxTimeout, SpawnError) as exc:
            session.say(INSTALLER, f"install of {package} failed: {exc}")
            return StepReport(agent=INSTALLER, text=str(exc), failed=True)
        status = "ok" if result.ok else f"exit {result.exit_status}"
        session.say(INSTALLER, f"pip install {package}: {status}")
        if not result.ok:
            return StepReport(agent=INSTALLER, text=result.stderr, failed=True)
        return StepReport(agent=INSTALLER, text=f"installed {package}",
                          completed=True)


@dataclass
class AnalysisOutcome:
    session: SessionOutcome
    results_text: str
    plots: list[str]
    failures: int
    install_calls: list[str]

    @property
    def succeeded(self) -> bool:
        return self.session.succeeded


def run_analysis(project: store.Project, gateway: LlmGateway,
                 cfg: OrchestratorConfig | None = None,
                 policy: SandboxPolicy | None = None,
                 session: Session | None = None,
                 on_stdout: Callable[[str], None] | None = None,
                 engineer_model: str | None = None,
                 researcher_model: str | None = None,
                 checkpoint: Callable | None = None) -> AnalysisOutcome:
    """Plan and run the analysis; writes results.md and fills Plots/."""
    for role, name in ((store.INPUT, "input.md"), (store.IDEA, "idea.md"),
                       (store.METHODS, "methods.md")):
        if not project.has_artifact(role):
            from .errors import MissingArtifact
            raise MissingArtifact([name])

    input_text = project.read_text(store.INPUT)
    idea_text = project.read_text(store.IDEA)
    methods_text = project.read_text(store.METHODS)

    cfg = cfg or OrchestratorConfig(
        involved_agents=frozenset({ENGINEER, RESEARCHER}))
    policy = policy or SandboxPolicy(workdir=project.root / "workspace")
    session = session or Session(n_rounds=cfg.n_rounds)

    acc = AnalysisAccumulator()
    task = prompts.ANALYSIS_PLANNED_TASK.format(
        idea=idea_text, methods=methods_text,
        agents=", ".join(sorted(cfg.involved_agents)), input=input_text)
    plan = run_planning(task, cfg, gateway, session)

    agents = {
        ENGINEER: EngineerAgent(gateway, policy, project, acc,
                                model=engineer_model, on_stdout=on_stdout),
        RESEARCHER: ResearcherAgent(gateway, acc, model=researcher_model),
        INSTALLER: InstallerAgent(policy, acc),
    }
    outcome = run_control(plan, cfg, agents, gateway, session, task=task,
                          checkpoint=checkpoint)

    results_text = ""
    if outcome.succeeded:
        results_text = outcome.final_output
        project.write_artifact(store.RESULTS, results_text)

    return AnalysisOutcome(session=outcome, results_text=results_text,
                           plots=list(acc.plot_files), failures=acc.failure_count,
                           install_calls=list(acc.install_calls))
