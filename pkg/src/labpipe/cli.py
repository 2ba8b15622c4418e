"""Command-line surface: one verb per stage plus run-all and serve.

Exit codes: 0 success, 1 stage failure, 2 usage error. stdout carries the
human log (or JSON lines with --json), stderr the diagnostics.
"""
from __future__ import annotations

import json as _json
import sys
from pathlib import Path

import click

from . import pipeline, store
from .errors import LabpipeError
from .gateway import LlmGateway, ScriptedProvider
from .idea import set_idea as _set_idea
from .latex import BuiltinTypesetter, CommandTypesetter, Journal, default_typesetter
from .literature import HttpSearchPort
from .methods import set_methods as _set_methods
from .paper import HttpBibFetch
from .pdfpages import TextExtractOcr


def _echo(payload: dict, as_json: bool) -> None:
    if as_json:
        click.echo(_json.dumps(payload))
    else:
        click.echo(" ".join(f"{k}={v}" for k, v in payload.items()))


def _build_ports(script: str | None, typesetter: str | None) -> pipeline.Ports:
    if script:
        provider = ScriptedProvider.from_file(script)
        gateway = LlmGateway(provider=provider, backoff_base=0.0,
                             sleep=lambda _s: None)
    else:
        gateway = LlmGateway()
    if typesetter == "builtin":
        ts = BuiltinTypesetter()
    elif typesetter:
        ts = CommandTypesetter(tuple(typesetter.split()))
    else:
        ts = default_typesetter()
    return pipeline.Ports(gateway=gateway, search=HttpSearchPort(),
                          bib=HttpBibFetch(), typesetter=ts)


run_options = [
    click.option("--project-dir", required=True, type=click.Path(path_type=Path)),
    click.option("--mode", type=click.Choice(["fast", "planned"]), default="fast"),
    click.option("--model", default=None),
    click.option("--journal", type=click.Choice([j.name for j in Journal]),
                 default="GENERIC"),
    click.option("--citations", type=click.Choice(["on", "off"]), default="off"),
    click.option("--vocab", type=click.Choice(["unesco", "aaai", "aas"]),
                 default="unesco"),
    click.option("--max-rounds", type=int, default=500),
    click.option("--max-fails", type=int, default=3),
    click.option("--sandbox-timeout", type=float, default=120.0,
                 help="Wall-clock limit per analysis script, seconds."),
    click.option("--script", default=None,
                 help="Scripted-provider file for offline/deterministic runs."),
    click.option("--typesetter", default=None,
                 help="'builtin' or a command template with {tex} {jobname}."),
    click.option("--json", "as_json", is_flag=True, default=False),
]


def _with_run_options(fn):
    for opt in reversed(run_options):
        fn = opt(fn)
    return fn


def _options_from_flags(mode: str, model: str | None, journal: str,
                        citations: str, vocab: str, max_rounds: int,
                        max_fails: int, sandbox_timeout: float
                        ) -> pipeline.RunOptions:
    return pipeline.RunOptions(mode=mode, model=model, journal=Journal[journal],
                               citations=citations == "on", vocab=vocab,
                               n_rounds=max_rounds, n_fails=max_fails,
                               sandbox_time_limit=sandbox_timeout)


def _run(stage: str, project_dir: Path, mode: str, model: str | None,
         journal: str, citations: str, vocab: str, max_rounds: int,
         max_fails: int, sandbox_timeout: float, script: str | None,
         typesetter: str | None, as_json: bool) -> None:
    project = store.init_project(project_dir)
    ports = _build_ports(script, typesetter)
    options = _options_from_flags(mode, model, journal, citations, vocab,
                                  max_rounds, max_fails, sandbox_timeout)
    try:
        entry = pipeline.run_stage(project, stage, ports, options)
    except LabpipeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    _echo({"stage": stage, "status": entry["status"],
           "duration_s": entry["duration_s"]}, as_json)


@click.group()
def main() -> None:
    """Research-pipeline engine."""


@main.command()
@click.option("--project-dir", required=True, type=click.Path(path_type=Path))
def init(project_dir: Path) -> None:
    """Create the project directory scaffold."""
    project = store.init_project(project_dir)
    click.echo(f"initialized {project.root}")


@main.command("set-input")
@click.option("--project-dir", required=True, type=click.Path(path_type=Path))
@click.option("--file", "file_", type=click.Path(exists=True, path_type=Path))
@click.option("--text", default=None)
def set_input(project_dir: Path, file_: Path | None, text: str | None) -> None:
    """Store the input description (from --file or --text)."""
    if (file_ is None) == (text is None):
        raise click.UsageError("provide exactly one of --file or --text")
    project = store.init_project(project_dir)
    data = file_.read_text(encoding="utf-8") if file_ else text
    project.write_artifact(store.INPUT, data)
    click.echo("input.md written")


@main.command("enhance-input")
@click.option("--project-dir", required=True, type=click.Path(path_type=Path))
@click.option("--script", default=None)
def enhance_input(project_dir: Path, script: str | None) -> None:
    """Expand arXiv links in input.md into appended summaries."""
    project = store.init_project(project_dir)
    ports = _build_ports(script, None)
    text = project.read_text(store.INPUT)
    enhanced, warnings = store.enhance_input(project, text, TextExtractOcr(),
                                             ports.gateway)
    project.write_artifact(store.INPUT, enhanced)
    for w in warnings:
        click.echo(f"warning: {w}", err=True)
    click.echo(f"input.md enhanced ({len(warnings)} warning(s))")


@main.command("set-idea")
@click.option("--project-dir", required=True, type=click.Path(path_type=Path))
@click.option("--file", "file_", type=click.Path(exists=True, path_type=Path))
@click.option("--text", default=None)
def set_idea(project_dir: Path, file_: Path | None, text: str | None) -> None:
    """Store a user-supplied idea, bypassing the idea stage."""
    if (file_ is None) == (text is None):
        raise click.UsageError("provide exactly one of --file or --text")
    project = store.init_project(project_dir)
    _set_idea(project, file_.read_text(encoding="utf-8") if file_ else text)
    click.echo("idea.md written")


@main.command("set-methods")
@click.option("--project-dir", required=True, type=click.Path(path_type=Path))
@click.option("--file", "file_", type=click.Path(exists=True, path_type=Path))
@click.option("--text", default=None)
def set_methods(project_dir: Path, file_: Path | None, text: str | None) -> None:
    """Store user-supplied methods, bypassing the methods stage."""
    if (file_ is None) == (text is None):
        raise click.UsageError("provide exactly one of --file or --text")
    project = store.init_project(project_dir)
    _set_methods(project, file_.read_text(encoding="utf-8") if file_ else text)
    click.echo("methods.md written")


def _stage_command(name: str, stage: str, doc: str):
    @main.command(name)
    @_with_run_options
    def cmd(project_dir, mode, model, journal, citations, vocab, max_rounds,
            max_fails, sandbox_timeout, script, typesetter, as_json):
        _run(stage, project_dir, mode, model, journal, citations, vocab,
             max_rounds, max_fails, sandbox_timeout, script, typesetter,
             as_json)

    cmd.__doc__ = doc
    return cmd


idea_cmd = _stage_command("idea", "idea", "Generate the project idea.")
check_idea_cmd = _stage_command("check-idea", "literature",
                                "Check the idea against the literature.")
methods_cmd = _stage_command("methods", "methods", "Generate the methodology.")
results_cmd = _stage_command("results", "analysis",
                             "Run the analysis: code, plots, results.")
paper_cmd = _stage_command("paper", "paper", "Write the paper (v1..v4).")
referee_cmd = _stage_command("referee", "review", "Referee the compiled paper.")


@main.command("run-all")
@_with_run_options
def run_all_cmd(project_dir, mode, model, journal, citations, vocab,
                max_rounds, max_fails, sandbox_timeout, script, typesetter,
                as_json) -> None:
    """Run every stage in order."""
    project = store.init_project(project_dir)
    ports = _build_ports(script, typesetter)
    options = _options_from_flags(mode, model, journal, citations, vocab,
                                  max_rounds, max_fails, sandbox_timeout)
    manifest = pipeline.run_all(project, ports, options)
    statuses = {s: e.get("status") for s, e in manifest["stages"].items()}
    if as_json:
        click.echo(_json.dumps({"stages": statuses}))
    else:
        for stage, status in statuses.items():
            click.echo(f"{stage}: {status}")
    if any(v == "failed" for v in statuses.values()):
        sys.exit(1)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8787)
@click.option("--projects-root", type=click.Path(path_type=Path),
              default=Path("./projects"))
@click.option("--script", default=None)
@click.option("--token", default=None,
              help="Require this bearer token on every request.")
def serve(host: str, port: int, projects_root: Path, script: str | None,
          token: str | None) -> None:
    """Start the HTTP service for the web UI."""
    import uvicorn

    from .service import ServiceConfig, create_app

    ports = _build_ports(script, None)
    app = create_app(ServiceConfig(projects_root=projects_root, token=token),
                     ports=ports)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
