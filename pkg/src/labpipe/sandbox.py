"""Subprocess sandbox for generated analysis scripts.

Scripts run as a child process group confined to a working directory inside
the project root; stdout/stderr are captured in full and new files are found
by a filesystem diff. This is cwd-confinement, not container-grade isolation:
writes that land outside the workdir are detected, excluded from new_files
and reported as policy violations rather than prevented.
"""
from __future__ import annotations

import os
import re
import signal
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SandboxTimeout, SpawnError

IMAGE_EXTENSIONS = {".png", ".pdf", ".jpg", ".jpeg", ".svg"}


@dataclass
class SandboxPolicy:
    workdir: Path
    time_limit: float = 120.0
    allow_network: bool = False
    interpreter_cmd: tuple[str, ...] = (sys.executable, "{script}")
    install_cmd: tuple[str, ...] = (sys.executable, "-m", "pip", "install", "{package}")

    def __post_init__(self):
        self.workdir = Path(self.workdir)
        if self.time_limit <= 0 or self.time_limit == float("inf"):
            raise ValueError("time_limit must be finite and positive")


@dataclass
class ExecResult:
    exit_status: int
    stdout: str
    stderr: str
    new_files: list[Path] = field(default_factory=list)
    wall_time: float = 0.0
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.exit_status == 0

    @property
    def new_images(self) -> list[Path]:
        return [p for p in self.new_files if p.suffix.lower() in IMAGE_EXTENSIONS]


def _snapshot(root: Path) -> set[Path]:
    if not root.is_dir():
        return set()
    return {p for p in root.rglob("*") if p.is_file()}


def _snapshot_shallow(root: Path) -> set[Path]:
    if not root.is_dir():
        return set()
    return {p for p in root.iterdir() if p.is_file()}


def execute_script(code: str, policy: SandboxPolicy) -> ExecResult:
    """Run one script under the policy.

    Raises SandboxTimeout when the time limit is hit (the whole process group
    is killed first, so no orphan survives) and SpawnError when the
    interpreter cannot start.
    """
    if not code.strip():
        raise ValueError("empty script")
    policy.workdir.mkdir(parents=True, exist_ok=True)

    before_work = _snapshot(policy.workdir)
    before_parent = _snapshot_shallow(policy.workdir.parent)

    fd, script_path = tempfile.mkstemp(suffix=".py", prefix="task-",
                                       dir=policy.workdir)
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(code)

    argv = [part.format(script=script_path) for part in policy.interpreter_cmd]
    env = dict(os.environ)
    if not policy.allow_network:
        # Advisory only; generated scripts honoring proxies will be cut off.
        env["no_proxy"] = "*"
        env["NO_NETWORK"] = "1"

    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv, cwd=policy.workdir, env=env,
            stdout=subprocess.PIPE, stderr=subprocess.PIPE,
            text=True, start_new_session=True)
    except OSError as exc:
        os.unlink(script_path)
        raise SpawnError(f"could not start interpreter: {exc}") from exc

    try:
        stdout, stderr = proc.communicate(timeout=policy.time_limit)
    except subprocess.TimeoutExpired:
        _kill_group(proc)
        stdout, stderr = proc.communicate()
        os.unlink(script_path)
        raise SandboxTimeout(policy.time_limit, stdout or "", stderr or "")
    finally:
        if os.path.exists(script_path):
            os.unlink(script_path)

    wall = time.monotonic() - start
    after_work = _snapshot(policy.workdir)
    new_files = sorted(after_work - before_work)

    warnings = []
    escaped = sorted(_snapshot_shallow(policy.workdir.parent) - before_parent)
    escaped = [p for p in escaped if policy.workdir not in p.parents]
    for p in escaped:
        warnings.append(f"policy violation: write outside sandbox workdir: {p}")

    return ExecResult(exit_status=proc.returncode, stdout=stdout, stderr=stderr,
                      new_files=new_files, wall_time=wall, warnings=warnings)


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


_FENCE_OPEN = re.compile(r"^```[ \t]*([\w+-]*)[ \t]*$")


def extract_code_blocks(text: str) -> list[str]:
    """Fenced code blocks in order of appearance.

    Greedy line rule: a line of ``` (optionally with a language tag) opens a
    block; the next line that is exactly ``` closes it. An unclosed fence
    runs to end of text. Non-code text is ignored.
    """
    blocks: list[str] = []
    current: list[str] | None = None
    for line in text.splitlines():
        if current is None:
            if _FENCE_OPEN.match(line.strip()):
                current = []
        else:
            if line.strip() == "```":
                blocks.append("\n".join(current))
                current = None
            else:
                current.append(line)
    if current is not None:
        blocks.append("\n".join(current))
    return blocks


_MISSING_MODULE = re.compile(
    r"(?:ModuleNotFoundError|ImportError): No module named ['\"]?([\w.]+)")


def missing_package(stderr: str) -> str | None:
    """Package name when the failure is an unresolved import, else None."""
    m = _MISSING_MODULE.search(stderr)
    if not m:
        return None
    return m.group(1).split(".")[0]


def run_install(package: str, policy: SandboxPolicy) -> ExecResult:
    """Run the configured install command for one package."""
    argv = [part.format(package=package) for part in policy.install_cmd]
    start = time.monotonic()
    try:
        proc = subprocess.run(argv, cwd=policy.workdir, capture_output=True,
                              text=True, timeout=max(policy.time_limit, 300.0))
    except OSError as exc:
        raise SpawnError(f"could not run installer: {exc}") from exc
    except subprocess.TimeoutExpired as exc:
        raise SandboxTimeout(policy.time_limit, str(exc.stdout or ""),
                             str(exc.stderr or ""))
    return ExecResult(exit_status=proc.returncode, stdout=proc.stdout,
                      stderr=proc.stderr, wall_time=time.monotonic() - start)
