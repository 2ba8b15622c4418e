"""HTTP service powering the web UI.

JSON over a versioned prefix (/v1): project CRUD, artifact upload/download by
contract-relative path, stage runs (one active run per project) and a
server-push event stream per run with buffered replay, so a late subscriber
to a finished run still sees every event in order. Auth is a single optional
bearer token; provider-key status reports presence only, never values.
"""
from __future__ import annotations

import json
import os
import socket
import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request, Response
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from . import pipeline, store
from .errors import LabpipeError
from .gateway import ENV_KEYS, LlmGateway, Provider
from .latex import Journal

API_PREFIX = "/v1"

TERMINAL_EVENTS = {"stage_done", "stage_failed", "run_interrupted"}

_SAFE_NAME = __import__("re").compile(r"^[\w-]{1,64}$")


class BindError(LabpipeError):
    pass


@dataclass
class ServiceConfig:
    projects_root: Path
    token: str | None = None
    max_upload_bytes: int = 10 * 1024 * 1024
    drain_timeout: float = 2.0
    # single-operator local tool; the browser UI may sit on another port
    cors_origins: tuple[str, ...] = ("*",)


class CreateProject(BaseModel):
    name: str


class StartRun(BaseModel):
    stage: str
    mode: str = "fast"
    options: dict = {}


@dataclass
class RunRecord:
    run_id: str
    project_id: str
    stage: str
    status: str = "running"
    events: list[dict] = field(default_factory=list)
    cond: threading.Condition = field(default_factory=threading.Condition)
    thread: threading.Thread | None = None

    def append(self, event: dict) -> None:
        with self.cond:
            event["seq"] = len(self.events)
            self.events.append(event)
            self.cond.notify_all()


class RunManager:
    def __init__(self, config: ServiceConfig, ports: pipeline.Ports):
        self.config = config
        self.ports = ports
        self.runs: dict[str, RunRecord] = {}
        self._lock = threading.Lock()

    def active_run(self, project_id: str) -> RunRecord | None:
        for record in self.runs.values():
            if record.project_id == project_id and record.status == "running":
                return record
        return None

    def start(self, project: store.Project, project_id: str,
              req: StartRun) -> RunRecord:
        with self._lock:
            if self.active_run(project_id) is not None:
                raise HTTPException(409, "a run is already active for this project")
            record = RunRecord(run_id=uuid.uuid4().hex, project_id=project_id,
                               stage=req.stage)
            self.runs[record.run_id] = record

        options = _options_from_dict(req.mode, req.options)

        def emit(event: pipeline.RunEvent) -> None:
            record.append(event.to_dict())

        def work() -> None:
            try:
                pipeline.run_stage(project, req.stage, self.ports, options,
                                   events=emit)
                record.status = "done"
            except Exception as exc:
                if record.status == "running":
                    record.status = "failed"
                terminal = any(e["kind"] in TERMINAL_EVENTS for e in record.events)
                if not terminal:
                    record.append({"kind": "stage_failed", "stage": req.stage,
                                   "text": str(exc), "timestamp": time.time()})

        record.thread = threading.Thread(target=work, daemon=True)
        record.thread.start()
        return record

    def shutdown(self) -> None:
        """Drain briefly; anything still running is marked interrupted."""
        deadline = time.time() + self.config.drain_timeout
        for record in self.runs.values():
            if record.thread and record.thread.is_alive():
                record.thread.join(timeout=max(0.0, deadline - time.time()))
        for record in self.runs.values():
            if record.status == "running":
                record.status = "interrupted"
                record.append({"kind": "run_interrupted", "stage": record.stage,
                               "text": "service shutdown", "timestamp": time.time()})
                project = store.Project(self.config.projects_root / record.project_id)
                pipeline._append_manifest(project, {
                    "run_id": record.run_id, "stage": record.stage,
                    "status": "interrupted"})


def _options_from_dict(mode: str, raw: dict) -> pipeline.RunOptions:
    options = pipeline.RunOptions(mode=mode)
    if "model" in raw:
        options.model = raw["model"]
    if "journal" in raw:
        options.journal = Journal[raw["journal"]]
    if "citations" in raw:
        options.citations = bool(raw["citations"])
    if "max_rounds" in raw:
        options.n_rounds = int(raw["max_rounds"])
    if "max_fails" in raw:
        options.n_fails = int(raw["max_fails"])
    if "sandbox_time_limit" in raw:
        options.sandbox_time_limit = float(raw["sandbox_time_limit"])
    return options


def create_app(config: ServiceConfig, ports: pipeline.Ports | None = None) -> FastAPI:
    if ports is None:
        ports = pipeline.Ports(gateway=LlmGateway())
    config.projects_root = Path(config.projects_root)
    config.projects_root.mkdir(parents=True, exist_ok=True)
    manager = RunManager(config, ports)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        manager.shutdown()

    app = FastAPI(title="labpipe service", lifespan=lifespan)
    app.state.manager = manager

    if config.cors_origins:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(CORSMiddleware,
                           allow_origins=list(config.cors_origins),
                           allow_methods=["*"], allow_headers=["*"])

    def auth(request: Request) -> None:
        if config.token is None:
            return
        header = request.headers.get("Authorization", "")
        if header != f"Bearer {config.token}":
            raise HTTPException(401, "missing or invalid bearer token")

    def get_project(project_id: str) -> store.Project:
        if not _SAFE_NAME.match(project_id):
            raise HTTPException(400, "invalid project id")
        root = config.projects_root / project_id
        if not root.is_dir():
            raise HTTPException(404, f"no such project: {project_id}")
        return store.Project(root)

    @app.get(f"{API_PREFIX}/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get(f"{API_PREFIX}/keys", dependencies=[Depends(auth)])
    def keys() -> dict:
        return {provider.value: bool(os.environ.get(env))
                for provider, env in ENV_KEYS.items()}

    @app.post(f"{API_PREFIX}/projects", dependencies=[Depends(auth)], status_code=201)
    def create_project(body: CreateProject) -> dict:
        if not _SAFE_NAME.match(body.name):
            raise HTTPException(400, "project name must match [\\w-]{1,64}")
        project = store.init_project(config.projects_root / body.name)
        return {"id": body.name, "path": str(project.root)}

    @app.get(f"{API_PREFIX}/projects", dependencies=[Depends(auth)])
    def list_projects() -> list[dict]:
        out = []
        for child in sorted(config.projects_root.iterdir()):
            if child.is_dir():
                out.append({"id": child.name})
        return out

    @app.get(f"{API_PREFIX}/projects/{{project_id}}", dependencies=[Depends(auth)])
    def project_info(project_id: str) -> dict:
        project = get_project(project_id)
        active = manager.active_run(project_id)
        return {"id": project_id,
                "artifacts": project.list_artifacts(),
                "active_run": active.run_id if active else None}

    @app.get(f"{API_PREFIX}/projects/{{project_id}}/artifacts",
             dependencies=[Depends(auth)])
    def list_artifacts(project_id: str) -> list[dict]:
        return get_project(project_id).list_artifacts()

    @app.put(f"{API_PREFIX}/projects/{{project_id}}/artifacts/{{rel_path:path}}",
             dependencies=[Depends(auth)])
    async def upload_artifact(project_id: str, rel_path: str,
                              request: Request) -> dict:
        project = get_project(project_id)
        role = store.role_for_path(rel_path)
        if role is None:
            raise HTTPException(400, f"path outside the artifact contract: {rel_path}")
        body = await request.body()
        if len(body) > config.max_upload_bytes:
            raise HTTPException(413, "payload too large")
        filename = Path(rel_path).name if role.kind is store.ArtifactKind.PLOT else None
        project.write_artifact(role, body, filename)
        return {"path": rel_path, "size": len(body)}

    @app.get(f"{API_PREFIX}/projects/{{project_id}}/artifacts/{{rel_path:path}}",
             dependencies=[Depends(auth)])
    def download_artifact(project_id: str, rel_path: str) -> Response:
        project = get_project(project_id)
        if store.role_for_path(rel_path) is None:
            raise HTTPException(400, f"path outside the artifact contract: {rel_path}")
        target = (project.root / rel_path)
        if not target.is_file():
            raise HTTPException(404, f"artifact not found: {rel_path}")
        return Response(content=target.read_bytes(),
                        media_type="application/octet-stream")

    @app.get(f"{API_PREFIX}/projects/{{project_id}}/manifest",
             dependencies=[Depends(auth)])
    def manifest(project_id: str) -> dict:
        return pipeline.read_manifest(get_project(project_id))

    @app.post(f"{API_PREFIX}/projects/{{project_id}}/runs",
              dependencies=[Depends(auth)], status_code=202)
    def start_run(project_id: str, body: StartRun) -> dict:
        if body.stage not in pipeline.STAGES:
            raise HTTPException(400, f"unknown stage: {body.stage}")
        project = get_project(project_id)
        record = manager.start(project, project_id, body)
        return {"run_id": record.run_id, "stage": record.stage}

    @app.get(f"{API_PREFIX}/runs/{{run_id}}", dependencies=[Depends(auth)])
    def run_status(run_id: str) -> dict:
        record = manager.runs.get(run_id)
        if record is None:
            raise HTTPException(404, f"no such run: {run_id}")
        return {"run_id": run_id, "stage": record.stage, "status": record.status,
                "project": record.project_id, "events": len(record.events)}

    @app.get(f"{API_PREFIX}/runs/{{run_id}}/events", dependencies=[Depends(auth)])
    def run_events(run_id: str) -> StreamingResponse:
        record = manager.runs.get(run_id)
        if record is None:
            raise HTTPException(404, f"no such run: {run_id}")

        def stream():
            cursor = 0
            while True:
                with record.cond:
                    while cursor >= len(record.events) and record.status == "running":
                        record.cond.wait(timeout=0.5)
                    batch = record.events[cursor:]
                for event in batch:
                    cursor += 1
                    yield (f"id: {event.get('seq', cursor - 1)}\n"
                           f"data: {json.dumps(event)}\n\n")
                    if event["kind"] in TERMINAL_EVENTS:
                        return
                if cursor >= len(record.events) and record.status != "running":
                    return

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def serve(config: ServiceConfig, ports: pipeline.Ports | None = None,
          host: str = "127.0.0.1", port: int = 8787) -> None:
    """Run the service under uvicorn. Raises BindError when the port is taken."""
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as exc:
        raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
    finally:
        probe.close()

    import uvicorn

    uvicorn.run(create_app(config, ports), host=host, port=port)
