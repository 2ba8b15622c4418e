import json
import socket
import time

import pytest
from fastapi.testclient import TestClient

from conftest import full_run_ports, full_run_rules
from labpipe.service import BindError, ServiceConfig, create_app, serve


def make_client(tmp_path, token=None, drain_timeout=2.0, ports=None,
                max_upload=10 * 1024 * 1024):
    if ports is None:
        ports, _ = full_run_ports()
    config = ServiceConfig(projects_root=tmp_path / "projects", token=token,
                           drain_timeout=drain_timeout,
                           max_upload_bytes=max_upload)
    app = create_app(config, ports=ports)
    return TestClient(app), config


def sse_events(client, run_id):
    events = []
    with client.stream("GET", f"/v1/runs/{run_id}/events") as response:
        assert response.headers["content-type"].startswith("text/event-stream")
        for line in response.iter_lines():
            if line.startswith("data: "):
                events.append(json.loads(line[len("data: "):]))
    return events


def wait_done(client, run_id, timeout=10.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/v1/runs/{run_id}").json()["status"]
        if status != "running":
            return status
        time.sleep(0.02)
    raise TimeoutError("run never finished")


class TestLifecycle:
    def test_start_stop_no_runs_clean(self, tmp_path):
        client, _ = make_client(tmp_path)
        with client:
            assert client.get("/v1/health").json() == {"status": "ok"}
        # exiting the context runs shutdown without error

    def test_bind_error_when_port_taken(self, tmp_path):
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
        try:
            with pytest.raises(BindError):
                serve(ServiceConfig(projects_root=tmp_path / "p"),
                      host="127.0.0.1", port=port)
        finally:
            sock.close()


class TestProjects:
    def test_create_list_get(self, tmp_path):
        client, _ = make_client(tmp_path)
        with client:
            created = client.post("/v1/projects", json={"name": "alpha"})
            assert created.status_code == 201
            assert client.get("/v1/projects").json() == [{"id": "alpha"}]
            info = client.get("/v1/projects/alpha").json()
            assert info["id"] == "alpha" and info["artifacts"] == []

    def test_unsafe_name_rejected(self, tmp_path):
        client, _ = make_client(tmp_path)
        with client:
            assert client.post("/v1/projects",
                               json={"name": "../evil"}).status_code == 400

    def test_missing_project_404(self, tmp_path):
        client, _ = make_client(tmp_path)
        with client:
            assert client.get("/v1/projects/ghost").status_code == 404


class TestArtifacts:
    def test_upload_download_round_trip(self, tmp_path):
        client, _ = make_client(tmp_path)
        with client:
            client.post("/v1/projects", json={"name": "p"})
            payload = "input description".encode()
            up = client.put("/v1/projects/p/artifacts/input.md", content=payload)
            assert up.status_code == 200
            down = client.get("/v1/projects/p/artifacts/input.md")
            assert down.status_code == 200 and down.content == payload
            listing = client.get("/v1/projects/p/artifacts").json()
            assert [a["path"] for a in listing] == ["input.md"]
            assert listing[0]["size"] == len(payload)

    def test_any_role_uploadable_for_human_in_the_loop(self, tmp_path):
        client, _ = make_client(tmp_path)
        with client:
            client.post("/v1/projects", json={"name": "p"})
            for rel in ("idea.md", "methods.md", "paper_v2.tex",
                        "Plots/fig.png"):
                assert client.put(f"/v1/projects/p/artifacts/{rel}",
                                  content=b"x").status_code == 200, rel

    def test_download_missing_referee_404(self, tmp_path):
        client, _ = make_client(tmp_path)
        with client:
            client.post("/v1/projects", json={"name": "p"})
            assert client.get(
                "/v1/projects/p/artifacts/referee.md").status_code == 404

    def test_off_contract_path_rejected(self, tmp_path):
        client, _ = make_client(tmp_path)
        with client:
            client.post("/v1/projects", json={"name": "p"})
            assert client.put("/v1/projects/p/artifacts/evil.sh",
                              content=b"x").status_code == 400
            assert client.get(
                "/v1/projects/p/artifacts/../secret").status_code in (400, 404)

    def test_payload_too_large_413(self, tmp_path):
        client, _ = make_client(tmp_path, max_upload=64)
        with client:
            client.post("/v1/projects", json={"name": "p"})
            resp = client.put("/v1/projects/p/artifacts/input.md",
                              content=b"x" * 65)
            assert resp.status_code == 413


class TestKeys:
    def test_presence_only_never_values(self, tmp_path, monkeypatch):
        monkeypatch.setenv("OPENAI_API_KEY", "sk-secret-value")
        monkeypatch.delenv("GOOGLE_API_KEY", raising=False)
        client, _ = make_client(tmp_path)
        with client:
            body = client.get("/v1/keys")
            payload = body.json()
            assert payload["openai"] is True
            assert payload["google"] is False
            assert "sk-secret-value" not in body.text


class TestRuns:
    def test_idea_run_events_and_artifact(self, tmp_path):
        client, _ = make_client(tmp_path)
        with client:
            client.post("/v1/projects", json={"name": "p"})
            client.put("/v1/projects/p/artifacts/input.md", content=b"brief")
            started = client.post("/v1/projects/p/runs",
                                  json={"stage": "idea", "mode": "fast"})
            assert started.status_code == 202
            run_id = started.json()["run_id"]
            assert wait_done(client, run_id) == "done"
            events = sse_events(client, run_id)
            kinds = [e["kind"] for e in events]
            assert kinds[0] == "stage_started"
            assert kinds[-1] == "stage_done"
            assert any(k == "agent_turn" for k in kinds)
            idea = client.get("/v1/projects/p/artifacts/idea.md")
            assert idea.content == b"the refined scripted idea"

    def test_conflict_on_second_concurrent_run(self, tmp_path):
        from labpipe.gateway import ScriptRule, scripted_gateway
        from labpipe.latex import BuiltinTypesetter
        from labpipe.pipeline import Ports

        class SlowProvider:
            def __init__(self, inner):
                self.inner = inner

            def complete(self, request):
                time.sleep(0.2)
                return self.inner.complete(request)

        gw, provider = scripted_gateway(full_run_rules())
        gw.provider = SlowProvider(gw.provider)
        ports = Ports(gateway=gw, typesetter=BuiltinTypesetter())
        client, _ = make_client(tmp_path, ports=ports, drain_timeout=5.0)
        with client:
            client.post("/v1/projects", json={"name": "p"})
            client.put("/v1/projects/p/artifacts/input.md", content=b"x")
            first = client.post("/v1/projects/p/runs", json={"stage": "idea"})
            assert first.status_code == 202
            second = client.post("/v1/projects/p/runs", json={"stage": "idea"})
            assert second.status_code == 409
            wait_done(client, first.json()["run_id"])

    def test_replay_equals_stream_for_finished_run(self, tmp_path):
        client, _ = make_client(tmp_path)
        with client:
            client.post("/v1/projects", json={"name": "p"})
            client.put("/v1/projects/p/artifacts/input.md", content=b"x")
            run_id = client.post("/v1/projects/p/runs",
                                 json={"stage": "idea"}).json()["run_id"]
            wait_done(client, run_id)
            first = sse_events(client, run_id)
            second = sse_events(client, run_id)  # buffered replay
            assert first == second
            assert [e["seq"] for e in first] == list(range(len(first)))

    def test_missing_run_404(self, tmp_path):
        client, _ = make_client(tmp_path)
        with client:
            assert client.get("/v1/runs/nope").status_code == 404
            assert client.get("/v1/runs/nope/events").status_code == 404

    def test_failed_stage_reports_failed(self, tmp_path):
        client, _ = make_client(tmp_path)
        with client:
            client.post("/v1/projects", json={"name": "p"})
            # no input.md: the idea stage fails on its dependency check
            run_id = client.post("/v1/projects/p/runs",
                                 json={"stage": "idea"}).json()["run_id"]
            assert wait_done(client, run_id) == "failed"
            events = sse_events(client, run_id)
            assert events[-1]["kind"] == "stage_failed"

    def test_unknown_stage_400(self, tmp_path):
        client, _ = make_client(tmp_path)
        with client:
            client.post("/v1/projects", json={"name": "p"})
            assert client.post("/v1/projects/p/runs",
                               json={"stage": "zap"}).status_code == 400

    def test_shutdown_marks_running_run_interrupted(self, tmp_path):
        from labpipe.gateway import scripted_gateway
        from labpipe.pipeline import Ports

        class StallingProvider:
            def complete(self, request):
                time.sleep(3.0)
                from labpipe.gateway import Completion, Usage

                return Completion("late", Usage())

        gw, _ = scripted_gateway([])
        gw.provider = StallingProvider()
        ports = Ports(gateway=gw)
        client, config = make_client(tmp_path, ports=ports, drain_timeout=0.05)
        with client:
            client.post("/v1/projects", json={"name": "p"})
            client.put("/v1/projects/p/artifacts/input.md", content=b"x")
            run_id = client.post("/v1/projects/p/runs",
                                 json={"stage": "idea"}).json()["run_id"]
            time.sleep(0.1)
        # context exit ran shutdown while the run was alive
        manifest = json.loads(
            (config.projects_root / "p" / "run_manifest.json").read_text())
        statuses = [r["status"] for r in manifest["runs"]
                    if r.get("run_id") == run_id]
        assert "interrupted" in statuses


class TestAuth:
    def test_token_required_when_configured(self, tmp_path):
        client, _ = make_client(tmp_path, token="sesame")
        with client:
            assert client.get("/v1/projects").status_code == 401
            ok = client.get("/v1/projects",
                            headers={"Authorization": "Bearer sesame"})
            assert ok.status_code == 200
            bad = client.get("/v1/projects",
                             headers={"Authorization": "Bearer wrong"})
            assert bad.status_code == 401
