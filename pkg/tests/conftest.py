import json

import pytest

from labpipe import init_project


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion."""
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid or report.when != "call":
                continue
            name = nodeid.split("::")[-1].removeprefix("test_")
            verdict = "PASS" if status == "passed" else "FAIL"
            lines.append(f"[ACCEPTANCE] {name}: {verdict}")
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
from labpipe.gateway import ScriptedProvider, ScriptRule, scripted_gateway
from labpipe.latex import BuiltinTypesetter, CompileResult


@pytest.fixture
def project(tmp_path):
    return init_project(tmp_path / "proj")


def make_pdf(n_pages: int, text: str = "hello") -> bytes:
    """Real multi-page PDF fixture via reportlab."""
    from io import BytesIO

    from reportlab.lib.pagesizes import letter
    from reportlab.pdfgen import canvas

    buf = BytesIO()
    pdf = canvas.Canvas(buf, pagesize=letter)
    for i in range(n_pages):
        pdf.drawString(72, 720, f"{text} page {i + 1}")
        pdf.showPage()
    pdf.save()
    return buf.getvalue()


def plan_json(*steps: tuple[str, str]) -> str:
    """Plan JSON reply for scripted planners: (agent, sub_task) pairs."""
    return json.dumps({"steps": [
        {"sub_task": sub_task, "sub_task_agent": agent,
         "bullet_points": [f"do {sub_task}"]}
        for agent, sub_task in steps
    ]})


def gateway_for(responses, strict=True):
    gw, provider = scripted_gateway(list(responses), strict=strict)
    return gw, provider


class FlakyTypesetter:
    """Fails on the configured versions (every attempt), succeeds elsewhere."""

    def __init__(self, fail_versions=()):
        self.fail_versions = set(fail_versions)
        self.calls = []
        self._ok = BuiltinTypesetter()

    def compile(self, tex_source, workdir, jobname):
        self.calls.append(jobname)
        version = int(jobname.rsplit("_v", 1)[1])
        if version in self.fail_versions:
            return CompileResult(False, None, f"seeded failure for {jobname}")
        return self._ok.compile(tex_source, workdir, jobname)


ANALYSIS_PLAN = plan_json(("engineer", "run the scripted analysis"),
                          ("researcher", "write the results report"))

ANALYSIS_SCRIPT = 'print("analysis OK")\nopen("fig1.png", "wb").write(b"PNG")'

RESULTS_WITH_FIG = (
    "The analysis prints OK and produces one plot.\n"
    "\\begin{figure}\\includegraphics{Plots/fig1.png}"
    "\\caption{scripted caption}\\label{fig:fig1}\\end{figure}\n"
    "Interpretation follows."
)

REVIEW_REPLY = ("\\begin{REVIEW}\nSolid scripted paper with one figure.\n"
                "Score: 7\n\\end{REVIEW}")


def full_run_rules():
    """Scripted provider rules covering every stage of an end-to-end run
    (fast idea/methods, planned analysis, paper without citations, review)."""
    return [
        # paper stage, matched on prompt shape (most specific first)
        ScriptRule(response="TITLE: Scripted Study\nABSTRACT: Fully scripted.",
                   contains="Write a title and abstract", repeat=None),
        ScriptRule(response="intro text", contains="Write the Introduction",
                   repeat=None),
        ScriptRule(response="paper methods text", contains="Write the Methods",
                   repeat=None),
        ScriptRule(response="base results text",
                   contains="Write the Results section", repeat=None),
        ScriptRule(response="conclusions text",
                   contains="Write the Conclusions", repeat=None),
        ScriptRule(response="reflected results text",
                   contains="Review and rewrite the Results", repeat=None),
        ScriptRule(response="a scripted caption", contains="Write a caption",
                   repeat=None),
        ScriptRule(response=RESULTS_WITH_FIG,
                   contains="Insert the following figures", repeat=None),
        ScriptRule(response=RESULTS_WITH_FIG,
                   contains="omitted these figures", repeat=None),
        ScriptRule(response=RESULTS_WITH_FIG,
                   contains="Rewrite and polish this Results", repeat=None),
        ScriptRule(response=RESULTS_WITH_FIG,
                   contains="Make a final pass over this Results", repeat=None),
        ScriptRule(response="polished section text",
                   contains="Make a final pass", repeat=None),
        ScriptRule(response="Computer Vision\nTime-Series Analysis",
                   contains="Candidates:", repeat=None),
        # planning (analysis is the only planned stage here)
        ScriptRule(response=ANALYSIS_PLAN, agent="planner", repeat=None),
        ScriptRule(response="plan is fine", agent="plan_reviewer", repeat=None),
        # stage agents
        ScriptRule(response="the refined scripted idea", agent="idea_maker",
                   repeat=None),
        ScriptRule(response="too narrow, sharpen it", agent="idea_hater",
                   repeat=None),
        ScriptRule(response="DECISION: new\nREASON: nothing similar found",
                   agent="novelty", repeat=None),
        ScriptRule(response="# Literature report\n\nThe idea is new.",
                   agent="summary", repeat=None),
        ScriptRule(response="fast methods text", agent="methods", repeat=None),
        ScriptRule(response=f"```python\n{ANALYSIS_SCRIPT}\n```",
                   agent="engineer", repeat=None),
        ScriptRule(response="## Results\n\nScripted results report.",
                   agent="researcher", repeat=None),
        ScriptRule(response=REVIEW_REPLY, agent="reviewer", repeat=None),
    ]


def full_run_ports():
    from labpipe.literature import ScriptedSearchPort
    from labpipe.pipeline import Ports

    gw, provider = scripted_gateway(full_run_rules())
    ports = Ports(gateway=gw, search=ScriptedSearchPort(),
                  typesetter=BuiltinTypesetter())
    return ports, provider


def rules_to_script_file(rules, path, strict=True):
    """Serialize ScriptRule objects into the documented script-file schema."""
    entries = []
    for rule in rules:
        match = {}
        if rule.contains is not None:
            match["contains"] = rule.contains
        if rule.agent is not None:
            match["agent"] = rule.agent
        if rule.model is not None:
            match["model"] = rule.model
        entries.append({"response": rule.response, "match": match,
                        "repeat": rule.repeat})
    path.write_text(json.dumps({"strict": strict, "rules": entries}))
    return path


from labpipe.gateway import scripted_gateway  # noqa: E402

__all__ = ["make_pdf", "plan_json", "gateway_for", "FlakyTypesetter",
           "ScriptedProvider", "ScriptRule", "full_run_rules", "full_run_ports",
           "ANALYSIS_PLAN", "REVIEW_REPLY"]
