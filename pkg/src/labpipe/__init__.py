"""labpipe: agentic research-pipeline engine over a file-based project store."""

from .gateway import (
    ChatRequest,
    LlmGateway,
    ModelId,
    Provider,
    ScriptedProvider,
    ScriptRule,
    scripted_gateway,
)
from .latex import Journal
from .pipeline import Ports, RunOptions, run_all, run_stage
from .planning import OrchestratorConfig, Plan, PlanStep, Session, SessionState
from .store import Project, init_project

__version__ = "0.1.0"

__all__ = [
    "ChatRequest",
    "Journal",
    "LlmGateway",
    "ModelId",
    "OrchestratorConfig",
    "Plan",
    "PlanStep",
    "Ports",
    "Project",
    "Provider",
    "RunOptions",
    "ScriptRule",
    "ScriptedProvider",
    "Session",
    "SessionState",
    "init_project",
    "run_all",
    "run_stage",
    "scripted_gateway",
    "__version__",
]
