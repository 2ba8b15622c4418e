"""Exception taxonomy for the pipeline engine.

Filesystem problems reuse the builtin OSError family (PermissionError,
NotADirectoryError, FileNotFoundError); everything domain-specific derives
from LabpipeError so callers can catch the whole family at the facade.
"""


class LabpipeError(Exception):
    """Base class for all engine errors."""


# --- gateway ---------------------------------------------------------------

class GatewayError(LabpipeError):
    pass


class AuthError(GatewayError):
    pass


class RateLimited(GatewayError):
    def __init__(self, message: str = "rate limited", retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class ProviderError(GatewayError):
    def __init__(self, message: str, transient: bool = False):
        super().__init__(message)
        self.transient = transient


class ScriptExhausted(GatewayError):
    """Strict scripted provider received a request no rule matches."""


class UnsupportedModality(GatewayError):
    """Image parts sent to a model without image support."""


# --- planning & control ----------------------------------------------------

class MalformedPlan(LabpipeError):
    pass


class RoundCapExceeded(LabpipeError):
    pass


class TooManySteps(MalformedPlan):
    pass


class UnknownAgent(MalformedPlan):
    pass


class EmptyStep(MalformedPlan):
    pass


# --- stage modules ----------------------------------------------------------

class EmptyIdea(LabpipeError):
    pass


class SearchPortDown(LabpipeError):
    pass


class MalformedVerdict(LabpipeError):
    """Novelty agent reply did not parse after the allowed re-ask."""


class OffVocabulary(LabpipeError):
    def __init__(self, term: str):
        super().__init__(f"term not in vocabulary: {term!r}")
        self.term = term


class MissingArtifact(LabpipeError):
    def __init__(self, missing: list[str]):
        super().__init__("missing artifacts: " + ", ".join(missing))
        self.missing = missing


class EmptySection(LabpipeError):
    pass


class FigureDropped(LabpipeError):
    def __init__(self, label: str):
        super().__init__(f"figure lost during insertion: {label}")
        self.label = label


class CompileFailed(LabpipeError):
    """Typesetting failed for one checkpoint. Non-fatal: recorded, not raised
    across stage boundaries."""

    def __init__(self, version: int, log: str = ""):
        super().__init__(f"compile failed for version {version}")
        self.version = version
        self.log = log


class CiteSearchDown(LabpipeError):
    pass


class BadBibtex(LabpipeError):
    def __init__(self, arxiv_id: str):
        super().__init__(f"unparseable BibTeX for {arxiv_id}")
        self.arxiv_id = arxiv_id


class FetchFailed(LabpipeError):
    def __init__(self, url: str, reason: str = ""):
        super().__init__(f"fetch failed: {url}" + (f" ({reason})" if reason else ""))
        self.url = url


# --- sandbox -----------------------------------------------------------------

class SandboxTimeout(LabpipeError):
    def __init__(self, seconds: float, stdout: str = "", stderr: str = ""):
        super().__init__(f"execution exceeded {seconds}s")
        self.seconds = seconds
        self.stdout = stdout
        self.stderr = stderr


class SpawnError(LabpipeError):
    pass


# --- review ------------------------------------------------------------------

class CorruptPdf(LabpipeError):
    pass


class MissingReviewBlock(LabpipeError):
    pass


# --- service -----------------------------------------------------------------

class StageFailed(LabpipeError):
    """Wraps a stage error with the stage name attached."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause
