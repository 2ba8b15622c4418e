"""Uniform port to chat-completion providers.

Real providers speak their public HTTP contracts; the ScriptedProvider plays
back canned responses so every pipeline behavior is testable offline and
bit-reproducible. Credentials come from environment variables only.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

from .errors import (
    AuthError,
    ProviderError,
    RateLimited,
    ScriptExhausted,
    UnsupportedModality,
)
from .messages import AgentMessage, ImagePart, TextPart


class Provider(Enum):
    OPENAI_COMPATIBLE = "openai"
    GOOGLE_COMPATIBLE = "google"
    ANTHROPIC_COMPATIBLE = "anthropic"
    SCRIPTED = "scripted"


@dataclass(frozen=True)
class ModelId:
    provider: Provider
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("model name must be non-empty")


@dataclass(frozen=True)
class ModelSpec:
    model: ModelId
    multimodal: bool


def _spec(provider: Provider, name: str, multimodal: bool) -> ModelSpec:
    return ModelSpec(ModelId(provider, name), multimodal)


# Registry preloaded with the supported hosted models. Entries are data, not
# policy: any stage accepts an override.
MODEL_REGISTRY: dict[str, ModelSpec] = {s.model.name: s for s in [
    _spec(Provider.OPENAI_COMPATIBLE, "gpt-5", True),
    _spec(Provider.OPENAI_COMPATIBLE, "gpt-5-mini", True),
    _spec(Provider.OPENAI_COMPATIBLE, "gpt-4o", True),
    _spec(Provider.OPENAI_COMPATIBLE, "gpt-4.1", True),
    _spec(Provider.OPENAI_COMPATIBLE, "gpt-4.1-mini", True),
    _spec(Provider.OPENAI_COMPATIBLE, "o3-mini", False),
    _spec(Provider.GOOGLE_COMPATIBLE, "gemini-2.5-pro", True),
    _spec(Provider.GOOGLE_COMPATIBLE, "gemini-2.5-flash", True),
    _spec(Provider.GOOGLE_COMPATIBLE, "gemini-2.0-flash", True),
    _spec(Provider.ANTHROPIC_COMPATIBLE, "claude-3-7-sonnet", True),
    _spec(Provider.ANTHROPIC_COMPATIBLE, "claude-4-opus", True),
    _spec(Provider.ANTHROPIC_COMPATIBLE, "claude-4.1-opus", True),
    _spec(Provider.ANTHROPIC_COMPATIBLE, "claude-4.5", True),
]}

# Per-stage preferences; coding stages get the strong coding models, review a
# critique-class multimodal model. Every stage accepts an override.
STAGE_DEFAULT_MODELS = {
    "idea_maker": "gpt-4o",
    "idea_hater": "claude-3-7-sonnet",
    "planner": "gpt-4.1",
    "methods": "gpt-4.1",
    "engineer": "gemini-2.5-pro",
    "researcher": "gpt-4.1",
    "paper": "gemini-2.5-pro",
    "review": "gemini-2.5-pro",
    "novelty": "gpt-4.1",
    "keywords": "gpt-4.1-mini",
    "summarizer": "o3-mini",
}

SCRIPTED_MODEL = "scripted"

ENV_KEYS = {
    Provider.OPENAI_COMPATIBLE: "OPENAI_API_KEY",
    Provider.GOOGLE_COMPATIBLE: "GOOGLE_API_KEY",
    Provider.ANTHROPIC_COMPATIBLE: "ANTHROPIC_API_KEY",
}


def resolve_model(name: str) -> ModelSpec:
    if name == SCRIPTED_MODEL:
        return ModelSpec(ModelId(Provider.SCRIPTED, SCRIPTED_MODEL), True)
    if name in MODEL_REGISTRY:
        return MODEL_REGISTRY[name]
    # Unknown names default to the OpenAI-compatible wire contract so local
    # proxies and new model ids keep working.
    return ModelSpec(ModelId(Provider.OPENAI_COMPATIBLE, name), True)


@dataclass
class ChatRequest:
    model: ModelId
    messages: list[AgentMessage]
    max_tokens: int = 4096
    temperature: float = 0.0
    agent: str | None = None  # requesting role, for script matching + logs

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @property
    def text(self) -> str:
        return "\n".join(m.text_content for m in self.messages)

    @property
    def image_parts(self) -> list[ImagePart]:
        return [p for m in self.messages for p in m.image_parts]


@dataclass
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(self.prompt_tokens + other.prompt_tokens,
                     self.completion_tokens + other.completion_tokens)


@dataclass
class Completion:
    text: str
    usage: Usage


class ChatProvider(Protocol):
    def complete(self, request: ChatRequest) -> Completion: ...


# --- scripted provider --------------------------------------------------------


@dataclass
class ScriptRule:
    """One (matcher, canned response) pair.

    A rule matches when every given condition holds: `contains` is a substring
    of the request's text, `agent` equals the requesting role, `model` equals
    the model name. `repeat` limits how many times the rule may fire
    (None = unlimited).
    """

    response: str
    contains: str | None = None
    agent: str | None = None
    model: str | None = None
    repeat: int | None = 1
    fired: int = 0

    def matches(self, request: ChatRequest) -> bool:
        if self.repeat is not None and self.fired >= self.repeat:
            return False
        if self.contains is not None and self.contains not in request.text:
            return False
        if self.agent is not None and self.agent != request.agent:
            return False
        if self.model is not None and self.model != request.model.name:
            return False
        return True


class ScriptedProvider:
    """Deterministic provider: ordered rules, optional strict mode.

    In strict mode an unmatched request raises ScriptExhausted, which keeps
    tests honest about every call the pipeline makes. All requests are kept in
    `captured` for introspection.
    """

    def __init__(self, rules: list[ScriptRule] | None = None, strict: bool = True):
        self.rules = list(rules or [])
        self.strict = strict
        self.captured: list[ChatRequest] = []

    @classmethod
    def sequence(cls, responses: list[str], strict: bool = True) -> "ScriptedProvider":
        return cls([ScriptRule(response=r) for r in responses], strict=strict)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProvider":
        """Load a script file.

        Schema: {"strict": bool, "rules": [{"response": str,
        "match": {"contains"?, "agent"?, "model"?}, "repeat"?: int|null}]}
        """
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = []
        for entry in raw.get("rules", []):
            match = entry.get("match", {})
            rules.append(ScriptRule(
                response=entry["response"],
                contains=match.get("contains"),
                agent=match.get("agent"),
                model=match.get("model"),
                repeat=entry.get("repeat", 1),
            ))
        return cls(rules, strict=raw.get("strict", True))

    def complete(self, request: ChatRequest) -> Completion:
        self.captured.append(request)
        for rule in self.rules:
            if rule.matches(request):
                rule.fired += 1
                return Completion(rule.response, _estimate_usage(request, rule.response))
        if self.strict:
            raise ScriptExhausted(
                f"no rule for request from agent={request.agent!r}: "
                f"{request.text[:120]!r}")
        echo = request.messages[-1].text_content if request.messages else ""
        return Completion(f"[scripted] {echo}", _estimate_usage(request, echo))


def _estimate_usage(request: ChatRequest, response: str) -> Usage:
    return Usage(prompt_tokens=len(request.text.split()),
                 completion_tokens=len(response.split()))


# --- HTTP providers -------------------------------------------------------------


def build_openai_payload(request: ChatRequest) -> dict:
    messages = []
    for m in request.messages:
        content: list[dict] = []
        for p in m.parts:
            if isinstance(p, TextPart):
                content.append({"type": "text", "text": p.text})
            else:
                content.append({"type": "image_url", "image_url": {
                    "url": f"data:{p.media_type};base64,{p.data_b64}"}})
        messages.append({"role": m.role, "content": content})
    return {
        "model": request.model.name,
        "messages": messages,
        "max_tokens": request.max_tokens,
        "temperature": request.temperature,
    }


def build_anthropic_payload(request: ChatRequest) -> dict:
    system_texts = [m.text_content for m in request.messages if m.role == "system"]
    messages = []
    for m in request.messages:
        if m.role == "system":
            continue
        content: list[dict] = []
        for p in m.parts:
            if isinstance(p, TextPart):
                content.append({"type": "text", "text": p.text})
            else:
                content.append({"type": "image", "source": {
                    "type": "base64", "media_type": p.media_type, "data": p.data_b64}})
        messages.append({"role": m.role, "content": content})
    payload = {
        "model": request.model.name,
        "max_tokens": request.max_tokens,
        "temperature": request.temperature,
        "messages": messages,
    }
    if system_texts:
        payload["system"] = "\n".join(system_texts)
    return payload


def build_google_payload(request: ChatRequest) -> dict:
    contents = []
    for m in request.messages:
        parts: list[dict] = []
        for p in m.parts:
            if isinstance(p, TextPart):
                parts.append({"text": p.text})
            else:
                parts.append({"inline_data": {"mime_type": p.media_type,
                                              "data": p.data_b64}})
        role = "model" if m.role == "assistant" else "user"
        contents.append({"role": role, "parts": parts})
    return {
        "contents": contents,
        "generationConfig": {
            "maxOutputTokens": request.max_tokens,
            "temperature": request.temperature,
        },
    }


class HttpProvider:
    """Thin client over the public chat-completions contracts."""

    def __init__(self, provider: Provider, base_url: str | None = None,
                 client=None):
        import httpx

        self.provider = provider
        self.base_url = base_url
        self._client = client or httpx.Client(timeout=120.0)

    def _api_key(self) -> str:
        key = os.environ.get(ENV_KEYS[self.provider], "")
        if not key:
            raise AuthError(f"{ENV_KEYS[self.provider]} is not set")
        return key

    def complete(self, request: ChatRequest) -> Completion:
        key = self._api_key()
        if self.provider is Provider.OPENAI_COMPATIBLE:
            url = (self.base_url or "https://api.openai.com") + "/v1/chat/completions"
            resp = self._post(url, build_openai_payload(request),
                              {"Authorization": f"Bearer {key}"})
            text = resp["choices"][0]["message"]["content"] or ""
            usage = resp.get("usage", {})
            return Completion(text, Usage(usage.get("prompt_tokens", 0),
                                          usage.get("completion_tokens", 0)))
        if self.provider is Provider.ANTHROPIC_COMPATIBLE:
            url = (self.base_url or "https://api.anthropic.com") + "/v1/messages"
            resp = self._post(url, build_anthropic_payload(request),
                              {"x-api-key": key, "anthropic-version": "2023-06-01"})
            text = "".join(b.get("text", "") for b in resp.get("content", []))
            usage = resp.get("usage", {})
            return Completion(text, Usage(usage.get("input_tokens", 0),
                                          usage.get("output_tokens", 0)))
        if self.provider is Provider.GOOGLE_COMPATIBLE:
            base = self.base_url or "https://generativelanguage.googleapis.com"
            url = f"{base}/v1beta/models/{request.model.name}:generateContent?key={key}"
            resp = self._post(url, build_google_payload(request), {})
            parts = resp["candidates"][0]["content"].get("parts", [])
            text = "".join(p.get("text", "") for p in parts)
            usage = resp.get("usageMetadata", {})
            return Completion(text, Usage(usage.get("promptTokenCount", 0),
                                          usage.get("candidatesTokenCount", 0)))
        raise ProviderError(f"no HTTP contract for provider {self.provider}")

    def _post(self, url: str, payload: dict, headers: dict) -> dict:
        import httpx

        try:
            resp = self._client.post(url, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise ProviderError(f"transport failure: {exc}", transient=True) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"provider rejected credentials ({resp.status_code})")
        if resp.status_code == 429:
            retry_after = resp.headers.get("Retry-After")
            raise RateLimited(retry_after=float(retry_after) if retry_after else None)
        if resp.status_code >= 500:
            raise ProviderError(f"provider error {resp.status_code}", transient=True)
        if resp.status_code >= 400:
            raise ProviderError(f"provider error {resp.status_code}: {resp.text[:200]}")
        return resp.json()


# --- gateway ----------------------------------------------------------------------


class LlmGateway:
    """Provider front-end with retry, modality checks and usage accounting."""

    def __init__(self, provider: ChatProvider | None = None,
                 max_attempts: int = 3, backoff_base: float = 0.5,
                 sleep: Callable[[float], None] = time.sleep,
                 model_resolver: Callable[[str], ModelSpec] = resolve_model,
                 on_call: Callable[[ChatRequest, Completion], None] | None = None,
                 throttle: float | None = None,
                 clock: Callable[[], float] = time.monotonic):
        import threading

        self.provider = provider
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.sleep = sleep
        self.model_resolver = model_resolver
        self.on_call = on_call
        self.throttle = throttle  # min seconds between requests per provider
        self.clock = clock
        self.usage_total = Usage()
        self.calls = 0
        self._throttle_lock = threading.Lock()
        self._last_request: dict[Provider, float] = {}

    def _apply_throttle(self, provider_kind: Provider) -> None:
        if not self.throttle:
            return
        with self._throttle_lock:
            now = self.clock()
            last = self._last_request.get(provider_kind)
            if last is not None and now - last < self.throttle:
                self.sleep(self.throttle - (now - last))
            self._last_request[provider_kind] = self.clock()

    def _provider_for(self, model: ModelId) -> ChatProvider:
        if self.provider is not None:
            return self.provider
        return HttpProvider(model.provider)

    def complete(self, request: ChatRequest) -> Completion:
        spec = self.model_resolver(request.model.name)
        if request.image_parts and not spec.multimodal:
            raise UnsupportedModality(
                f"model {request.model.name} does not accept image parts")
        provider = self._provider_for(request.model)
        attempt = 0
        while True:
            attempt += 1
            self._apply_throttle(request.model.provider)
            try:
                completion = provider.complete(request)
            except (RateLimited, ProviderError) as exc:
                transient = isinstance(exc, RateLimited) or exc.transient
                if not transient or attempt >= self.max_attempts:
                    raise
                delay = self.backoff_base * (2 ** (attempt - 1))
                if isinstance(exc, RateLimited) and exc.retry_after:
                    delay = max(delay, exc.retry_after)
                self.sleep(delay)
                continue
            self.calls += 1
            self.usage_total += completion.usage
            if self.on_call:
                self.on_call(request, completion)
            return completion

    def complete_multimodal(self, request: ChatRequest) -> Completion:
        """Same contract as complete(); named separately because callers that
        build image requests must go through the modality check."""
        if not request.image_parts:
            return self.complete(request)
        return self.complete(request)

    # Convenience wrapper used by the stage modules: one prompt in, text out.
    def complete_text(self, agent: str, prompt: str, model: str | None = None,
                      system: str | None = None,
                      images: list[ImagePart] | None = None,
                      max_tokens: int = 4096, temperature: float = 0.0) -> str:
        name = model or STAGE_DEFAULT_MODELS.get(agent, "gpt-4.1")
        spec = self.model_resolver(name)
        messages = []
        if system:
            messages.append(AgentMessage.text(agent, "system", system))
        parts: list = [TextPart(prompt)]
        if images:
            parts.extend(images)
        messages.append(AgentMessage(agent=agent, role="user", parts=parts))
        request = ChatRequest(model=spec.model, messages=messages,
                              max_tokens=max_tokens, temperature=temperature,
                              agent=agent)
        return self.complete(request).text


def scripted_gateway(rules_or_responses, strict: bool = True,
                     **kwargs) -> tuple[LlmGateway, ScriptedProvider]:
    """Build a gateway backed by a scripted provider; returns both."""
    if rules_or_responses and isinstance(rules_or_responses[0], str):
        provider = ScriptedProvider.sequence(list(rules_or_responses), strict=strict)
    else:
        provider = ScriptedProvider(list(rules_or_responses), strict=strict)
    resolver = kwargs.pop("model_resolver", None) or (
        lambda name: ModelSpec(ModelId(Provider.SCRIPTED, name or SCRIPTED_MODEL), True))
    return LlmGateway(provider=provider, model_resolver=resolver,
                      backoff_base=0.0, sleep=lambda _s: None, **kwargs), provider
