"""Chat message model shared by the gateway, sessions and the transcript log.

A message is one turn by a named agent; its content is an ordered list of
text and image parts so multimodal requests and plain text share one shape.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    """Base64-encoded raster, page renders mostly."""

    data_b64: str
    media_type: str = "image/png"


Part = TextPart | ImagePart


@dataclass
class AgentMessage:
    agent: str
    role: str  # system | user | assistant
    parts: list[Part]
    timestamp: float = field(default_factory=time.time)
    meta: dict = field(default_factory=dict)

    @classmethod
    def text(cls, agent: str, role: str, text: str, **meta) -> "AgentMessage":
        return cls(agent=agent, role=role, parts=[TextPart(text)], meta=dict(meta))

    @property
    def text_content(self) -> str:
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))

    @property
    def image_parts(self) -> list[ImagePart]:
        return [p for p in self.parts if isinstance(p, ImagePart)]

    def to_json(self) -> str:
        parts = []
        for p in self.parts:
            if isinstance(p, TextPart):
                parts.append({"type": "text", "text": p.text})
            else:
                parts.append({"type": "image", "media_type": p.media_type,
                              "data_b64": p.data_b64})
        return json.dumps({
            "agent": self.agent,
            "role": self.role,
            "parts": parts,
            "timestamp": self.timestamp,
            "meta": self.meta,
        }, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "AgentMessage":
        raw = json.loads(line)
        parts: list[Part] = []
        for p in raw.get("parts", []):
            if p.get("type") == "image":
                parts.append(ImagePart(p["data_b64"], p.get("media_type", "image/png")))
            else:
                parts.append(TextPart(p.get("text", "")))
        return cls(agent=raw["agent"], role=raw["role"], parts=parts,
                   timestamp=raw.get("timestamp", 0.0), meta=raw.get("meta", {}))
