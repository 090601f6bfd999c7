"""Model access layer: endpoints, prompt templates, and response parsing.

Two endpoint flavors share one interface: an HTTP chat-completion client
with retries and rate limiting, and a scripted mock keyed by request digest
for deterministic tests. All parsing helpers are pure functions.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import requests

from .errors import (
    AuthError,
    ConfigError,
    EndpointUnavailable,
    ImageUnreadable,
    MalformedResponse,
    MissingVariable,
    UnscriptedRequest,
)

# Sentinel strings: they serialize directly into verdict logs.
NONE_SIGNAL = "None"
AMBIGUOUS = "Ambiguous"

TEMPLATE_NAMES = (
    "claim_extract",
    "qa_generate",
    "source_check",
    "visdep_check",
    "vision_answer",
    "figure_type_label",
    "question_type_label",
    "eval_zero_shot",
)

_IMAGE_MIME = {
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".gif": "image/gif",
    ".webp": "image/webp",
    ".bmp": "image/bmp",
}


@dataclass(frozen=True)
class ModelEndpointConfig:
    role: str  # "text" or "vision"
    model_name: str
    base_url: str = ""
    temperature: float = 1.0
    max_retries: int = 2  # retries after the first attempt: 3 attempts total
    timeout: float = 60.0
    api_key_env: str | None = None
    requests_per_minute: int | None = None

    def __post_init__(self):
        if self.role not in ("text", "vision"):
            raise ConfigError(f"endpoint role must be text or vision, got {self.role!r}")


@dataclass
class PromptTemplate:
    name: str
    body: str


@dataclass
class ModelTranscript:
    request_digest: str
    raw_response: str
    latency: float
    attempt_count: int


_VAR_RE = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")


def render_template(template: PromptTemplate, variables: dict[str, str]) -> str:
    """Substitute {{name}} markers; unknown extras are ignored."""

    def repl(m: re.Match) -> str:
        name = m.group(1)
        if name not in variables:
            raise MissingVariable(name, template.name)
        return str(variables[name])

    return _VAR_RE.sub(repl, template.body)


def load_templates(prompt_dir: str | Path | None = None) -> dict[str, PromptTemplate]:
    """Load all known templates from a directory (default: packaged assets)."""
    templates: dict[str, PromptTemplate] = {}
    if prompt_dir is None:
        root = resources.files("figqa").joinpath("prompts")
        for name in TEMPLATE_NAMES:
            ref = root.joinpath(f"{name}.txt")
            if not ref.is_file():
                raise ConfigError(f"packaged prompt template missing: {name}")
            templates[name] = PromptTemplate(name, ref.read_text(encoding="utf-8"))
        return templates
    directory = Path(prompt_dir)
    for name in TEMPLATE_NAMES:
        path = directory / f"{name}.txt"
        if not path.is_file():
            raise ConfigError(f"prompt template not found: {path}")
        templates[name] = PromptTemplate(name, path.read_text(encoding="utf-8"))
    return templates


def format_options(options: list[str]) -> str:
    """Render options as lettered lines: 'A. first\\nB. second...'."""
    return "\n".join(f"{chr(65 + i)}. {opt}" for i, opt in enumerate(options))


def request_digest(
    role: str,
    model_name: str,
    temperature: float,
    prompt: str,
    image_ref: str | None = None,
) -> str:
    """Stable hash identifying one logical model request."""
    payload = "\x1f".join([role, model_name, f"{temperature:g}", image_ref or "", prompt])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


_PATTERNS_RE = re.compile(r"<Patterns>(.*?)</Patterns>", re.DOTALL | re.IGNORECASE)
_OPTION_TAG_RE = re.compile(r"<option>(.*?)</option>", re.DOTALL | re.IGNORECASE)


def _is_bare_none(text: str) -> bool:
    return text.strip().rstrip(".").strip().lower() == "none"


def parse_patterns_block(response: str) -> list[str] | None:
    """Extract line-delimited claims from the first <Patterns> block.

    Returns None for the abstention signal (bare "None" response, empty tag,
    or a tag containing only "None"). Chatter outside the tags is ignored.
    """
    m = _PATTERNS_RE.search(response)
    if m is None:
        if _is_bare_none(response):
            return None
        raise MalformedResponse("no <Patterns> block and response is not 'None'")
    lines = [line.strip() for line in m.group(1).splitlines()]
    lines = [line for line in lines if line]
    if not lines or (len(lines) == 1 and _is_bare_none(lines[0])):
        return None
    return lines


_OPTION_STRIP_CHARS = " \t\n.,:;!?()[]{}<>*\"'"


def parse_option_tag(response: str, option_count: int) -> str:
    """Extract the selected letter from <option> tags.

    Returns a single uppercase letter, NONE_SIGNAL, or AMBIGUOUS. Raises
    MalformedResponse when no tag exists at all; callers treat that the same
    as AMBIGUOUS (fail-closed).
    """
    if not 2 <= option_count <= 26:
        raise ValueError("option_count must be in 2..26")
    tags = _OPTION_TAG_RE.findall(response)
    if not tags:
        raise MalformedResponse("no <option> tag in response")
    parsed = []
    for tag in tags:
        token = tag.strip(_OPTION_STRIP_CHARS)
        if token.lower() == "none":
            parsed.append(NONE_SIGNAL)
        elif len(token) == 1 and token.isalpha():
            parsed.append(token.upper())
        else:
            return AMBIGUOUS
    distinct = set(parsed)
    if len(distinct) != 1:
        return AMBIGUOUS
    value = parsed[0]
    if value == NONE_SIGNAL:
        return NONE_SIGNAL
    if not ("A" <= value <= chr(64 + option_count)):
        return AMBIGUOUS
    return value


class _TokenBucket:
    """Simple token bucket: capacity and refill rate from requests/minute."""

    def __init__(self, requests_per_minute: int):
        self.capacity = float(requests_per_minute)
        self.tokens = float(requests_per_minute)
        self.rate = requests_per_minute / 60.0
        self.updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self, sleep=time.sleep) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            sleep(wait)


class HttpEndpoint:
    """Chat-completion client over HTTP with retry, backoff, and rate limit."""

    def __init__(self, config: ModelEndpointConfig, sleep=time.sleep, session=None):
        self.config = config
        self._sleep = sleep
        self._session = session or requests.Session()
        self._bucket = (
            _TokenBucket(config.requests_per_minute)
            if config.requests_per_minute
            else None
        )

    @property
    def role(self) -> str:
        return self.config.role

    def _api_key(self) -> str | None:
        if not self.config.api_key_env:
            return None
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise AuthError(
                f"credential environment variable {self.config.api_key_env!r} is not set"
            )
        return key

    def _image_part(self, image_ref: str) -> dict:
        if re.match(r"^[a-z][a-z0-9+.-]*://", image_ref):
            return {"type": "image_url", "image_url": {"url": image_ref}}
        path = Path(image_ref)
        mime = _IMAGE_MIME.get(path.suffix.lower())
        if mime is None:
            raise ImageUnreadable(f"unsupported image format: {image_ref}")
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise ImageUnreadable(f"cannot read image {image_ref}: {exc}") from exc
        uri = f"data:{mime};base64,{base64.b64encode(data).decode('ascii')}"
        return {"type": "image_url", "image_url": {"url": uri}}

    def complete(self, prompt: str, image_ref: str | None = None) -> tuple[str, ModelTranscript]:
        cfg = self.config
        if image_ref is not None and cfg.role != "vision":
            raise ValueError("text endpoint cannot accept an image attachment")
        digest = request_digest(cfg.role, cfg.model_name, cfg.temperature, prompt, image_ref)
        if image_ref is not None:
            content: object = [
                {"type": "text", "text": prompt},
                self._image_part(image_ref),
            ]
        else:
            content = prompt
        payload = {
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": content}],
            "temperature": cfg.temperature,
        }
        headers = {"Content-Type": "application/json"}
        key = self._api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"

        start = time.monotonic()
        last_error = "no attempt made"
        for attempt in range(1, cfg.max_retries + 2):
            if self._bucket is not None:
                self._bucket.acquire(self._sleep)
            try:
                resp = self._session.post(
                    f"{cfg.base_url.rstrip('/')}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=cfg.timeout,
                )
            except requests.RequestException as exc:
                last_error = str(exc)
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
                if resp.status_code == 200:
                    try:
                        text = resp.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise EndpointUnavailable(
                            f"unparseable completion payload: {exc}"
                        ) from exc
                    transcript = ModelTranscript(
                        request_digest=digest,
                        raw_response=text,
                        latency=time.monotonic() - start,
                        attempt_count=attempt,
                    )
                    return text, transcript
                last_error = f"HTTP {resp.status_code}"
            if attempt <= cfg.max_retries:
                self._sleep(2 ** (attempt - 1))  # 1s, 2s, 4s...
        raise EndpointUnavailable(
            f"{cfg.model_name}: {last_error} after {cfg.max_retries + 1} attempts"
        )


class MockBackend:
    """Scripted response store shared by all mock endpoints of a run.

    The script maps request digests to either a single response string or a
    list consumed sequentially (for repeated identical requests such as vote
    triples). An unscripted digest is a hard test failure, never a silent
    default. Every served call is appended to an optional file ledger;
    crash_after=N hard-exits the process at the start of call N+1, before
    that call is ledgered, so the ledger only ever records completed calls.
    """

    CRASH_EXIT_CODE = 70

    def __init__(
        self,
        script: dict[str, str | list[str]],
        ledger_path: str | Path | None = None,
        crash_after: int | None = None,
    ):
        self.script = script
        self.ledger_path = Path(ledger_path) if ledger_path else None
        self.crash_after = crash_after
        self.calls: list[str] = []
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, script_path: str | Path, **kwargs) -> "MockBackend":
        with open(script_path, encoding="utf-8") as fh:
            script = json.load(fh)
        if not isinstance(script, dict):
            raise ConfigError(f"mock script {script_path} must be a JSON object")
        return cls(script, **kwargs)

    def endpoint(self, config: ModelEndpointConfig) -> "MockEndpoint":
        return MockEndpoint(config, self)

    def serve(
        self, config: ModelEndpointConfig, prompt: str, image_ref: str | None
    ) -> tuple[str, ModelTranscript]:
        digest = request_digest(
            config.role, config.model_name, config.temperature, prompt, image_ref
        )
        with self._lock:
            if self.crash_after is not None and len(self.calls) >= self.crash_after:
                os._exit(self.CRASH_EXIT_CODE)
            if digest not in self.script:
                raise UnscriptedRequest(
                    f"no scripted response for digest {digest[:16]}... "
                    f"(model {config.model_name}, prompt head {prompt[:80]!r})"
                )
            entry = self.script[digest]
            if isinstance(entry, list):
                i = self._cursor.get(digest, 0)
                if i >= len(entry):
                    raise UnscriptedRequest(
                        f"scripted responses exhausted for digest {digest[:16]}..."
                    )
                response = entry[i]
                self._cursor[digest] = i + 1
            else:
                response = entry
            self.calls.append(digest)
            if self.ledger_path is not None:
                with open(self.ledger_path, "a", encoding="utf-8") as fh:
                    fh.write(
                        json.dumps(
                            {
                                "digest": digest,
                                "model": config.model_name,
                                "image": image_ref is not None,
                            }
                        )
                        + "\n"
                    )
                    fh.flush()
                    os.fsync(fh.fileno())
        transcript = ModelTranscript(
            request_digest=digest,
            raw_response=response,
            latency=0.0,
            attempt_count=1,
        )
        return response, transcript


class MockEndpoint:
    """One role's view onto a shared MockBackend."""

    def __init__(self, config: ModelEndpointConfig, backend: MockBackend):
        self.config = config
        self.backend = backend

    @property
    def role(self) -> str:
        return self.config.role

    def complete(self, prompt: str, image_ref: str | None = None) -> tuple[str, ModelTranscript]:
        if image_ref is not None and self.config.role != "vision":
            raise ValueError("text endpoint cannot accept an image attachment")
        return self.backend.serve(self.config, prompt, image_ref)


def complete_text(endpoint, prompt: str) -> tuple[str, ModelTranscript]:
    if endpoint.role != "text":
        raise ValueError(f"complete_text requires a text endpoint, got {endpoint.role}")
    return endpoint.complete(prompt)


def complete_vision(endpoint, prompt: str, image_ref: str | None = None) -> tuple[str, ModelTranscript]:
    """Vision completion; image_ref may be None for no-figure control prompts."""
    if endpoint.role != "vision":
        raise ValueError(f"complete_vision requires a vision endpoint, got {endpoint.role}")
    return endpoint.complete(prompt, image_ref)
