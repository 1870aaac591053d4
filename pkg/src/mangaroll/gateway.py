"""Uniform clients for the three generative services (image captioning, text
generation, image generation) with retries, rate limiting, and a
record/replay fixture store for deterministic runs.

Every request carries an idempotency key: a content digest of its payload.
Replay mode resolves responses purely from the fixture store and never
touches the network; a missing key is a hard error.
"""
from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    CaptionServiceError,
    GenAiError,
    ImageServiceError,
    LlmServiceError,
    MissingFixture,
    OversizePayload,
    StageCountMismatch,
    TemplateSlotError,
    UnparseableResponse,
)

CAPTION_URL_ENV = "MANGAROLL_CAPTION_URL"
LLM_URL_ENV = "MANGAROLL_LLM_URL"
IMAGE_URL_ENV = "MANGAROLL_IMAGE_URL"
API_KEY_ENVS = {
    "caption": "MANGAROLL_CAPTION_KEY",
    "complete": "MANGAROLL_LLM_KEY",
    "generate_image": "MANGAROLL_IMAGE_KEY",
}

MAX_REQUEST_BYTES = 32 * 1024 * 1024

_SLOT_RE = re.compile(r"\{[a-z_]+\}")


def load_template(name: str) -> str:
    return resources.files("mangaroll.prompts").joinpath(f"{name}.txt").read_text("utf-8").strip()


def fill_template(text: str, **slots) -> str:
    """Substitute {slot} markers; any marker left unfilled is a hard error."""
    out = text
    for key, value in slots.items():
        out = out.replace("{" + key + "}", str(value))
    leftover = _SLOT_RE.search(out)
    if leftover:
        raise TemplateSlotError(f"unfilled template slot {leftover.group(0)}")
    return out


@dataclass
class StyleSpec:
    palette: str = "black_white"  # black_white | color
    relevance: float = 0.5
    extra_directives: str = ""

    def __post_init__(self):
        if not 0.0 <= self.relevance <= 1.0:
            raise ValueError(f"relevance {self.relevance} outside [0, 1]")
        if self.palette not in ("black_white", "color"):
            raise ValueError(f"unknown palette {self.palette!r}")

    def to_dict(self) -> dict:
        return {
            "palette": self.palette,
            "relevance": self.relevance,
            "extra_directives": self.extra_directives,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StyleSpec":
        return cls(
            palette=d.get("palette", "black_white"),
            relevance=float(d.get("relevance", 0.5)),
            extra_directives=d.get("extra_directives", ""),
        )


def compose_image_prompt(subject: str, style: StyleSpec, with_reference: bool) -> str:
    """Assemble the full outgoing image prompt from the style and subject."""
    parts = []
    if with_reference:
        relevance_pct = int(round(style.relevance * 100))
        parts.append(fill_template(load_template("image_style"), relevance=relevance_pct))
    parts.append(load_template(f"palette_{style.palette}"))
    if style.extra_directives:
        parts.append(style.extra_directives)
    parts.append(subject)
    return "\n\n".join(p for p in parts if p)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def idempotency_key(kind: str, payload: dict) -> str:
    digest = hashlib.sha256()
    digest.update(canonical_json({"kind": kind, "payload": payload}).encode("utf-8"))
    return digest.hexdigest()


def encode_png(image: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    from PIL import Image

    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


class FixtureStore:
    """Directory of responses, one file per idempotency key.

    File layout: one JSON metadata line, then the raw response body. The
    format stays diff-able and safe to check into test fixtures.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.fixture"

    def has(self, key: str) -> bool:
        return self._path(key).is_file()

    def put(self, key: str, kind: str, body: bytes):
        meta = canonical_json({"key": key, "kind": kind}).encode("utf-8")
        self._path(key).write_bytes(meta + b"\n" + body)

    def get(self, key: str) -> bytes:
        path = self._path(key)
        if not path.is_file():
            raise MissingFixture(f"no recorded response for key {key}")
        data = path.read_bytes()
        nl = data.find(b"\n")
        return data[nl + 1 :]


class TokenBucket:
    """Serializes bursts down to a configured requests/second rate."""

    def __init__(self, rate_per_s: float, clock=time.monotonic, sleep=time.sleep):
        self.interval = 1.0 / rate_per_s
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_at = 0.0

    def acquire(self):
        with self._lock:
            now = self._clock()
            wait = self._next_at - now
            self._next_at = max(now, self._next_at) + self.interval
        if wait > 0:
            self._sleep(wait)


class TransientServiceError(Exception):
    """Internal marker: this attempt failed but a retry may succeed."""


class LiveTransport:
    """JSON-over-HTTP transport for the three services.

    Image responses arrive as base64 in the body or as a URL the transport
    fetches; callers always see {"image_b64": ...}.
    """

    def __init__(self, urls: dict | None = None, timeout: float = 60.0):
        env_urls = {
            "caption": os.environ.get(CAPTION_URL_ENV),
            "complete": os.environ.get(LLM_URL_ENV),
            "generate_image": os.environ.get(IMAGE_URL_ENV),
        }
        self.urls = {**env_urls, **(urls or {})}
        self.timeout = timeout

    def __call__(self, kind: str, body: dict) -> dict:
        import requests

        url = self.urls.get(kind)
        if not url:
            raise GenAiError(f"no endpoint configured for {kind} service")
        headers = {}
        api_key = os.environ.get(API_KEY_ENVS[kind], "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            resp = requests.post(url, json=body, headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransientServiceError(str(exc)) from exc
        if resp.status_code >= 500:
            raise TransientServiceError(f"{kind} service returned {resp.status_code}")
        if resp.status_code != 200:
            raise GenAiError(f"{kind} service returned {resp.status_code}: {resp.text[:200]}")
        doc = resp.json()
        if kind == "generate_image" and "image_b64" not in doc and doc.get("image_url"):
            fetched = requests.get(doc["image_url"], timeout=self.timeout)
            if fetched.status_code != 200:
                raise TransientServiceError(f"image fetch returned {fetched.status_code}")
            doc = {"image_b64": base64.b64encode(fetched.content).decode("ascii")}
        return doc


_SERVICE_ERRORS = {
    "caption": CaptionServiceError,
    "complete": LlmServiceError,
    "generate_image": ImageServiceError,
}


@dataclass
class ImageResult:
    image: np.ndarray
    prompt_text: str
    key: str


class GenAiGateway:
    """One client object for all three services, in live/record/replay mode."""

    def __init__(
        self,
        mode: str = "live",
        store: FixtureStore | None = None,
        transport=None,
        max_retries: int = 3,
        backoff_s: float = 0.5,
        rate_per_s: float | None = None,
        sleep=time.sleep,
    ):
        if mode not in ("live", "record", "replay"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode in ("record", "replay") and store is None:
            raise ValueError(f"{mode} mode needs a fixture store")
        self.mode = mode
        self.store = store
        self.transport = transport if transport is not None else LiveTransport()
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._sleep = sleep
        self._buckets = (
            {k: TokenBucket(rate_per_s, sleep=sleep) for k in _SERVICE_ERRORS}
            if rate_per_s
            else None
        )
        self.retry_counts: dict[str, int] = {}

    # -- plumbing --

    def _roundtrip(self, kind: str, key: str, body: dict, encode_response) -> bytes:
        if self.mode == "replay":
            return self.store.get(key)
        error_cls = _SERVICE_ERRORS[kind]
        body = {**body, "idempotency_key": key}
        last = None
        for attempt in range(self.max_retries + 1):
            if self._buckets:
                self._buckets[kind].acquire()
            try:
                doc = self.transport(kind, body)
                raw = encode_response(doc)
                break
            except TransientServiceError as exc:
                last = exc
                self.retry_counts[key] = attempt + 1
                if attempt == self.max_retries:
                    raise error_cls(f"{kind} failed after {attempt + 1} attempts: {exc}") from exc
                self._sleep(self.backoff_s * (2**attempt))
            except GenAiError as exc:
                if isinstance(exc, error_cls):
                    raise
                raise error_cls(str(exc)) from exc
            except Exception as exc:
                raise error_cls(f"{kind} transport failure: {exc}") from exc
        else:  # pragma: no cover - loop always breaks or raises
            raise error_cls(str(last))
        if self.mode == "record":
            self.store.put(key, kind, raw)
        return raw

    # -- operations --

    def caption(self, image: np.ndarray) -> str:
        png = encode_png(image)
        image_sha = hashlib.sha256(png).hexdigest()
        key = idempotency_key("caption", {"image_sha256": image_sha})
        body = {"image_b64": base64.b64encode(png).decode("ascii")}

        def encode(doc: dict) -> bytes:
            text = doc.get("caption") or doc.get("text")
            if not text or not isinstance(text, str):
                raise CaptionServiceError("caption response missing text")
            return text.encode("utf-8")

        raw = self._roundtrip("caption", key, body, encode)
        text = raw.decode("utf-8")
        if not text:
            raise CaptionServiceError("empty caption")
        return text

    def complete(self, prompt: str, max_tokens: int = 1024, temperature: float = 0.0) -> str:
        if not prompt:
            raise ValueError("empty prompt")
        key = idempotency_key("complete", {"prompt": prompt})
        body = {"prompt": prompt, "max_tokens": max_tokens, "temperature": temperature}

        def encode(doc: dict) -> bytes:
            text = doc.get("text")
            if text is None or not isinstance(text, str):
                raise LlmServiceError("completion response missing text")
            return text.encode("utf-8")

        return self._roundtrip("complete", key, body, encode).decode("utf-8")

    def generate_image(
        self,
        subject: str,
        reference_image: np.ndarray | None = None,
        style: StyleSpec | None = None,
    ) -> ImageResult:
        if not subject:
            raise ValueError("empty prompt")
        style = style or StyleSpec()
        prompt_text = compose_image_prompt(subject, style, reference_image is not None)
        payload: dict = {"prompt": prompt_text}
        body: dict = {"prompt": prompt_text}
        if reference_image is not None:
            ref_png = encode_png(reference_image)
            payload["reference_sha256"] = hashlib.sha256(ref_png).hexdigest()
            body["reference_image_b64"] = base64.b64encode(ref_png).decode("ascii")
        key = idempotency_key("generate_image", payload)
        if len(canonical_json(body)) > MAX_REQUEST_BYTES:
            raise OversizePayload("image request exceeds size limit")

        def encode(doc: dict) -> bytes:
            b64 = doc.get("image_b64")
            if not b64:
                raise ImageServiceError("image response missing image data")
            return base64.b64decode(b64)

        raw = self._roundtrip("generate_image", key, body, encode)
        try:
            image = decode_png(raw)
        except Exception as exc:
            raise ImageServiceError(f"undecodable image body: {exc}") from exc
        return ImageResult(image=image, prompt_text=prompt_text, key=key)

    def athlete_career(self, name: str, sport: str, stage_count: int) -> list[str]:
        """Retrieve-and-summarize career stages, exactly ``stage_count`` of them."""
        if not name:
            raise ValueError("empty athlete name")
        if stage_count < 1:
            raise ValueError("stage_count must be >= 1")
        prompt = fill_template(
            load_template("career_search"), sport=sport, athlete=name, stage_count=stage_count
        )
        text = self.complete(prompt)
        stages = parse_stage_texts(text)
        if len(stages) != stage_count:
            text = self.complete(prompt + load_template("repair"))
            stages = parse_stage_texts(text)
            if len(stages) != stage_count:
                raise StageCountMismatch(
                    f"asked for {stage_count} career stages, got {len(stages)}"
                )
        return stages


_NUMBERED_RE = re.compile(r"^\s*\d+\s*[.):-]\s*(.+)$")


def parse_stage_texts(text: str) -> list[str]:
    """Accept a JSON array, a numbered list, or paragraph-per-stage text."""
    stripped = text.strip()
    if stripped.startswith("["):
        try:
            doc = json.loads(stripped)
            if isinstance(doc, list) and all(isinstance(s, str) for s in doc):
                return [s.strip() for s in doc if s.strip()]
        except json.JSONDecodeError:
            pass
    numbered = [m.group(1).strip() for m in map(_NUMBERED_RE.match, stripped.splitlines()) if m]
    if numbered:
        return numbered
    paragraphs = [p.strip() for p in re.split(r"\n\s*\n", stripped) if p.strip()]
    if len(paragraphs) > 1:
        return paragraphs
    return [ln.strip() for ln in stripped.splitlines() if ln.strip()]


def parse_json_object(text: str) -> dict:
    """Parse a strict JSON object, tolerating surrounding prose or fences."""
    stripped = text.strip()
    try:
        doc = json.loads(stripped)
        if isinstance(doc, dict):
            return doc
    except json.JSONDecodeError:
        pass
    start = stripped.find("{")
    end = stripped.rfind("}")
    if start != -1 and end > start:
        try:
            doc = json.loads(stripped[start : end + 1])
            if isinstance(doc, dict):
                return doc
        except json.JSONDecodeError:
            pass
    raise UnparseableResponse(f"not a JSON object: {stripped[:120]!r}")
