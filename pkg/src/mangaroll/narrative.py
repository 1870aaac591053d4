"""Narrative understanding: caption sampled frames, aggregate them into a
video understanding, extract the four-role story outline, mark gaps, and
draft fill prompts.

All service traffic goes through the gateway; this module owns the prompt
templates and the strict response schemas (one repair retry, then reject).
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import CaptionServiceError, UnparseableResponse
from .gateway import (
    GenAiGateway,
    StyleSpec,
    compose_image_prompt,
    fill_template,
    load_template,
    parse_json_object,
)
from .highlights import HighlightSpan
from .media import Frame, MediaInfo
from .shots import Shot

ROLES = ("opening", "conflict", "climax", "conclusion")
ENTITY_ROLES = ("athlete", "teammate", "coach", "spectator", "other")
CONTEXT_ENTITY_ROLES = ("teammate", "coach", "spectator")

# Which B-roll kind best fills a missing story role.
GAP_KIND_BY_ROLE = {"opening": "T2", "conflict": "T3", "climax": "T1", "conclusion": "T3"}

DEFAULT_CAPTIONS_PER_SHOT = 3


@dataclass
class Caption:
    frame_index: int
    text: str
    source: str = "caption_service"  # caption_service | fixture

    def __post_init__(self):
        if not self.text:
            raise ValueError("empty caption text")


@dataclass
class Entity:
    name: str
    role: str

    def __post_init__(self):
        if self.role not in ENTITY_ROLES:
            raise ValueError(f"unknown entity role {self.role!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "role": self.role}


@dataclass
class VideoUnderstanding:
    summary: str
    entities: list[Entity]
    sport: str

    def __post_init__(self):
        if not self.summary:
            raise ValueError("empty summary")

    def to_dict(self) -> dict:
        return {
            "summary": self.summary,
            "sport": self.sport,
            "entities": [e.to_dict() for e in self.entities],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VideoUnderstanding":
        return cls(
            summary=d["summary"],
            sport=d.get("sport", ""),
            entities=[Entity(e["name"], e["role"]) for e in d.get("entities", [])],
        )


@dataclass
class NarrativeElement:
    role: str
    status: str  # covered | missing
    anchor: tuple[float, float]
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "status": self.status,
            "start_s": self.anchor[0],
            "end_s": self.anchor[1],
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NarrativeElement":
        return cls(
            role=d["role"],
            status=d["status"],
            anchor=(float(d["start_s"]), float(d["end_s"])),
            note=d.get("note", ""),
        )


@dataclass
class NarrativeOutline:
    elements: list[NarrativeElement]

    def element(self, role: str) -> NarrativeElement:
        return next(e for e in self.elements if e.role == role)

    def to_dict(self) -> dict:
        return {"elements": [e.to_dict() for e in self.elements]}

    @classmethod
    def from_dict(cls, d: dict) -> "NarrativeOutline":
        return cls(elements=[NarrativeElement.from_dict(e) for e in d["elements"]])


@dataclass
class NarrativeGap:
    role: str
    anchor: tuple[float, float]
    suggested_kind: str  # T1 | T2 | T3

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "start_s": self.anchor[0],
            "end_s": self.anchor[1],
            "kind": self.suggested_kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NarrativeGap":
        return cls(
            role=d["role"],
            anchor=(float(d["start_s"]), float(d["end_s"])),
            suggested_kind=d["kind"],
        )


@dataclass
class FillSuggestion:
    gap: NarrativeGap
    prompt_text: str
    kind: str

    def to_dict(self) -> dict:
        return {"gap": self.gap.to_dict(), "prompt_text": self.prompt_text, "kind": self.kind}


def sample_caption_frames(shots: Sequence[Shot], per_shot: int, seed: int) -> list[int]:
    """Seeded uniform choice without replacement, per shot, clamped to shot size."""
    rng = random.Random(seed)
    picked: list[int] = []
    for shot in shots:
        k = min(per_shot, len(shot))
        picked.extend(sorted(rng.sample(range(shot.start, shot.end), k)))
    return picked


def describe_video(
    shots: Sequence[Shot],
    frame_loader: Callable[[Sequence[int]], dict[int, Frame]],
    gateway: GenAiGateway,
    per_shot: int = DEFAULT_CAPTIONS_PER_SHOT,
    seed: int = 0,
    failures: list[str] | None = None,
) -> list[Caption]:
    """Caption seeded-random frames from every shot, ordered by frame index.

    Per-frame service failures (after gateway retries) are skipped and
    reported through ``failures``; only a fully failed batch raises.
    """
    if not shots:
        raise ValueError("no shots to describe")
    indices = sample_caption_frames(shots, per_shot, seed)
    frames = frame_loader(indices)
    source = "fixture" if gateway.mode == "replay" else "caption_service"
    captions = []
    errors: list[str] = []
    for idx in sorted(set(indices)):
        try:
            text = gateway.caption(frames[idx].pixels)
        except CaptionServiceError as exc:
            errors.append(f"caption failed for frame {idx}: {exc}")
            continue
        captions.append(Caption(frame_index=idx, text=text, source=source))
    if failures is not None:
        failures.extend(errors)
    if errors and not captions:
        raise CaptionServiceError("; ".join(errors))
    return captions


def _parse_understanding(text: str) -> VideoUnderstanding:
    doc = parse_json_object(text)
    summary = doc.get("summary")
    sport = doc.get("sport")
    if not isinstance(summary, str) or not summary.strip():
        raise UnparseableResponse("understanding lacks a summary")
    if not isinstance(sport, str) or not sport.strip():
        raise UnparseableResponse("understanding lacks a sport")
    entities = []
    for raw in doc.get("entities", []):
        if not isinstance(raw, dict) or "name" not in raw or "role" not in raw:
            raise UnparseableResponse(f"bad entity entry {raw!r}")
        if raw["role"] not in ENTITY_ROLES:
            raise UnparseableResponse(f"bad entity role {raw['role']!r}")
        entities.append(Entity(name=str(raw["name"]), role=raw["role"]))
    return VideoUnderstanding(summary=summary.strip(), entities=entities, sport=sport.strip())


def _complete_structured(gateway: GenAiGateway, prompt: str, parser):
    """One service call plus at most one format-repair retry."""
    try:
        return parser(gateway.complete(prompt))
    except UnparseableResponse:
        return parser(gateway.complete(prompt + load_template("repair")))


def build_understanding(
    captions: Sequence[Caption], media_info: MediaInfo, gateway: GenAiGateway
) -> VideoUnderstanding:
    if not captions:
        raise ValueError("no captions")
    lines = "\n".join(f"- frame {c.frame_index}: {c.text}" for c in captions)
    prompt = fill_template(load_template("understanding"), captions=lines)
    return _complete_structured(gateway, prompt, _parse_understanding)


def _parse_outline(text: str, duration: float) -> NarrativeOutline:
    doc = parse_json_object(text)
    raw_elements = doc.get("elements")
    if not isinstance(raw_elements, list):
        raise UnparseableResponse("outline lacks an elements list")
    by_role: dict[str, NarrativeElement] = {}
    for raw in raw_elements:
        if not isinstance(raw, dict):
            raise UnparseableResponse(f"bad element {raw!r}")
        role = raw.get("role")
        status = raw.get("status")
        if role not in ROLES or role in by_role:
            raise UnparseableResponse(f"bad or duplicate role {role!r}")
        if status not in ("covered", "missing"):
            raise UnparseableResponse(f"bad status {status!r}")
        try:
            start = float(raw["start_s"])
            end = float(raw["end_s"])
        except (KeyError, TypeError, ValueError) as exc:
            raise UnparseableResponse(f"bad anchor in {raw!r}") from exc
        start = min(max(start, 0.0), duration)
        end = min(max(end, start), duration)
        by_role[role] = NarrativeElement(
            role=role, status=status, anchor=(start, end), note=str(raw.get("note", ""))
        )
    if set(by_role) != set(ROLES):
        raise UnparseableResponse(f"roles missing: {sorted(set(ROLES) - set(by_role))}")
    return NarrativeOutline(elements=[by_role[r] for r in ROLES])


def extract_narrative(
    understanding: VideoUnderstanding,
    highlights: Sequence[HighlightSpan],
    duration: float,
    frame_rate: float,
    gateway: GenAiGateway,
) -> NarrativeOutline:
    """Ask for the four story roles; re-anchor the climax onto the top highlight."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    spans = ", ".join(
        f"[{h.shot.start / frame_rate:.2f}, {h.shot.end / frame_rate:.2f}]" for h in highlights
    ) or "none detected"
    prompt = fill_template(
        load_template("outline"),
        duration=f"{duration:.2f}",
        summary=understanding.summary,
        sport=understanding.sport,
        highlight_spans=spans,
    )
    outline = _complete_structured(gateway, prompt, lambda t: _parse_outline(t, duration))
    if highlights:
        top = min(highlights, key=lambda h: h.rank)
        climax = outline.element("climax")
        climax.anchor = (
            min(max(top.shot.start / frame_rate, 0.0), duration),
            min(max(top.shot.end / frame_rate, 0.0), duration),
        )
    return outline


def identify_gaps(outline: NarrativeOutline) -> list[NarrativeGap]:
    """One gap per missing element, kinds per the fixed role mapping."""
    gaps = [
        NarrativeGap(role=e.role, anchor=e.anchor, suggested_kind=GAP_KIND_BY_ROLE[e.role])
        for e in outline.elements
        if e.status == "missing"
    ]
    return sorted(gaps, key=lambda g: (g.anchor[0], g.anchor[1]))


def context_entities(understanding: VideoUnderstanding) -> list[Entity]:
    return [e for e in understanding.entities if e.role in CONTEXT_ENTITY_ROLES]


def athlete_name(understanding: VideoUnderstanding) -> str | None:
    for e in understanding.entities:
        if e.role == "athlete":
            return e.name
    return None


def freeze_subject(understanding: VideoUnderstanding) -> str:
    return fill_template(load_template("freeze_subject"), sport=understanding.sport)


def context_subject(understanding: VideoUnderstanding, ordinal: int) -> str:
    """Deterministic reaction-shot subject, cycling through known bystanders."""
    entities = context_entities(understanding)
    if not entities:
        return fill_template(load_template("context_fallback"), sport=understanding.sport)
    entity = entities[ordinal % len(entities)]
    subject = fill_template(
        load_template("context_subject"),
        role=entity.role,
        name=entity.name,
        sport=understanding.sport,
    )
    cycle = ordinal // len(entities)
    if cycle:
        subject += f" Alternative take {cycle + 1}."
    return subject


def propose_fills(
    gaps: Sequence[NarrativeGap],
    understanding: VideoUnderstanding,
    style: StyleSpec | None = None,
    stage_count: int = 3,
) -> list[FillSuggestion]:
    """One auditable prompt per gap, exactly what generation would send."""
    if not gaps:
        raise ValueError("no gaps")
    style = style or StyleSpec()
    suggestions = []
    for gap in gaps:
        if gap.suggested_kind == "T1":
            prompt = compose_image_prompt(freeze_subject(understanding), style, with_reference=True)
        elif gap.suggested_kind == "T2":
            name = athlete_name(understanding) or "the featured athlete"
            prompt = fill_template(
                load_template("career_search"),
                sport=understanding.sport,
                athlete=name,
                stage_count=stage_count,
            )
        else:
            prompt = compose_image_prompt(
                context_subject(understanding, 0), style, with_reference=False
            )
        suggestions.append(FillSuggestion(gap=gap, prompt_text=prompt, kind=gap.suggested_kind))
    return suggestions
