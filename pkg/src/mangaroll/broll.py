"""Production of the three B-roll kinds as styled stills with provenance.

T1 freezes the peak-motion frame of a highlight through image-to-image
generation; T2 turns retrieved career stages into a strip of illustrations
(all-or-nothing, a partial career reads worse than none); T3 renders
bystander reaction shots (best-effort, items are independent).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GenAiError, MissingAsset
from .gateway import GenAiGateway, StyleSpec, canonical_json, decode_png, encode_png
from .highlights import HighlightSpan
from .media import SampledClip
from .narrative import (
    NarrativeGap,
    VideoUnderstanding,
    context_subject,
    freeze_subject,
)

KINDS = ("T1", "T2", "T3")


def asset_id(kind: str, prompt_text: str, source_frame: int | None) -> str:
    digest = hashlib.sha256()
    digest.update(canonical_json([kind, prompt_text, source_frame]).encode("utf-8"))
    return digest.hexdigest()[:16]


@dataclass
class BRollAsset:
    id: str
    kind: str
    image: np.ndarray
    caption: str
    prompt_text: str
    source_frame: int | None = None
    gap_hint: NarrativeGap | None = None
    needs_review: bool = True  # appearance consistency is never verified

    @classmethod
    def build(cls, kind, image, caption, prompt_text, source_frame=None, gap_hint=None):
        return cls(
            id=asset_id(kind, prompt_text, source_frame),
            kind=kind,
            image=image,
            caption=caption,
            prompt_text=prompt_text,
            source_frame=source_frame,
            gap_hint=gap_hint,
        )


def select_key_frame(clip: SampledClip, features: np.ndarray) -> int:
    """Index into the sampled clip with maximal motion energy, earliest on ties."""
    motion = features[:, 0]
    return int(np.argmax(motion))  # argmax returns the first maximum


def make_freeze_frame(
    highlight: HighlightSpan,
    clip: SampledClip,
    features: np.ndarray,
    understanding: VideoUnderstanding,
    gateway: GenAiGateway,
    style: StyleSpec,
    variant: int = 0,
    gap_hint: NarrativeGap | None = None,
) -> BRollAsset:
    """One T1 still from the peak-action frame of the highlight."""
    key_pos = select_key_frame(clip, features)
    key_frame = clip.frames[key_pos]
    subject = freeze_subject(understanding)
    if variant:
        subject += f" Variation {variant + 1}."
    result = gateway.generate_image(subject, reference_image=key_frame.pixels, style=style)
    return BRollAsset.build(
        kind="T1",
        image=result.image,
        caption=f"Freeze-frame moment ({highlight.sentiment})",
        prompt_text=result.prompt_text,
        source_frame=key_frame.index,
        gap_hint=gap_hint,
    )


def make_career_showcase(
    athlete_name: str,
    sport: str,
    stage_count: int,
    gateway: GenAiGateway,
    style: StyleSpec,
    gap_hint: NarrativeGap | None = None,
) -> list[BRollAsset]:
    """T2 strip, one still per career stage, in stage order. All-or-nothing."""
    if not athlete_name:
        raise ValueError("empty athlete name")
    if stage_count < 1:
        raise ValueError("stage_count must be >= 1")
    from .gateway import fill_template, load_template

    stages = gateway.athlete_career(athlete_name, sport, stage_count)
    assets = []
    for stage_text in stages:
        subject = fill_template(load_template("career_draw"), sport=sport, stage_text=stage_text)
        result = gateway.generate_image(subject, style=style)
        assets.append(
            BRollAsset.build(
                kind="T2",
                image=result.image,
                caption=stage_text,
                prompt_text=result.prompt_text,
                gap_hint=gap_hint,
            )
        )
    return assets


def make_contextual(
    gap: NarrativeGap,
    understanding: VideoUnderstanding,
    gateway: GenAiGateway,
    style: StyleSpec,
    count: int,
) -> tuple[list[BRollAsset], list[str]]:
    """Up to ``count`` T3 reaction stills; failures are skipped and reported."""
    if count < 1:
        raise ValueError("count must be >= 1")
    assets: list[BRollAsset] = []
    skipped: list[str] = []
    for i in range(count):
        subject = context_subject(understanding, i)
        try:
            result = gateway.generate_image(subject, style=style)
        except GenAiError as exc:
            skipped.append(f"T3 item {i + 1}/{count} skipped: {exc}")
            continue
        assets.append(
            BRollAsset.build(
                kind="T3",
                image=result.image,
                caption=subject,
                prompt_text=result.prompt_text,
                gap_hint=gap,
            )
        )
    return assets, skipped


@dataclass
class AssetRecord:
    id: str
    kind: str
    caption: str
    prompt_text: str
    source_frame: int | None
    gap_hint: dict | None
    needs_review: bool

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "caption": self.caption,
            "prompt_text": self.prompt_text,
            "source_frame": self.source_frame,
            "gap_hint": self.gap_hint,
            "needs_review": self.needs_review,
        }


class AssetStore:
    """PNG per asset plus a JSON sidecar, in one project asset directory."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def save(self, asset: BRollAsset) -> AssetRecord:
        record = AssetRecord(
            id=asset.id,
            kind=asset.kind,
            caption=asset.caption,
            prompt_text=asset.prompt_text,
            source_frame=asset.source_frame,
            gap_hint=asset.gap_hint.to_dict() if asset.gap_hint else None,
            needs_review=asset.needs_review,
        )
        (self.root / f"{asset.id}.png").write_bytes(encode_png(asset.image))
        (self.root / f"{asset.id}.json").write_text(
            json.dumps(record.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        return record

    def manifest(self) -> dict[str, AssetRecord]:
        records = {}
        for sidecar in sorted(self.root.glob("*.json")):
            doc = json.loads(sidecar.read_text("utf-8"))
            records[doc["id"]] = AssetRecord(
                id=doc["id"],
                kind=doc["kind"],
                caption=doc.get("caption", ""),
                prompt_text=doc.get("prompt_text", ""),
                source_frame=doc.get("source_frame"),
                gap_hint=doc.get("gap_hint"),
                needs_review=doc.get("needs_review", True),
            )
        return records

    def has(self, asset_id_: str) -> bool:
        return (self.root / f"{asset_id_}.png").is_file()

    def image(self, asset_id_: str) -> np.ndarray:
        path = self.root / f"{asset_id_}.png"
        if not path.is_file():
            raise MissingAsset(asset_id_)
        return decode_png(path.read_bytes())

    def png_bytes(self, asset_id_: str) -> bytes:
        path = self.root / f"{asset_id_}.png"
        if not path.is_file():
            raise MissingAsset(asset_id_)
        return path.read_bytes()
