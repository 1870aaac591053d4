"""Four-track timeline model: one A-roll track plus one track per B-roll
kind, with freeze-insert scheduling, manual edits, and canonical JSON
persistence.

Freeze-insert opens a hole in the A-roll at the gap anchor (splitting the
covering clip and shifting everything after it right by the gap budget), so
no source frame is ever dropped. B-roll stills overlay the A-roll during
rendering; B-roll clips may never overlap one another, on any track.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from .broll import BRollAsset
from .errors import (
    AnchorOutsideCoverage,
    BudgetTooSmall,
    InvariantViolation,
    SchemaVersionMismatch,
    UnknownClip,
    ValidationFailed,
)
from .gateway import StyleSpec
from .highlights import Readout, SelectionConfig
from .media import MediaInfo
from .narrative import NarrativeGap, NarrativeOutline, VideoUnderstanding
from .shots import SegmentationConfig

SCHEMA_VERSION = 1
PROJECT_SUFFIX = ".mangaroll.json"

TRACKS = ("a_roll", "t1_track", "t2_track", "t3_track")
TRACK_FOR_KIND = {"T1": "t1_track", "T2": "t2_track", "T3": "t3_track"}
BROLL_TRACKS = ("t1_track", "t2_track", "t3_track")

TRANSITION_KINDS = ("cut", "cross_fade", "wipe")


def round_half_up_int(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class Transition:
    kind: str = "cut"
    duration: int = 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "duration": self.duration}

    @classmethod
    def from_dict(cls, d: dict) -> "Transition":
        return cls(kind=d["kind"], duration=int(d["duration"]))


@dataclass
class SourceRef:
    src_start: int
    src_len: int
    speed: Fraction = Fraction(1)

    def to_dict(self) -> dict:
        return {
            "type": "source",
            "src_start": self.src_start,
            "src_len": self.src_len,
            "speed": {"num": self.speed.numerator, "den": self.speed.denominator},
        }


@dataclass
class AssetRef:
    asset_id: str

    def to_dict(self) -> dict:
        return {"type": "asset", "asset_id": self.asset_id}


def payload_from_dict(d: dict):
    if d["type"] == "source":
        return SourceRef(
            src_start=int(d["src_start"]),
            src_len=int(d["src_len"]),
            speed=Fraction(int(d["speed"]["num"]), int(d["speed"]["den"])),
        )
    if d["type"] == "asset":
        return AssetRef(asset_id=d["asset_id"])
    raise ValidationFailed([f"unknown payload type {d.get('type')!r}"])


@dataclass
class Clip:
    id: str
    track: str
    out_start: int
    out_len: int
    payload: SourceRef | AssetRef
    transition_in: Transition | None = None
    transition_out: Transition | None = None

    @property
    def out_end(self) -> int:
        return self.out_start + self.out_len

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "track": self.track,
            "out_start": self.out_start,
            "out_len": self.out_len,
            "payload": self.payload.to_dict(),
            "transition_in": self.transition_in.to_dict() if self.transition_in else None,
            "transition_out": self.transition_out.to_dict() if self.transition_out else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Clip":
        return cls(
            id=d["id"],
            track=d["track"],
            out_start=int(d["out_start"]),
            out_len=int(d["out_len"]),
            payload=payload_from_dict(d["payload"]),
            transition_in=Transition.from_dict(d["transition_in"]) if d.get("transition_in") else None,
            transition_out=Transition.from_dict(d["transition_out"]) if d.get("transition_out") else None,
        )


@dataclass
class PipelineConfig:
    playback_speed: Fraction = Fraction(1)
    style: StyleSpec = field(default_factory=StyleSpec)
    athlete_name: str | None = None
    stage_count: int = 3
    density: int = 1
    gap_budget_s: float = 6.0
    suggestion_level: str = "on_demand"  # off | on_demand | proactive
    seed: int = 0
    captions_per_shot: int = 3
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    readout: Readout = field(default_factory=Readout)
    transition_kind: str = "cross_fade"
    transition_s: float = 0.4
    emit_figures: bool = True
    scorer_plugin: dict | None = None  # {"kind": "subprocess"|"http", ...}

    def __post_init__(self):
        if self.gap_budget_s <= 0:
            raise ValueError("gap_budget_s must be positive")
        if self.density < 1:
            raise ValueError("density must be >= 1")
        if self.stage_count < 1:
            raise ValueError("stage_count must be >= 1")
        if self.suggestion_level not in ("off", "on_demand", "proactive"):
            raise ValueError(f"unknown suggestion level {self.suggestion_level!r}")

    def to_dict(self) -> dict:
        return {
            "playback_speed": {
                "num": self.playback_speed.numerator,
                "den": self.playback_speed.denominator,
            },
            "style": self.style.to_dict(),
            "athlete_name": self.athlete_name,
            "stage_count": self.stage_count,
            "density": self.density,
            "gap_budget_s": self.gap_budget_s,
            "suggestion_level": self.suggestion_level,
            "seed": self.seed,
            "captions_per_shot": self.captions_per_shot,
            "segmentation": self.segmentation.to_dict(),
            "selection": self.selection.to_dict(),
            "readout": self.readout.to_dict(),
            "transition_kind": self.transition_kind,
            "transition_s": self.transition_s,
            "emit_figures": self.emit_figures,
            "scorer_plugin": self.scorer_plugin,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        speed = d.get("playback_speed", {"num": 1, "den": 1})
        return cls(
            playback_speed=Fraction(int(speed["num"]), int(speed["den"])),
            style=StyleSpec.from_dict(d.get("style", {})),
            athlete_name=d.get("athlete_name"),
            stage_count=int(d.get("stage_count", 3)),
            density=int(d.get("density", 1)),
            gap_budget_s=float(d.get("gap_budget_s", 6.0)),
            suggestion_level=d.get("suggestion_level", "on_demand"),
            seed=int(d.get("seed", 0)),
            captions_per_shot=int(d.get("captions_per_shot", 3)),
            segmentation=SegmentationConfig.from_dict(d.get("segmentation", {})),
            selection=SelectionConfig.from_dict(d.get("selection", {})),
            readout=Readout.from_dict(d.get("readout", {})),
            transition_kind=d.get("transition_kind", "cross_fade"),
            transition_s=float(d.get("transition_s", 0.4)),
            emit_figures=bool(d.get("emit_figures", True)),
            scorer_plugin=d.get("scorer_plugin"),
        )


@dataclass
class TimelineProject:
    media: MediaInfo
    source: str
    clips: list[Clip] = field(default_factory=list)
    gaps: list[NarrativeGap] = field(default_factory=list)
    asset_items: list[dict] = field(default_factory=list)  # [{"id","kind"}]
    asset_dir: str = "assets"
    config: PipelineConfig = field(default_factory=PipelineConfig)
    seed: int = 0
    narrative: dict | None = None  # {"understanding":..., "outline":...}
    version: int = SCHEMA_VERSION
    next_clip_seq: int = 1

    # -- construction helpers --

    def new_clip_id(self) -> str:
        cid = f"c{self.next_clip_seq:04d}"
        self.next_clip_seq += 1
        return cid

    @classmethod
    def a_roll_only(cls, media: MediaInfo, source: str, config: PipelineConfig | None = None,
                    seed: int = 0) -> "TimelineProject":
        config = config or PipelineConfig()
        project = cls(media=media, source=str(source), config=config, seed=seed)
        out_len = max(1, round_half_up_int(media.frame_count / float(config.playback_speed)))
        project.clips.append(
            Clip(
                id=project.new_clip_id(),
                track="a_roll",
                out_start=0,
                out_len=out_len,
                payload=SourceRef(src_start=0, src_len=media.frame_count,
                                  speed=config.playback_speed),
            )
        )
        return project

    def track_clips(self, track: str) -> list[Clip]:
        return sorted((c for c in self.clips if c.track == track), key=lambda c: c.out_start)

    def broll_clips(self) -> list[Clip]:
        return sorted((c for c in self.clips if c.track in BROLL_TRACKS), key=lambda c: c.out_start)

    def clip_by_id(self, clip_id: str) -> Clip:
        for c in self.clips:
            if c.id == clip_id:
                return c
        raise UnknownClip(clip_id)

    def total_out_frames(self) -> int:
        return max((c.out_end for c in self.clips), default=0)

    def asset_ids(self) -> set[str]:
        return {item["id"] for item in self.asset_items}

    # -- serialization --

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "source": self.source,
            "media": self.media.to_dict(),
            "seed": self.seed,
            "config": self.config.to_dict(),
            "gaps": [g.to_dict() for g in self.gaps],
            "assets": {"dir": self.asset_dir, "items": self.asset_items},
            "narrative": self.narrative,
            "clips": [c.to_dict() for c in self.clips],
            "next_clip_seq": self.next_clip_seq,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TimelineProject":
        if d.get("version") != SCHEMA_VERSION:
            raise SchemaVersionMismatch(f"expected version {SCHEMA_VERSION}, got {d.get('version')}")
        return cls(
            media=MediaInfo.from_dict(d["media"]),
            source=d["source"],
            clips=[Clip.from_dict(c) for c in d["clips"]],
            gaps=[NarrativeGap.from_dict(g) for g in d.get("gaps", [])],
            asset_items=list(d.get("assets", {}).get("items", [])),
            asset_dir=d.get("assets", {}).get("dir", "assets"),
            config=PipelineConfig.from_dict(d.get("config", {})),
            seed=int(d.get("seed", 0)),
            narrative=d.get("narrative"),
            version=int(d["version"]),
            next_clip_seq=int(d.get("next_clip_seq", 1)),
        )


# --- validation ---------------------------------------------------------------

def find_violation(project: TimelineProject) -> str | None:
    """First violated invariant name, or None. Names are stable identifiers."""
    if project.version != SCHEMA_VERSION:
        return "version"
    a_roll = project.track_clips("a_roll")
    if not a_roll:
        return "a_roll_empty"
    for clip in project.clips:
        if clip.track not in TRACKS:
            return "unknown_track"
        if clip.out_len < 1 or clip.out_start < 0:
            return "clip_extent"
        if clip.track == "a_roll":
            if not isinstance(clip.payload, SourceRef):
                return "a_roll_payload"
            if clip.payload.src_len < 1 or clip.payload.src_start < 0:
                return "source_extent"
            if clip.payload.speed <= 0:
                return "speed"
            if clip.payload.src_start + clip.payload.src_len > project.media.frame_count:
                return "source_extent"
        else:
            if not isinstance(clip.payload, AssetRef):
                return "broll_payload"
            if clip.payload.asset_id not in project.asset_ids():
                return "asset_unresolved"
        for t in (clip.transition_in, clip.transition_out):
            if t is None:
                continue
            if t.kind not in TRANSITION_KINDS:
                return "transition_kind"
            if t.duration < 0 or (t.kind == "cut" and t.duration != 0):
                return "transition_duration"
            if t.duration > clip.out_len:
                return "transition_duration"
    for track in TRACKS:
        clips = project.track_clips(track)
        for prev, nxt in zip(clips, clips[1:]):
            if prev.out_end > nxt.out_start:
                return "overlap"
    broll = project.broll_clips()
    for prev, nxt in zip(broll, broll[1:]):
        if prev.out_end > nxt.out_start:
            return "broll_cross_overlap"
    duration = project.media.duration
    for gap in project.gaps:
        if not (0 <= gap.anchor[0] <= gap.anchor[1] <= duration + 1e-9):
            return "gap_anchor"
    return None


def validate(project: TimelineProject):
    which = find_violation(project)
    if which is not None:
        raise ValidationFailed([which])


# --- scheduling ----------------------------------------------------------------

def allocate_durations(gap_budget_frames: int, k: int) -> list[int]:
    """Equal portions; the first budget-mod-k allocations get the spare frame."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if gap_budget_frames < k:
        raise BudgetTooSmall(f"budget {gap_budget_frames} below {k} single-frame slots")
    base, rem = divmod(gap_budget_frames, k)
    return [base + 1] * rem + [base] * (k - rem)


def assign_assets_to_gaps(
    asset_counts_by_kind: Mapping[str, int], gaps: Sequence[NarrativeGap]
) -> tuple[dict[int, int], dict[str, int]]:
    """Apportion assets of each kind over its gaps by anchor duration.

    Largest-remainder apportionment; ties resolve to the earlier gap. Kinds
    with no matching gap land in the unassigned report.
    """
    if any(asset_counts_by_kind.values()) and not gaps:
        raise ValueError("assets exist but no gaps were identified")
    assignment = {i: 0 for i in range(len(gaps))}
    unassigned: dict[str, int] = {}
    for kind, count in sorted(asset_counts_by_kind.items()):
        if count <= 0:
            continue
        matching = [i for i, g in enumerate(gaps) if g.suggested_kind == kind]
        if not matching:
            unassigned[kind] = count
            continue
        durations = [max(gaps[i].anchor[1] - gaps[i].anchor[0], 0.0) for i in matching]
        total = sum(durations)
        if total <= 0:
            quotas = [count / len(matching)] * len(matching)
        else:
            quotas = [count * d / total for d in durations]
        base = [math.floor(q) for q in quotas]
        spare = count - sum(base)
        remainders = sorted(
            range(len(matching)), key=lambda j: (-(quotas[j] - base[j]), matching[j])
        )
        for j in remainders[:spare]:
            base[j] += 1
        for j, gap_index in enumerate(matching):
            assignment[gap_index] += base[j]
    return assignment, unassigned


def _locate_insert_point(project: TimelineProject, source_frame: int) -> int:
    """Output frame where a hole opened at ``source_frame`` must start."""
    a_roll = project.track_clips("a_roll")
    if source_frame >= project.media.frame_count:
        return a_roll[-1].out_end
    for clip in a_roll:
        ref = clip.payload
        if ref.src_start <= source_frame < ref.src_start + ref.src_len:
            out_offset = round_half_up_int((source_frame - ref.src_start) / float(ref.speed))
            return clip.out_start + min(max(out_offset, 0), clip.out_len)
    raise AnchorOutsideCoverage(f"source frame {source_frame} not covered by any a_roll clip")


def _split_a_roll_at(project: TimelineProject, insert_at: int):
    """Split the a_roll clip spanning ``insert_at``; exact in source and output."""
    for clip in project.track_clips("a_roll"):
        if clip.out_start < insert_at < clip.out_end:
            ref = clip.payload
            out_offset = insert_at - clip.out_start
            src_offset = round_half_up_int(out_offset * float(ref.speed))
            src_offset = min(max(src_offset, 1), ref.src_len - 1) if ref.src_len > 1 else 0
            if src_offset == 0:
                return  # single-source-frame clip: shift instead of splitting
            right = Clip(
                id=project.new_clip_id(),
                track="a_roll",
                out_start=insert_at,
                out_len=clip.out_len - out_offset,
                payload=SourceRef(
                    src_start=ref.src_start + src_offset,
                    src_len=ref.src_len - src_offset,
                    speed=ref.speed,
                ),
                transition_out=clip.transition_out,
            )
            clip.out_len = out_offset
            clip.payload = SourceRef(src_start=ref.src_start, src_len=src_offset, speed=ref.speed)
            clip.transition_out = None
            project.clips.append(right)
            return


def insert_broll(
    project: TimelineProject,
    gap: NarrativeGap,
    assets: Sequence[BRollAsset],
    default_transition: Transition | None = None,
    gap_budget_frames: int | None = None,
) -> TimelineProject:
    """Freeze-insert: open a hole at the gap anchor and fill it with stills.

    Returns a new project; the input is unchanged. Output length grows by
    exactly the gap budget, and the covered source-frame multiset is
    preserved.
    """
    if not assets:
        return project
    project = copy.deepcopy(project)
    fps = float(project.media.frame_rate)
    budget = (
        gap_budget_frames
        if gap_budget_frames is not None
        else max(1, round_half_up_int(project.config.gap_budget_s * fps))
    )
    source_frame = round_half_up_int(gap.anchor[0] * fps)
    source_frame = min(max(source_frame, 0), project.media.frame_count)
    insert_at = _locate_insert_point(project, source_frame)
    _split_a_roll_at(project, insert_at)
    for clip in project.clips:
        if clip.out_start >= insert_at:
            clip.out_start += budget
    track = TRACK_FOR_KIND[gap.suggested_kind]
    durations = allocate_durations(budget, len(assets))
    transition = default_transition or Transition()
    cursor = insert_at
    known_ids = project.asset_ids()
    for asset, length in zip(assets, durations):
        t = Transition(kind=transition.kind, duration=min(transition.duration, length))
        if t.kind == "cut":
            t.duration = 0
        project.clips.append(
            Clip(
                id=project.new_clip_id(),
                track=track,
                out_start=cursor,
                out_len=length,
                payload=AssetRef(asset_id=asset.id),
                transition_in=Transition(t.kind, t.duration),
                transition_out=Transition(t.kind, t.duration),
            )
        )
        if asset.id not in known_ids:
            project.asset_items.append({"id": asset.id, "kind": asset.kind})
            known_ids.add(asset.id)
        cursor += length
    project.clips.sort(key=lambda c: (TRACKS.index(c.track), c.out_start))
    validate(project)
    return project


# --- edits ----------------------------------------------------------------------

EDIT_OPS = ("move_clip", "resize_clip", "set_speed", "remove_clip", "set_transition")


def apply_edit(project: TimelineProject, op: dict) -> TimelineProject:
    """Apply one edit atomically; reject with the first violated invariant.

    Ops: {"op": "move_clip", "clip_id", "out_start"}
         {"op": "resize_clip", "clip_id", "out_len"}
         {"op": "set_speed", "clip_id", "speed": {"num","den"}}
         {"op": "remove_clip", "clip_id"}
         {"op": "set_transition", "clip_id", "side": "in"|"out",
          "kind", "duration"}
    """
    name = op.get("op")
    if name not in EDIT_OPS:
        raise InvariantViolation("unknown_op", f"unknown edit op {name!r}")
    edited = copy.deepcopy(project)
    clip = edited.clip_by_id(str(op.get("clip_id")))
    if name == "move_clip":
        clip.out_start = int(op["out_start"])
    elif name == "resize_clip":
        new_len = int(op["out_len"])
        if clip.track == "a_roll":
            # a_roll resize trims or extends the source range; stills keep
            # their payload and only change display length.
            ref = clip.payload
            available = edited.media.frame_count - ref.src_start
            new_src = min(max(round_half_up_int(new_len * float(ref.speed)), 1), available)
            clip.payload = SourceRef(src_start=ref.src_start, src_len=new_src, speed=ref.speed)
        clip.out_len = new_len
    elif name == "set_speed":
        if not isinstance(clip.payload, SourceRef):
            raise InvariantViolation("speed_on_still", "stills have no playback speed")
        speed = Fraction(int(op["speed"]["num"]), int(op["speed"]["den"]))
        if speed <= 0:
            raise InvariantViolation("speed", "speed must be positive")
        ref = clip.payload
        clip.payload = SourceRef(src_start=ref.src_start, src_len=ref.src_len, speed=speed)
        clip.out_len = max(1, round_half_up_int(ref.src_len / float(speed)))
    elif name == "remove_clip":
        edited.clips = [c for c in edited.clips if c.id != clip.id]
    elif name == "set_transition":
        side = op.get("side", "in")
        if side not in ("in", "out"):
            raise InvariantViolation("transition_side", f"bad side {side!r}")
        kind = op.get("kind", "cut")
        transition = Transition(kind=kind, duration=int(op.get("duration", 0)))
        if side == "in":
            clip.transition_in = transition
        else:
            clip.transition_out = transition
    which = find_violation(edited)
    if which is not None:
        raise InvariantViolation(which)
    return edited


# --- persistence ------------------------------------------------------------------

def dumps_project(project: TimelineProject) -> str:
    """Canonical serialization: sorted keys, two-space indent, trailing newline."""
    return json.dumps(project.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def save(project: TimelineProject, path) -> Path:
    validate(project)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps_project(project), encoding="utf-8")
    tmp.replace(path)
    return path


def load(path) -> TimelineProject:
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationFailed([f"unreadable project file: {exc}"]) from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise ValidationFailed(["missing version"])
    project = TimelineProject.from_dict(doc)
    validate(project)
    return project
