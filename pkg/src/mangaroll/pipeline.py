"""End-to-end pipeline: ingest -> segment -> score -> narrate -> compose ->
schedule, producing an editable project plus a machine-readable report.

Stage failures abort the run (except per-item T3 skips); the project file is
written only on success. With a replay gateway and a fixed seed the whole
run is byte-deterministic.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import broll as broll_mod
from . import narrative as narrative_mod
from .broll import AssetStore, BRollAsset
from .errors import GenAiError, ImageServiceError
from .gateway import GenAiGateway
from .highlights import (
    HighlightSpan,
    HttpScorer,
    NonLocalParams,
    ScoredShot,
    SubprocessScorer,
    classify_sentiment,
    frame_features,
    score_segment,
    score_via_plugin,
    select_highlights,
)
from .media import FrameSource, sample_segment
from .narrative import (
    FillSuggestion,
    NarrativeGap,
    NarrativeOutline,
    VideoUnderstanding,
    build_understanding,
    describe_video,
    identify_gaps,
    propose_fills,
)
from .shots import Shot, detect_boundaries
from .timeline import (
    PipelineConfig,
    TimelineProject,
    Transition,
    assign_assets_to_gaps,
    insert_broll,
    round_half_up_int,
    save,
)

STAGES = ("ingest", "segment", "score", "narrate", "compose", "schedule")


@dataclass
class PipelineReport:
    stages: list[dict] = field(default_factory=list)  # [{"name", "seconds"}]
    shots_found: int = 0
    highlights_selected: int = 0
    gaps_found: int = 0
    assets_generated: dict = field(default_factory=lambda: {"T1": 0, "T2": 0, "T3": 0})
    warnings: list[str] = field(default_factory=list)
    seed: int = 0
    shot_details: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "stages": self.stages,
            "shots_found": self.shots_found,
            "highlights_selected": self.highlights_selected,
            "gaps_found": self.gaps_found,
            "assets_generated": self.assets_generated,
            "warnings": self.warnings,
            "seed": self.seed,
            "shot_details": self.shot_details,
        }


def _build_plugin(config: PipelineConfig):
    spec = config.scorer_plugin
    if not spec:
        return None
    timeout = float(spec.get("timeout_s", 30.0))
    if spec.get("kind") == "subprocess":
        return SubprocessScorer(list(spec["command"]), timeout=timeout)
    if spec.get("kind") == "http":
        return HttpScorer(spec["url"], timeout=timeout)
    raise ValueError(f"unknown scorer plugin kind {spec.get('kind')!r}")


class _Stopwatch:
    def __init__(self, report: PipelineReport, progress: Callable[[str, float], None] | None):
        self.report = report
        self.progress = progress
        self._done = 0

    def stage(self, name: str):
        return _StageTimer(self, name)


class _StageTimer:
    def __init__(self, sw: _Stopwatch, name: str):
        self.sw = sw
        self.name = name

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.sw.report.stages.append(
            {"name": self.name, "seconds": round(time.perf_counter() - self._t0, 6)}
        )
        self.sw._done += 1
        if self.sw.progress and exc_type is None:
            self.sw.progress(self.name, self.sw._done / len(STAGES))
        return False


def run(
    source_path,
    config: PipelineConfig,
    gateway: GenAiGateway,
    project_path,
    explicit_highlights: Sequence[tuple[int, int]] | None = None,
    progress: Callable[[str, float], None] | None = None,
) -> tuple[TimelineProject, PipelineReport]:
    """Run the full pipeline and persist project + report next to each other."""
    project_path = Path(project_path)
    out_dir = project_path.parent
    report = PipelineReport(seed=config.seed)
    sw = _Stopwatch(report, progress)

    with sw.stage("ingest"):
        source = FrameSource(source_path)
        info = source.info
        if info.low_quality:
            report.warnings.append(
                f"low-quality input: short side {min(info.width, info.height)}px is below 1080px"
            )

    with sw.stage("segment"):
        shots = detect_boundaries(source.frames(0, info.frame_count), config.segmentation)
        report.shots_found = len(shots)

    with sw.stage("score"):
        if explicit_highlights:
            shots_to_score = [Shot(int(s), int(e)) for s, e in explicit_highlights]
        else:
            shots_to_score = shots
        clips, features = [], []
        for shot in shots_to_score:
            clip = sample_segment(list(source.frames(shot.start, shot.end)))
            clips.append(clip)
            features.append(frame_features(clip))
        params = NonLocalParams(
            w_theta=np.zeros((4, 4)), w_phi=np.zeros((4, 4)), w_g=np.eye(4)
        )
        plugin = _build_plugin(config)
        raw: list[tuple[float, str | None, bool]] = []
        for shot, feats in zip(shots_to_score, features):
            if plugin is not None:
                raw.append(score_via_plugin(shot, feats, plugin, config.readout, params))
            else:
                raw.append((score_segment(shot, feats, config.readout, params), None, False))
        motions = [float(f[:, 0].mean()) for f in features]
        motion_median = float(np.median(motions)) if motions else 0.0
        scored: list[ScoredShot] = []
        prev_score = None
        for shot, feats, (score, sentiment, fallback), motion in zip(
            shots_to_score, features, raw, motions
        ):
            trend = 0.0 if prev_score is None else score - prev_score
            prev_score = score
            if sentiment is None:
                sentiment = classify_sentiment(feats, trend, motion_median)
            if fallback:
                report.warnings.append(
                    f"shot [{shot.start},{shot.end}) fallback-scored: external scorer unavailable"
                )
            scored.append(
                ScoredShot(shot=shot, score=score, sentiment=sentiment,
                           motion_energy=motion, fallback_scored=fallback)
            )
        if explicit_highlights:
            ranked = sorted(scored, key=lambda s: (-s.score, s.shot.start))
            rank_of = {id(s): i + 1 for i, s in enumerate(ranked)}
            highlights = [
                HighlightSpan(shot=s.shot, score=s.score, sentiment=s.sentiment,
                              rank=rank_of[id(s)], fallback_scored=s.fallback_scored)
                for s in sorted(scored, key=lambda s: s.shot.start)
            ]
        else:
            highlights = select_highlights(scored, config.selection)
        report.highlights_selected = len(highlights)
        selected_ranges = {h.shot.range: h.rank for h in highlights}
        report.shot_details = [
            {
                "start": s.shot.start,
                "end": s.shot.end,
                "score": s.score,
                "sentiment": s.sentiment,
                "selected": s.shot.range in selected_ranges,
                "rank": selected_ranges.get(s.shot.range),
            }
            for s in scored
        ]

    with sw.stage("narrate"):
        captions = describe_video(
            shots, source.gather, gateway, per_shot=config.captions_per_shot,
            seed=config.seed, failures=report.warnings,
        )
        understanding = build_understanding(captions, info, gateway)
        outline = narrative_mod.extract_narrative(
            understanding, highlights, info.duration, float(info.frame_rate), gateway
        )
        gaps = identify_gaps(outline)
        report.gaps_found = len(gaps)
        fills = (
            propose_fills(gaps, understanding, config.style, config.stage_count) if gaps else []
        )

    clip_by_range = {s.range: (c, f) for s, c, f in zip(shots_to_score, clips, features)}

    with sw.stage("compose"):
        assets_by_kind: dict[str, list[BRollAsset]] = {"T1": [], "T2": [], "T3": []}
        gap_kinds = {g.suggested_kind for g in gaps}
        if "T1" in gap_kinds:
            for highlight in highlights:
                clip, feats = clip_by_range[highlight.shot.range]
                for variant in range(config.density):
                    try:
                        assets_by_kind["T1"].append(
                            broll_mod.make_freeze_frame(
                                highlight, clip, feats, understanding, gateway, config.style,
                                variant=variant,
                            )
                        )
                    except ImageServiceError as exc:
                        report.warnings.append(
                            f"T1 asset skipped for shot [{highlight.shot.start},"
                            f"{highlight.shot.end}): {exc}"
                        )
        if "T2" in gap_kinds and config.athlete_name:
            assets_by_kind["T2"] = broll_mod.make_career_showcase(
                config.athlete_name, understanding.sport, config.stage_count, gateway, config.style
            )
        for gap in gaps:
            if gap.suggested_kind != "T3":
                continue
            t3, skipped = broll_mod.make_contextual(
                gap, understanding, gateway, config.style, count=2 * config.density
            )
            assets_by_kind["T3"].extend(t3)
            report.warnings.extend(skipped)
        report.assets_generated = {k: len(v) for k, v in assets_by_kind.items()}

    with sw.stage("schedule"):
        store = AssetStore(out_dir / "assets")
        for kind_assets in assets_by_kind.values():
            for asset in kind_assets:
                store.save(asset)
        project = TimelineProject.a_roll_only(info, str(source_path), config, seed=config.seed)
        project.gaps = gaps
        project.narrative = {
            "understanding": understanding.to_dict(),
            "outline": outline.to_dict(),
        }
        counts = {k: len(v) for k, v in assets_by_kind.items()}
        if gaps:
            assignment, unassigned = assign_assets_to_gaps(counts, gaps)
            for kind, n in sorted(unassigned.items()):
                report.warnings.append(f"{n} {kind} asset(s) have no matching gap; left unplaced")
            fps = float(info.frame_rate)
            transition = Transition(
                kind=config.transition_kind,
                duration=max(0, round_half_up_int(config.transition_s * fps)),
            )
            cursors = {k: 0 for k in assets_by_kind}
            for gap_index, gap in enumerate(gaps):
                n = assignment.get(gap_index, 0)
                if n < 1:
                    continue
                pool = assets_by_kind[gap.suggested_kind]
                chosen = pool[cursors[gap.suggested_kind] : cursors[gap.suggested_kind] + n]
                cursors[gap.suggested_kind] += n
                if not chosen:
                    continue
                budget = max(len(chosen), round_half_up_int(config.gap_budget_s * fps))
                project = insert_broll(project, gap, chosen, transition, budget)
        else:
            report.warnings.append("all narrative elements covered; nothing inserted")
        save(project, project_path)
        report_path = out_dir / "report.json"
        report_path.write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", "utf-8"
        )
        if config.emit_figures:
            from . import report as report_mod

            report_mod.write_report_outputs(report, project, out_dir)
    return project, report


def suggest(
    project: TimelineProject,
    level: str,
    gateway: GenAiGateway | None = None,
    asset_store: AssetStore | None = None,
) -> list[FillSuggestion] | list[BRollAsset]:
    """Graded AI proactivity: nothing, prompts only, or generated assets."""
    if level == "off":
        return []
    if level not in ("on_demand", "proactive"):
        raise ValueError(f"unknown suggestion level {level!r}")
    if not project.narrative:
        raise ValueError("project has no narrative state; run analyze first")
    understanding = VideoUnderstanding.from_dict(project.narrative["understanding"])
    gaps = project.gaps
    if not gaps:
        return []
    config = project.config
    if level == "on_demand":
        return propose_fills(gaps, understanding, config.style, config.stage_count)
    if gateway is None:
        raise ValueError("proactive suggestions need a gateway")
    source = FrameSource(project.source)
    fps = float(project.media.frame_rate)
    assets: list[BRollAsset] = []
    for gap in gaps:
        if gap.suggested_kind == "T1":
            start = round_half_up_int(gap.anchor[0] * fps)
            end = max(start + 1, round_half_up_int(gap.anchor[1] * fps))
            end = min(end, project.media.frame_count)
            start = min(start, end - 1)
            shot = Shot(start, end)
            clip = sample_segment(list(source.frames(start, end)))
            feats = frame_features(clip)
            span = HighlightSpan(shot=shot, score=0.0, sentiment="excitement", rank=1)
            for variant in range(config.density):
                assets.append(
                    broll_mod.make_freeze_frame(
                        span, clip, feats, understanding, gateway, config.style,
                        variant=variant, gap_hint=gap,
                    )
                )
        elif gap.suggested_kind == "T2":
            name = config.athlete_name or narrative_mod.athlete_name(understanding)
            if not name:
                continue
            assets.extend(
                broll_mod.make_career_showcase(
                    name, understanding.sport, config.stage_count, gateway, config.style,
                    gap_hint=gap,
                )
            )
        else:
            t3, _ = broll_mod.make_contextual(
                gap, understanding, gateway, config.style, count=2 * config.density
            )
            assets.extend(t3)
    if asset_store is not None:
        for asset in assets:
            asset_store.save(asset)
    return assets
