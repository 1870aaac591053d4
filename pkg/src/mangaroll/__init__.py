"""mangaroll: deterministic sports-video augmentation engine.

Detects shots and highlights, finds narrative gaps, requests manga-style
B-roll from pluggable generative services, schedules it on an editable
four-track timeline, and renders the composite.
"""

from .broll import AssetStore, BRollAsset
from .gateway import FixtureStore, GenAiGateway, StyleSpec
from .highlights import (
    HighlightSpan,
    NonLocalParams,
    Readout,
    SelectionConfig,
    nonlocal_aggregate,
    select_highlights,
)
from .media import Frame, FrameSource, MediaInfo, SampledClip, probe, sample_segment
from .narrative import NarrativeGap, NarrativeOutline, VideoUnderstanding
from .pipeline import PipelineReport, run, suggest
from .render import RenderPlan, RenderStats, blend, plan, render, wipe
from .shots import SegmentationConfig, Shot, detect_boundaries, hist_distance, hsv_histogram
from .timeline import (
    Clip,
    PipelineConfig,
    TimelineProject,
    Transition,
    allocate_durations,
    assign_assets_to_gaps,
    insert_broll,
    load,
    save,
)

__version__ = "0.1.0"

__all__ = [
    "AssetStore",
    "BRollAsset",
    "Clip",
    "FixtureStore",
    "Frame",
    "FrameSource",
    "GenAiGateway",
    "HighlightSpan",
    "MediaInfo",
    "NarrativeGap",
    "NarrativeOutline",
    "NonLocalParams",
    "PipelineConfig",
    "PipelineReport",
    "Readout",
    "RenderPlan",
    "RenderStats",
    "SampledClip",
    "SegmentationConfig",
    "SelectionConfig",
    "Shot",
    "StyleSpec",
    "TimelineProject",
    "Transition",
    "VideoUnderstanding",
    "allocate_durations",
    "assign_assets_to_gaps",
    "blend",
    "detect_boundaries",
    "hist_distance",
    "hsv_histogram",
    "insert_broll",
    "load",
    "nonlocal_aggregate",
    "plan",
    "probe",
    "render",
    "run",
    "sample_segment",
    "save",
    "select_highlights",
    "suggest",
    "wipe",
]
