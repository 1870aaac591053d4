"""Deterministic synthetic fixtures: demo videos, an offline stand-in for
the three generative services, and a ready-to-replay corpus builder.

Everything here is seeded and byte-stable, so a corpus recorded once can be
replayed forever. The demo scenes use colors verified to share HSV bins
between background and moving sprite, keeping within-scene histogram
distance at exactly zero while still producing motion energy.
"""
from __future__ import annotations

import base64
import hashlib
import json
import re
from fractions import Fraction
from pathlib import Path

import numpy as np

from .gateway import FixtureStore, GenAiGateway, decode_png, encode_png
from .media import MediaInfo, write_raw_video

# (background, sprite) pairs proven to share H/S/V bins under the default
# 16x4x4 layout while differing across scenes.
SCENE_COLORS = [
    ((180, 40, 40), (150, 33, 33)),     # red
    ((40, 180, 40), (33, 150, 33)),     # green
    ((40, 40, 180), (33, 33, 150)),     # blue
    ((180, 180, 40), (150, 150, 33)),   # yellow
    ((40, 180, 180), (33, 150, 150)),   # cyan
    ((180, 40, 180), (150, 33, 150)),   # magenta
]

SPRITE = 12  # sprite side length in pixels


def demo_frames(
    scene_lengths: list[int],
    width: int = 96,
    height: int = 54,
    sprite_speeds: list[int] | None = None,
) -> list[np.ndarray]:
    """Solid-color scenes with a moving sprite; per-scene speed drives motion."""
    frames = []
    for scene, length in enumerate(scene_lengths):
        bg, fg = SCENE_COLORS[scene % len(SCENE_COLORS)]
        speed = (sprite_speeds or [1 + 2 * s for s in range(len(scene_lengths))])[scene]
        for t in range(length):
            frame = np.empty((height, width, 3), dtype=np.uint8)
            frame[:, :] = bg
            x = (t * speed) % max(1, width - SPRITE)
            y = (height - SPRITE) // 2
            frame[y : y + SPRITE, x : x + SPRITE] = fg
            frames.append(frame)
    return frames


def make_demo_video(
    path,
    scene_lengths: list[int] | None = None,
    width: int = 96,
    height: int = 54,
    fps: Fraction = Fraction(25),
) -> MediaInfo:
    scene_lengths = scene_lengths or [50, 50, 50]
    return write_raw_video(path, demo_frames(scene_lengths, width, height), fps)


def make_random_scene_video(path, rng: np.random.Generator, fps: Fraction = Fraction(25)):
    """Randomized multi-scene fixture; returns (info, true boundary frames)."""
    n_scenes = int(rng.integers(2, 6))
    lengths = [int(rng.integers(15, 41)) for _ in range(n_scenes)]
    color_order = rng.permutation(len(SCENE_COLORS))[:n_scenes]
    frames = []
    for scene, length in enumerate(lengths):
        bg, fg = SCENE_COLORS[int(color_order[scene])]
        speed = int(rng.integers(1, 6))
        for t in range(length):
            frame = np.empty((54, 96, 3), dtype=np.uint8)
            frame[:, :] = bg
            x = (t * speed) % (96 - SPRITE)
            frame[21 : 21 + SPRITE, x : x + SPRITE] = fg
            frames.append(frame)
    info = write_raw_video(path, frames, fps)
    boundaries = list(np.cumsum(lengths)[:-1])
    return info, [int(b) for b in boundaries]


# --- offline generative services ------------------------------------------------

_STAGE_RE = re.compile(r"career into (\d+) stages")
_DURATION_RE = re.compile(r"video of ([0-9.]+) seconds")

DEMO_SPORT = "basketball"
DEMO_ENTITIES = [
    {"name": "Ace Star", "role": "athlete"},
    {"name": "Coach Lee", "role": "coach"},
    {"name": "Sam Vega", "role": "teammate"},
]


class DemoTransport:
    """Deterministic offline stand-in for the caption, text, and image services.

    Responses are pure functions of the request payload, so record + replay
    of the same run is byte-identical.
    """

    def __init__(self, sport: str = DEMO_SPORT):
        self.sport = sport
        self.calls = 0

    def __call__(self, kind: str, body: dict) -> dict:
        self.calls += 1
        if kind == "caption":
            image = base64.b64decode(body["image_b64"])
            tag = hashlib.sha256(image).hexdigest()[:8]
            return {"caption": f"a {self.sport} player mid-action (frame {tag})"}
        if kind == "complete":
            return {"text": self._complete(body["prompt"])}
        if kind == "generate_image":
            return {"image_b64": base64.b64encode(self._image(body["prompt"])).decode("ascii")}
        raise ValueError(f"unknown service kind {kind}")

    def _complete(self, prompt: str) -> str:
        stage_match = _STAGE_RE.search(prompt)
        if stage_match:
            n = int(stage_match.group(1))
            return "\n".join(
                f"{i + 1}. Stage {i + 1}: a defining chapter of the athlete's career."
                for i in range(n)
            )
        if '"summary"' in prompt:
            return json.dumps(
                {
                    "summary": f"A {self.sport} game with fast breaks and a decisive final play.",
                    "sport": self.sport,
                    "entities": DEMO_ENTITIES,
                }
            )
        if '"elements"' in prompt:
            duration_match = _DURATION_RE.search(prompt)
            d = float(duration_match.group(1)) if duration_match else 10.0
            return json.dumps(
                {
                    "elements": [
                        {"role": "opening", "status": "missing", "start_s": 0.0,
                         "end_s": round(0.15 * d, 3), "note": "no build-up footage"},
                        {"role": "conflict", "status": "covered", "start_s": round(0.2 * d, 3),
                         "end_s": round(0.45 * d, 3), "note": "mid-game battle visible"},
                        {"role": "climax", "status": "missing", "start_s": round(0.5 * d, 3),
                         "end_s": round(0.6 * d, 3), "note": "peak moment needs emphasis"},
                        {"role": "conclusion", "status": "missing", "start_s": round(0.85 * d, 3),
                         "end_s": round(d, 3), "note": "no aftermath shots"},
                    ]
                }
            )
        return "OK"

    def _image(self, prompt: str) -> bytes:
        digest = hashlib.sha256(prompt.encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        stripes = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        image = np.kron(stripes, np.ones((16, 16, 1), dtype=np.uint8)).astype(np.uint8)
        return encode_png(image)


class GuardTransport:
    """Test double that fails the run if any live call escapes replay mode."""

    def __init__(self):
        self.calls = 0

    def __call__(self, kind: str, body: dict) -> dict:
        self.calls += 1
        raise AssertionError(f"live {kind} call attempted in replay mode")


# --- corpus --------------------------------------------------------------------

def demo_config_dict(seed: int = 42) -> dict:
    """Pipeline configuration used by the recorded demo corpus."""
    return {
        "athlete_name": "Ace Star",
        "stage_count": 3,
        "density": 1,
        "gap_budget_s": 2.0,
        "suggestion_level": "on_demand",
        "seed": seed,
        "captions_per_shot": 2,
        "selection": {"mode": "top_k", "k": 2, "tau": 0.0},
        "transition_kind": "cross_fade",
        "transition_s": 0.2,
        "style": {"palette": "black_white", "relevance": 0.5, "extra_directives": ""},
        "emit_figures": True,
    }


def make_replay_corpus(root, seed: int = 42) -> dict:
    """Build video + config + recorded fixtures; returns the key paths."""
    from .pipeline import run
    from .timeline import PipelineConfig

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    video = root / "video.mrv"
    make_demo_video(video)
    config_path = root / "config.json"
    config_doc = demo_config_dict(seed)
    config_path.write_text(json.dumps(config_doc, indent=2, sort_keys=True) + "\n", "utf-8")
    fixtures = root / "fixtures"
    gateway = GenAiGateway(mode="record", store=FixtureStore(fixtures), transport=DemoTransport())
    scratch = root / "recorded"
    run(video, PipelineConfig.from_dict(config_doc), gateway, scratch / "project.mangaroll.json")
    return {
        "root": root,
        "video": video,
        "config": config_path,
        "fixtures": fixtures,
        "recorded_project": scratch / "project.mangaroll.json",
    }
