"""Per-shot feature extraction, attention-style feature aggregation across
sampled frames, highlight scoring/selection, and sentiment tagging.

The aggregation uses the embedded-Gaussian form: pairwise affinities
exp(theta_i . phi_j), row-normalized so each output position is a convex
combination of value-projected inputs. A trained external scorer can replace
the built-in heuristic through a line-JSON subprocess or a POST endpoint.
"""
from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyInput, NonFiniteInput, PluginProtocolError, PluginTimeout
from .media import SampledClip
from .shots import DEFAULT_BINS, Shot, hist_distance, hsv_histogram

SENTIMENTS = ("excitement", "tension", "disappointment", "anger")

FEATURE_DIM = 4  # motion energy, luma mean, luma variance, histogram change

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass
class NonLocalParams:
    w_theta: np.ndarray
    w_phi: np.ndarray
    w_g: np.ndarray
    residual: bool = False

    @classmethod
    def identity(cls, d: int = FEATURE_DIM, residual: bool = False) -> "NonLocalParams":
        eye = np.eye(d)
        return cls(w_theta=eye.copy(), w_phi=eye.copy(), w_g=eye.copy(), residual=residual)


@dataclass
class Readout:
    w: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.25, 1.0]))
    b: float = 0.0

    def to_dict(self) -> dict:
        return {"w": [float(v) for v in self.w], "b": self.b}

    @classmethod
    def from_dict(cls, d: dict) -> "Readout":
        return cls(w=np.asarray(d.get("w", [1.0, 0.0, 0.25, 1.0]), dtype=np.float64),
                   b=float(d.get("b", 0.0)))


@dataclass
class ScoredShot:
    shot: Shot
    score: float
    sentiment: str
    motion_energy: float = 0.0
    fallback_scored: bool = False


@dataclass
class HighlightSpan:
    shot: Shot
    score: float
    sentiment: str
    rank: int
    fallback_scored: bool = False


def frame_features(clip: SampledClip, bins=DEFAULT_BINS) -> np.ndarray:
    """n x 4 matrix: [motion energy, luma mean, luma variance, hist change]."""
    if not clip.frames:
        raise EmptyInput("clip has no frames")
    rows = []
    prev_pixels = None
    prev_hist = None
    for fr in clip.frames:
        pixels = fr.pixels.astype(np.float64)
        luma = pixels @ LUMA_WEIGHTS
        hist = hsv_histogram(fr, bins)
        motion = 0.0 if prev_pixels is None else float(np.abs(pixels - prev_pixels).mean())
        hdist = 0.0 if prev_hist is None else hist_distance(prev_hist, hist)
        rows.append([motion, float(luma.mean()), float(luma.var()), hdist])
        prev_pixels, prev_hist = pixels, hist
    return np.asarray(rows, dtype=np.float64)


def _check_finite(name: str, arr: np.ndarray):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{name} contains NaN or Inf")


def nonlocal_aggregate(
    x: np.ndarray, p: NonLocalParams, return_weights: bool = False
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Aggregate each position over all positions with softmax affinities.

    y_i = sum_j softmax_j(theta_i . phi_j) * (x_j w_g), optionally + x_i.
    Logits are shifted by their per-row max before exponentiation.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"expected n x d matrix, got shape {x.shape}")
    _check_finite("x", x)
    for name, w in (("w_theta", p.w_theta), ("w_phi", p.w_phi), ("w_g", p.w_g)):
        _check_finite(name, np.asarray(w))
    theta = x @ p.w_theta
    phi = x @ p.w_phi
    logits = theta @ phi.T
    logits = logits - logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights = weights / weights.sum(axis=1, keepdims=True)
    y = weights @ (x @ p.w_g)
    if p.residual:
        y = y + x
    if return_weights:
        return y, weights
    return y


def score_segment(
    shot: Shot, features: np.ndarray, readout: Readout, p: NonLocalParams
) -> float:
    """Linear readout over the position-mean of the aggregated features."""
    y = nonlocal_aggregate(features, p)
    return float(readout.w @ y.mean(axis=0) + readout.b)


def classify_sentiment(features: np.ndarray, score_trend: float, motion_median: float) -> str:
    """Fallback 2x2 table; an external scorer overrides this entirely.

    Motion strictly above the video-wide median counts as "high"; ties fall
    into the low row.
    """
    if features.shape[0] < 1:
        raise EmptyInput("empty feature matrix")
    high_motion = float(features[:, 0].mean()) > motion_median
    rising = score_trend >= 0
    if high_motion:
        return "excitement" if rising else "anger"
    return "tension" if rising else "disappointment"


@dataclass
class SelectionConfig:
    mode: str = "top_k"  # top_k | threshold
    k: int = 3
    tau: float = 0.0

    def to_dict(self) -> dict:
        return {"mode": self.mode, "k": self.k, "tau": self.tau}

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionConfig":
        return cls(
            mode=d.get("mode", "top_k"),
            k=int(d.get("k", 3)),
            tau=float(d.get("tau", 0.0)),
        )


def select_highlights(scored_shots: Sequence[ScoredShot], config: SelectionConfig) -> list[HighlightSpan]:
    """Pick the key spans, sorted by timeline position, ranked by score."""
    scored = list(scored_shots)
    if not scored:
        raise EmptyInput("no scored shots")
    if config.mode == "top_k":
        by_score = sorted(scored, key=lambda s: (-s.score, s.shot.start))
        chosen = by_score[: max(config.k, 0)]
    elif config.mode == "threshold":
        chosen = [s for s in scored if s.score >= config.tau]
    else:
        raise ValueError(f"unknown selection mode {config.mode!r}")
    ranked = sorted(chosen, key=lambda s: (-s.score, s.shot.start))
    rank_of = {id(s): i + 1 for i, s in enumerate(ranked)}
    in_order = sorted(chosen, key=lambda s: s.shot.start)
    return [
        HighlightSpan(
            shot=s.shot,
            score=s.score,
            sentiment=s.sentiment,
            rank=rank_of[id(s)],
            fallback_scored=s.fallback_scored,
        )
        for s in in_order
    ]


# --- external scorer plugin ---------------------------------------------------

class ScorerPlugin:
    def score(self, request: dict) -> dict:
        raise NotImplementedError


class SubprocessScorer(ScorerPlugin):
    """One JSON request per line on stdin, one JSON response per line on stdout."""

    def __init__(self, command: list[str], timeout: float = 30.0):
        self.command = list(command)
        self.timeout = timeout

    def score(self, request: dict) -> dict:
        try:
            proc = subprocess.run(
                self.command,
                input=json.dumps(request) + "\n",
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired as exc:
            raise PluginTimeout(f"scorer exceeded {self.timeout}s") from exc
        except OSError as exc:
            raise PluginProtocolError(f"cannot launch scorer: {exc}") from exc
        if proc.returncode != 0 or not proc.stdout.strip():
            raise PluginProtocolError(f"scorer exited {proc.returncode}")
        try:
            return json.loads(proc.stdout.strip().splitlines()[0])
        except json.JSONDecodeError as exc:
            raise PluginProtocolError("scorer response is not JSON") from exc


class HttpScorer(ScorerPlugin):
    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def score(self, request: dict) -> dict:
        import requests

        try:
            resp = requests.post(self.url, json=request, timeout=self.timeout)
        except requests.Timeout as exc:
            raise PluginTimeout(f"scorer exceeded {self.timeout}s") from exc
        except requests.RequestException as exc:
            raise PluginProtocolError(f"scorer unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise PluginProtocolError(f"scorer returned {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise PluginProtocolError("scorer response is not JSON") from exc


def score_via_plugin(
    shot: Shot,
    features: np.ndarray,
    plugin: ScorerPlugin,
    readout: Readout,
    p: NonLocalParams,
    frames_dir: str | None = None,
) -> tuple[float, str | None, bool]:
    """Ask the external scorer; fall back to the built-in scorer on failure.

    Returns (score, sentiment or None, fallback_scored). Sentiment is None on
    fallback so the caller can apply the built-in classifier with video-wide
    statistics.
    """
    request = {
        "shot": {"start": shot.start, "end": shot.end},
        "features": [[float(v) for v in row] for row in features],
        "frames_dir": frames_dir,
    }
    try:
        response = plugin.score(request)
        score = float(response["score"])
        sentiment = response["sentiment"]
        if sentiment not in SENTIMENTS:
            raise PluginProtocolError(f"unknown sentiment label {sentiment!r}")
        if not np.isfinite(score):
            raise PluginProtocolError("non-finite score")
        return score, sentiment, False
    except (PluginTimeout, PluginProtocolError, KeyError, TypeError, ValueError):
        return score_segment(shot, features, readout, p), None, True
