"""Shot segmentation from HSV color-histogram differences plus an optional
keypoint-similarity veto.

A frame starts a new shot only when the histogram distance to its
predecessor exceeds ``hist_threshold`` AND keypoint similarity falls below
``kp_threshold`` AND the running shot is at least ``min_shot_len`` frames.
The keypoint detector is pluggable; the null detector reports 0.0 and turns
the veto off (histogram-only mode).
"""
from __future__ import annotations

import json
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np

from .errors import BinLayoutMismatch, EmptyStream
from .media import Frame

DEFAULT_BINS = (16, 4, 4)  # coarse S/V, finer H


@dataclass
class HsvHistogram:
    bins: np.ndarray
    layout: tuple[int, int, int]


@dataclass
class ShotBoundary:
    at_frame: int
    confidence: float


@dataclass(frozen=True)
class Shot:
    start: int
    end: int

    @property
    def range(self) -> tuple[int, int]:
        return (self.start, self.end)

    def __len__(self) -> int:
        return self.end - self.start


def rgb_to_hsv(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hexcone conversion. H in [0, 360), S and V in [0, 1]."""
    rgb = pixels.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    diff = mx - mn
    v = mx
    s = np.where(mx > 0, diff / np.where(mx > 0, mx, 1.0), 0.0)
    safe = np.where(diff > 0, diff, 1.0)
    h = np.zeros_like(mx)
    h = np.where(mx == r, ((g - b) / safe) % 6.0, h)
    h = np.where((mx == g) & (mx != r), (b - r) / safe + 2.0, h)
    h = np.where((mx == b) & (mx != r) & (mx != g), (r - g) / safe + 4.0, h)
    h = np.where(diff > 0, h * 60.0, 0.0)
    return h, s, v


def hsv_histogram(frame: Frame | np.ndarray, bins: tuple[int, int, int] = DEFAULT_BINS) -> HsvHistogram:
    """Bucket every pixel into exactly one HSV bin; mass normalized to 1."""
    hb, sb, vb = bins
    if hb < 1 or sb < 1 or vb < 1:
        raise ValueError(f"bad bin layout {bins}")
    pixels = frame.pixels if isinstance(frame, Frame) else frame
    h, s, v = rgb_to_hsv(pixels)
    hi = np.minimum((h / 360.0 * hb).astype(np.intp), hb - 1)
    si = np.minimum((s * sb).astype(np.intp), sb - 1)
    vi = np.minimum((v * vb).astype(np.intp), vb - 1)
    flat = ((hi * sb + si) * vb + vi).ravel()
    counts = np.bincount(flat, minlength=hb * sb * vb).astype(np.float64)
    return HsvHistogram(bins=counts / counts.sum(), layout=bins)


def hist_distance(h1: HsvHistogram, h2: HsvHistogram) -> float:
    """Half L1 distance between normalized histograms; lies in [0, 1]."""
    if h1.layout != h2.layout or h1.bins.shape != h2.bins.shape:
        raise BinLayoutMismatch(f"{h1.layout} vs {h2.layout}")
    d = 0.5 * float(np.abs(h1.bins - h2.bins).sum())
    return min(max(d, 0.0), 1.0)


class KeypointDetector(Protocol):
    def similarity(self, frame_a: Frame, frame_b: Frame) -> float: ...


class NullKeypointDetector:
    """Always 0.0: the keypoint veto never fires, detection is histogram-only."""

    def similarity(self, frame_a: Frame, frame_b: Frame) -> float:
        return 0.0


class OrbKeypointDetector:
    """ORB keypoints with cross-checked Hamming matching (stands in for SURF)."""

    def __init__(self, max_features: int = 500):
        import cv2  # optional dependency, imported on use

        self._cv2 = cv2
        self._orb = cv2.ORB_create(nfeatures=max_features)
        self._matcher = cv2.BFMatcher(cv2.NORM_HAMMING, crossCheck=True)

    def _detect(self, frame: Frame):
        gray = self._cv2.cvtColor(np.ascontiguousarray(frame.pixels), self._cv2.COLOR_RGB2GRAY)
        return self._orb.detectAndCompute(gray, None)

    def similarity(self, frame_a: Frame, frame_b: Frame) -> float:
        if frame_a.pixels.shape != frame_b.pixels.shape:
            raise ValueError("frames differ in dimensions")
        kp_a, des_a = self._detect(frame_a)
        kp_b, des_b = self._detect(frame_b)
        if not kp_a and not kp_b:
            return 1.0
        if not kp_a or not kp_b:
            return 0.0
        matches = self._matcher.match(des_a, des_b)
        return len(matches) / max(len(kp_a), len(kp_b))


class SubprocessKeypointDetector:
    """Line-delimited JSON plugin: request {"op","a","b"}, response {"similarity"}.

    Frames are handed over as PNG files in a temp directory.
    """

    def __init__(self, command: list[str], timeout: float = 30.0):
        self.command = list(command)
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._tmp = tempfile.mkdtemp(prefix="mangaroll-kp-")
        self._counter = 0

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def _dump(self, frame: Frame) -> str:
        from PIL import Image

        self._counter += 1
        path = Path(self._tmp) / f"kp_{self._counter:06d}.png"
        Image.fromarray(np.asarray(frame.pixels)).save(path, format="PNG")
        return str(path)

    def similarity(self, frame_a: Frame, frame_b: Frame) -> float:
        proc = self._ensure()
        req = {"op": "similarity", "a": self._dump(frame_a), "b": self._dump(frame_b)}
        assert proc.stdin is not None and proc.stdout is not None
        proc.stdin.write(json.dumps(req) + "\n")
        proc.stdin.flush()
        line = proc.stdout.readline()
        if not line:
            raise RuntimeError("keypoint plugin closed its stdout")
        return float(json.loads(line)["similarity"])

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)


def keypoint_similarity(frame_a: Frame, frame_b: Frame, detector: KeypointDetector | None = None) -> float:
    detector = detector or NullKeypointDetector()
    return float(detector.similarity(frame_a, frame_b))


@dataclass
class SegmentationConfig:
    hist_threshold: float = 0.4
    kp_threshold: float = 0.3
    min_shot_len: int = 12
    bins: tuple[int, int, int] = DEFAULT_BINS
    detector: KeypointDetector = field(default_factory=NullKeypointDetector)

    def to_dict(self) -> dict:
        return {
            "hist_threshold": self.hist_threshold,
            "kp_threshold": self.kp_threshold,
            "min_shot_len": self.min_shot_len,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentationConfig":
        cfg = cls()
        cfg.hist_threshold = float(d.get("hist_threshold", cfg.hist_threshold))
        cfg.kp_threshold = float(d.get("kp_threshold", cfg.kp_threshold))
        cfg.min_shot_len = int(d.get("min_shot_len", cfg.min_shot_len))
        return cfg


def segment_video(
    frames: Iterable[Frame], config: SegmentationConfig | None = None
) -> tuple[list[Shot], list[ShotBoundary]]:
    """Fold over consecutive frame pairs; returns the partition plus boundaries."""
    config = config or SegmentationConfig()
    boundaries: list[ShotBoundary] = []
    starts = [0]
    prev: Frame | None = None
    prev_hist: HsvHistogram | None = None
    count = 0
    for fr in frames:
        hist = hsv_histogram(fr, config.bins)
        if prev is not None:
            d = hist_distance(prev_hist, hist)
            shot_len = count - starts[-1]
            if d > config.hist_threshold and shot_len >= config.min_shot_len:
                sim = keypoint_similarity(prev, fr, config.detector)
                if sim < config.kp_threshold:
                    confidence = min(max(0.5 * (d + (1.0 - sim)), 0.0), 1.0)
                    boundaries.append(ShotBoundary(at_frame=count, confidence=confidence))
                    starts.append(count)
        prev, prev_hist = fr, hist
        count += 1
    if count == 0:
        raise EmptyStream("no frames")
    shots = [Shot(s, e) for s, e in zip(starts, starts[1:] + [count])]
    return shots, boundaries


def detect_boundaries(frames: Iterable[Frame], config: SegmentationConfig | None = None) -> list[Shot]:
    """Partition the frame sequence into shots (sorted, disjoint, exhaustive)."""
    shots, _ = segment_video(frames, config)
    return shots
