"""Composite a timeline into an output frame stream.

Planning is pure: each output frame gets one instruction (source frame,
asset still, black, or a blend of two of those for transition windows).
Rendering resolves instructions against the decoded source and the asset
store and writes to an image-sequence directory or an encoder subprocess.

Transition windows sit on the source-backed side of a boundary (the still
leads or lags into the A-roll) so no source frame is ever consumed twice;
between two stills the window sits on the outgoing side. The first frame of
a window equals the pure outgoing frame and the frame after it equals the
pure incoming frame, byte for byte.
"""
from __future__ import annotations

import hashlib
import os
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .broll import AssetStore
from .errors import DimensionMismatch, MissingAsset, SinkWriteError, ValidationFailed
from .media import FrameSource, resize_bilinear, round_half_up
from .timeline import Clip, SourceRef, TimelineProject, round_half_up_int, validate

ENCODER_ENV = "MANGAROLL_ENCODER"
DEFAULT_ENCODE_COMMAND = (
    "ffmpeg -v error -y -f rawvideo -pix_fmt rgb24 -s {width}x{height} -r {fps} -i - {dst}"
)


def alpha_curve(t: int, d: int) -> float:
    """Linear ramp: 0 at the window start, approaching 1 at the far end."""
    if d < 1 or not 0 <= t <= d:
        raise ValueError(f"bad transition offset {t}/{d}")
    return t / d


def blend(frame_a: np.ndarray, frame_b: np.ndarray, alpha: float) -> np.ndarray:
    """Cross-fade: per-channel (1-a)*A + a*B with round-half-up quantization."""
    if frame_a.shape != frame_b.shape:
        raise DimensionMismatch(f"{frame_a.shape} vs {frame_b.shape}")
    if alpha <= 0.0:
        return frame_a.copy()
    if alpha >= 1.0:
        return frame_b.copy()
    mixed = (1.0 - alpha) * frame_a.astype(np.float64) + alpha * frame_b.astype(np.float64)
    return np.clip(round_half_up(mixed), 0, 255).astype(np.uint8)


def wipe(frame_a: np.ndarray, frame_b: np.ndarray, alpha: float) -> np.ndarray:
    """Left-to-right wipe: columns below round(alpha*W) come from B."""
    if frame_a.shape != frame_b.shape:
        raise DimensionMismatch(f"{frame_a.shape} vs {frame_b.shape}")
    width = frame_a.shape[1]
    split = int(round_half_up(alpha * width))
    out = frame_a.copy()
    out[:, :split] = frame_b[:, :split]
    return out


# --- plan instructions --------------------------------------------------------

@dataclass(frozen=True)
class SourceInstr:
    frame: int


@dataclass(frozen=True)
class StillInstr:
    asset_id: str


@dataclass(frozen=True)
class BlackInstr:
    pass


@dataclass(frozen=True)
class BlendInstr:
    a: object
    b: object
    alpha: float
    kind: str  # cross_fade | wipe


@dataclass
class RenderPlan:
    instructions: list
    width: int
    height: int
    frame_rate: float

    def __len__(self) -> int:
        return len(self.instructions)


@dataclass
class RenderStats:
    frames_written: int
    digest: str


@dataclass
class _Segment:
    start: int
    end: int
    clip: Clip | None  # None renders black


def _source_instr(clip: Clip, out_frame: int) -> SourceInstr:
    ref: SourceRef = clip.payload
    offset = out_frame - clip.out_start
    src = ref.src_start + round_half_up_int(offset * float(ref.speed))
    src = min(max(src, ref.src_start), ref.src_start + ref.src_len - 1)
    return SourceInstr(frame=src)


def _base_instr(seg: _Segment, out_frame: int):
    if seg.clip is None:
        return BlackInstr()
    if isinstance(seg.clip.payload, SourceRef):
        return _source_instr(seg.clip, out_frame)
    return StillInstr(asset_id=seg.clip.payload.asset_id)


def _visible_segments(project: TimelineProject) -> list[_Segment]:
    """Output-order segments; B-roll overlays A-roll, uncovered spans are black."""
    total = project.total_out_frames()
    broll = project.broll_clips()
    a_roll = project.track_clips("a_roll")
    cuts = {0, total}
    for c in broll + a_roll:
        cuts.add(min(c.out_start, total))
        cuts.add(min(c.out_end, total))
    edges = sorted(cuts)

    def owner(frame: int) -> Clip | None:
        for c in broll:
            if c.out_start <= frame < c.out_end:
                return c
        for c in a_roll:
            if c.out_start <= frame < c.out_end:
                return c
        return None

    segments: list[_Segment] = []
    for start, end in zip(edges, edges[1:]):
        if start >= end:
            continue
        clip = owner(start)
        if segments and segments[-1].clip is clip:
            segments[-1].end = end
        else:
            segments.append(_Segment(start=start, end=end, clip=clip))
    return segments


def _boundary_transition(outgoing: _Segment, incoming: _Segment) -> tuple[str, int]:
    t = None
    if incoming.clip is not None and incoming.clip.transition_in:
        t = incoming.clip.transition_in
    elif outgoing.clip is not None and outgoing.clip.transition_out:
        t = outgoing.clip.transition_out
    if t is None or t.kind == "cut" or t.duration < 1:
        return ("cut", 0)
    return (t.kind, t.duration)


def _is_source(seg: _Segment) -> bool:
    return seg.clip is not None and isinstance(seg.clip.payload, SourceRef)


def plan(project: TimelineProject) -> RenderPlan:
    """One instruction per output frame, transitions rewritten in place."""
    validate(project)
    if not project.clips:
        raise ValidationFailed(["empty timeline"])
    segments = _visible_segments(project)
    total = project.total_out_frames()
    instructions = [None] * total
    for seg in segments:
        for o in range(seg.start, seg.end):
            instructions[o] = _base_instr(seg, o)

    claimed_until = 0
    for outgoing, incoming in zip(segments, segments[1:]):
        kind, duration = _boundary_transition(outgoing, incoming)
        if duration < 1:
            continue
        p = incoming.start
        if _is_source(incoming) and not _is_source(outgoing):
            # window on the incoming source side; the outgoing still lags over it
            end = min(p + duration, incoming.end)
            other = _base_instr(outgoing, p - 1)
            for o in range(p, end):
                instructions[o] = BlendInstr(
                    a=other, b=_base_instr(incoming, o), alpha=alpha_curve(o - p, end - p), kind=kind
                )
            claimed_until = end
        else:
            # window on the outgoing side; the incoming content leads into it
            start = max(p - duration, outgoing.start, claimed_until)
            if start >= p:
                continue
            other = _base_instr(incoming, p)
            for o in range(start, p):
                instructions[o] = BlendInstr(
                    a=_base_instr(outgoing, o), b=other, alpha=alpha_curve(o - start, p - start), kind=kind
                )
            claimed_until = p
    return RenderPlan(
        instructions=instructions,
        width=project.media.width,
        height=project.media.height,
        frame_rate=float(project.media.frame_rate),
    )


# --- rendering ------------------------------------------------------------------

def letterbox(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Fit an asset into the output geometry on a black canvas, aspect kept."""
    h, w = image.shape[:2]
    scale = min(width / w, height / h)
    new_w = max(1, round_half_up_int(w * scale))
    new_h = max(1, round_half_up_int(h * scale))
    resized = resize_bilinear(image, new_h, new_w)
    canvas = np.zeros((height, width, 3), dtype=np.uint8)
    y0 = (height - new_h) // 2
    x0 = (width - new_w) // 2
    canvas[y0 : y0 + new_h, x0 : x0 + new_w] = resized
    return canvas


class _Resolver:
    def __init__(self, plan_: RenderPlan, source: FrameSource, assets: AssetStore | None):
        self.plan = plan_
        self.source = source
        self.assets = assets
        self._stills: dict[str, np.ndarray] = {}
        self._black = np.zeros((plan_.height, plan_.width, 3), dtype=np.uint8)
        needed = set()

        def walk(instr):
            if isinstance(instr, SourceInstr):
                needed.add(instr.frame)
            elif isinstance(instr, BlendInstr):
                walk(instr.a)
                walk(instr.b)

        for instr in plan_.instructions:
            walk(instr)
        self._frames = source.gather(sorted(needed)) if needed else {}

    def _still(self, asset_id: str) -> np.ndarray:
        if asset_id not in self._stills:
            if self.assets is None:
                raise MissingAsset(asset_id)
            self._stills[asset_id] = letterbox(
                self.assets.image(asset_id), self.plan.height, self.plan.width
            )
        return self._stills[asset_id]

    def resolve(self, instr) -> np.ndarray:
        if isinstance(instr, SourceInstr):
            return np.asarray(self._frames[instr.frame].pixels)
        if isinstance(instr, StillInstr):
            return self._still(instr.asset_id)
        if isinstance(instr, BlackInstr):
            return self._black
        if isinstance(instr, BlendInstr):
            fn = blend if instr.kind == "cross_fade" else wipe
            return fn(self.resolve(instr.a), self.resolve(instr.b), instr.alpha)
        raise ValidationFailed([f"unresolvable instruction {instr!r}"])


class ImageSequenceSink:
    """Writes frame_%08d.png files; the canonical deterministic test target."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._count = 0

    def write(self, pixels: np.ndarray):
        from .gateway import encode_png

        path = self.directory / f"frame_{self._count:08d}.png"
        try:
            path.write_bytes(encode_png(pixels))
        except OSError as exc:
            raise SinkWriteError(str(exc)) from exc
        self._count += 1

    def close(self):
        pass


class EncoderSink:
    """Pipes raw rgb24 into a configured encoder subprocess."""

    def __init__(self, destination, width: int, height: int, fps: float, command: str | None = None):
        template = command or os.environ.get(ENCODER_ENV, DEFAULT_ENCODE_COMMAND)
        cmd = shlex.split(
            template.format(width=width, height=height, fps=fps, dst=shlex.quote(str(destination)))
        )
        try:
            self._proc = subprocess.Popen(cmd, stdin=subprocess.PIPE)
        except FileNotFoundError as exc:
            raise SinkWriteError(f"encoder command not found: {cmd[0]}") from exc

    def write(self, pixels: np.ndarray):
        try:
            self._proc.stdin.write(pixels.tobytes())
        except (BrokenPipeError, OSError) as exc:
            self._proc.wait()
            raise SinkWriteError(f"encoder pipe failed (exit {self._proc.returncode})") from exc

    def close(self):
        self._proc.stdin.close()
        status = self._proc.wait()
        if status != 0:
            raise SinkWriteError(f"encoder exited {status}")


def render(plan_: RenderPlan, sink, source: FrameSource, assets: AssetStore | None = None) -> RenderStats:
    """Write every planned frame in order; digest is over raw frame bytes."""
    resolver = _Resolver(plan_, source, assets)
    digest = hashlib.sha256()
    written = 0
    try:
        for instr in plan_.instructions:
            pixels = resolver.resolve(instr)
            digest.update(pixels.tobytes())
            sink.write(pixels)
            written += 1
    finally:
        sink.close()
    return RenderStats(frames_written=written, digest=digest.hexdigest())


def render_output_frame(
    project: TimelineProject, frame: int, source: FrameSource, assets: AssetStore | None = None
) -> np.ndarray:
    """Resolve a single output frame (thumbnail path)."""
    plan_ = plan(project)
    if not 0 <= frame < len(plan_):
        raise ValidationFailed([f"frame {frame} outside plan of {len(plan_)}"])
    sub = RenderPlan(
        instructions=[plan_.instructions[frame]],
        width=plan_.width,
        height=plan_.height,
        frame_rate=plan_.frame_rate,
    )
    resolver = _Resolver(sub, source, assets)
    return resolver.resolve(sub.instructions[0])
