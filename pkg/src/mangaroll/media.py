"""Video ingest: probing, frame extraction, and fixed-scheme shot sampling.

Two source flavors are supported behind one interface:

* the native ``.mrv`` raw container (magic header + rgb24 frames), which is
  seekable and bit-exact -- used for fixtures and demos;
* anything else, decoded by an external codec subprocess that writes raw
  rgb24 frames to a pipe (a standard transcoder such as ffmpeg satisfies
  the contract). The commands are configurable and can be overridden with
  MANGAROLL_DECODER / MANGAROLL_PROBER.
"""
from __future__ import annotations

import json
import os
import shlex
import subprocess
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DecoderCrash,
    EmptyShot,
    RangeOutOfBounds,
    UndecodableStream,
    UnreadableSource,
)

MRV_MAGIC = b"MRVID1\n"

# Inputs below this short side trip the quality warning; they are processed
# anyway, just flagged.
QUALITY_MIN_SHORT_SIDE = 1080

DEFAULT_DECODE_COMMAND = "ffmpeg -v error -nostdin -i {src} -f rawvideo -pix_fmt rgb24 -"
DEFAULT_PROBE_COMMAND = "ffprobe -v error -print_format json -show_format -show_streams {src}"

DECODER_ENV = "MANGAROLL_DECODER"
PROBER_ENV = "MANGAROLL_PROBER"


@dataclass
class MediaInfo:
    width: int
    height: int
    frame_rate: Fraction
    frame_count: int
    duration: float
    pixel_format: str = "rgb24"
    low_quality: bool = False

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise UndecodableStream(f"bad geometry {self.width}x{self.height}")
        if self.frame_rate <= 0:
            raise UndecodableStream(f"bad frame rate {self.frame_rate}")
        if self.frame_count <= 0:
            raise UndecodableStream(f"bad frame count {self.frame_count}")
        nominal = self.frame_count / float(self.frame_rate)
        if abs(self.duration - nominal) > 1.0 / float(self.frame_rate):
            raise UndecodableStream(
                f"duration {self.duration} inconsistent with {self.frame_count} frames @ {self.frame_rate} fps"
            )

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "frame_rate": {"num": self.frame_rate.numerator, "den": self.frame_rate.denominator},
            "frame_count": self.frame_count,
            "duration": self.duration,
            "pixel_format": self.pixel_format,
            "low_quality": self.low_quality,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MediaInfo":
        return cls(
            width=int(d["width"]),
            height=int(d["height"]),
            frame_rate=Fraction(int(d["frame_rate"]["num"]), int(d["frame_rate"]["den"])),
            frame_count=int(d["frame_count"]),
            duration=float(d["duration"]),
            pixel_format=d.get("pixel_format", "rgb24"),
            low_quality=bool(d.get("low_quality", False)),
        )


@dataclass
class Frame:
    """One decoded frame. ``pixels`` is HxWx3 uint8 and is frozen on creation."""

    index: int
    timestamp: float
    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.dtype != np.uint8:
            raise ValueError("pixels must be HxWx3 uint8")
        self.pixels.flags.writeable = False

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class SampledClip:
    """Evenly strided, square-resized samples drawn from one shot."""

    source_range: tuple[int, int]
    frames: list[Frame]
    stride: int
    target_size: int

    @property
    def source_indices(self) -> list[int]:
        return [f.index for f in self.frames]


def round_half_up(x) -> np.ndarray:
    """Single rounding rule used for every pixel and index quantization."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def resize_bilinear(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers and round-half-up quantization."""
    h, w = pixels.shape[:2]
    if (h, w) == (out_h, out_w):
        return pixels.copy()
    src = pixels.astype(np.float64)
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    out = top * (1 - fy) + bot * fy
    return np.clip(round_half_up(out), 0, 255).astype(np.uint8)


# --- native raw container ---------------------------------------------------

def write_raw_video(path, frames: Sequence[np.ndarray], frame_rate: Fraction) -> MediaInfo:
    """Write HxWx3 uint8 frames into the seekable .mrv container."""
    frames = list(frames)
    if not frames:
        raise ValueError("no frames")
    h, w = frames[0].shape[:2]
    header = {
        "width": w,
        "height": h,
        "frame_rate": {"num": frame_rate.numerator, "den": frame_rate.denominator},
        "frame_count": len(frames),
    }
    with open(path, "wb") as fh:
        fh.write(MRV_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for fr in frames:
            if fr.shape != (h, w, 3) or fr.dtype != np.uint8:
                raise ValueError("inconsistent frame geometry")
            fh.write(fr.tobytes())
    return MediaInfo(
        width=w,
        height=h,
        frame_rate=frame_rate,
        frame_count=len(frames),
        duration=len(frames) / float(frame_rate),
        low_quality=min(w, h) < QUALITY_MIN_SHORT_SIDE,
    )


def _read_mrv_header(path) -> tuple[MediaInfo, int]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MRV_MAGIC))
        if magic != MRV_MAGIC:
            raise UndecodableStream(f"{path}: not an mrv container")
        line = fh.readline()
        offset = fh.tell()
    try:
        header = json.loads(line.decode("utf-8"))
        rate = Fraction(int(header["frame_rate"]["num"]), int(header["frame_rate"]["den"]))
        info = MediaInfo(
            width=int(header["width"]),
            height=int(header["height"]),
            frame_rate=rate,
            frame_count=int(header["frame_count"]),
            duration=int(header["frame_count"]) / float(rate),
        )
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise UndecodableStream(f"{path}: corrupt mrv header: {exc}") from exc
    info.low_quality = min(info.width, info.height) < QUALITY_MIN_SHORT_SIDE
    return info, offset


def _is_mrv(path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(len(MRV_MAGIC)) == MRV_MAGIC
    except OSError:
        return False


# --- external codec process --------------------------------------------------

@dataclass
class DecoderConfig:
    """Command templates for the codec subprocess. ``{src}`` is substituted."""

    decode_command: str = DEFAULT_DECODE_COMMAND
    probe_command: str = DEFAULT_PROBE_COMMAND

    @classmethod
    def from_env(cls) -> "DecoderConfig":
        return cls(
            decode_command=os.environ.get(DECODER_ENV, DEFAULT_DECODE_COMMAND),
            probe_command=os.environ.get(PROBER_ENV, DEFAULT_PROBE_COMMAND),
        )


def _parse_probe_output(path, text: str) -> MediaInfo:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UndecodableStream(f"{path}: probe output is not JSON") from exc
    streams = [s for s in doc.get("streams", []) if s.get("codec_type") == "video"]
    if not streams:
        raise UndecodableStream(f"{path}: no video stream reported")
    s = streams[0]
    try:
        num, den = s["r_frame_rate"].split("/")
        rate = Fraction(int(num), int(den))
        width = int(s["width"])
        height = int(s["height"])
    except (KeyError, ValueError, ZeroDivisionError) as exc:
        raise UndecodableStream(f"{path}: incomplete probe data: {exc}") from exc
    duration = None
    for holder in (s, doc.get("format", {})):
        if holder.get("duration") is not None:
            try:
                duration = float(holder["duration"])
                break
            except ValueError:
                pass
    if s.get("nb_frames") is not None:
        frame_count = int(s["nb_frames"])
    elif duration is not None:
        frame_count = int(round_half_up(duration * float(rate)))
    else:
        raise UndecodableStream(f"{path}: neither frame count nor duration reported")
    if duration is None:
        duration = frame_count / float(rate)
    return MediaInfo(
        width=width,
        height=height,
        frame_rate=rate,
        frame_count=frame_count,
        duration=duration,
        low_quality=min(width, height) < QUALITY_MIN_SHORT_SIDE,
    )


def probe(source_path, decoder: DecoderConfig | None = None) -> MediaInfo:
    """Validate and describe a source. Flags sub-1080p inputs as low quality."""
    path = Path(source_path)
    if not path.is_file() or not os.access(path, os.R_OK):
        raise UnreadableSource(str(path))
    if _is_mrv(path):
        info, _ = _read_mrv_header(path)
        return info
    decoder = decoder or DecoderConfig.from_env()
    cmd = shlex.split(decoder.probe_command.format(src=shlex.quote(str(path))))
    try:
        proc = subprocess.run(cmd, capture_output=True, timeout=60)
    except FileNotFoundError as exc:
        raise UndecodableStream(f"probe command not found: {cmd[0]}") from exc
    except subprocess.TimeoutExpired as exc:
        raise UndecodableStream(f"probe timed out on {path}") from exc
    if proc.returncode != 0:
        raise UndecodableStream(
            f"probe failed ({proc.returncode}): {proc.stderr.decode('utf-8', 'replace').strip()}"
        )
    return _parse_probe_output(path, proc.stdout.decode("utf-8", "replace"))


def extract_frames(
    source_path,
    frame_range: tuple[int, int] | None = None,
    info: MediaInfo | None = None,
    decoder: DecoderConfig | None = None,
) -> Iterator[Frame]:
    """Yield frames for ``[start, end)`` in index order, bit-exact across runs."""
    path = Path(source_path)
    info = info or probe(path, decoder)
    start, end = frame_range if frame_range is not None else (0, info.frame_count)
    if not (0 <= start < end <= info.frame_count):
        raise RangeOutOfBounds(f"[{start}, {end}) outside [0, {info.frame_count})")
    if _is_mrv(path):
        yield from _extract_mrv(path, info, start, end)
    else:
        yield from _extract_subprocess(path, info, start, end, decoder or DecoderConfig.from_env())


def _frame_from_bytes(info: MediaInfo, index: int, buf: bytes) -> Frame:
    pixels = np.frombuffer(buf, dtype=np.uint8).reshape(info.height, info.width, 3).copy()
    return Frame(index=index, timestamp=index / float(info.frame_rate), pixels=pixels)


def _extract_mrv(path, info, start, end):
    frame_bytes = info.width * info.height * 3
    _, offset = _read_mrv_header(path)
    with open(path, "rb") as fh:
        fh.seek(offset + start * frame_bytes)
        for idx in range(start, end):
            buf = fh.read(frame_bytes)
            if len(buf) < frame_bytes:
                raise UndecodableStream(f"{path}: truncated at frame {idx}")
            yield _frame_from_bytes(info, idx, buf)


def _extract_subprocess(path, info, start, end, decoder):
    frame_bytes = info.width * info.height * 3
    cmd = shlex.split(decoder.decode_command.format(src=shlex.quote(str(path))))
    try:
        proc = subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    except FileNotFoundError as exc:
        raise UndecodableStream(f"decoder command not found: {cmd[0]}") from exc
    assert proc.stdout is not None
    try:
        idx = 0
        while idx < end:
            buf = proc.stdout.read(frame_bytes)
            if len(buf) < frame_bytes:
                proc.wait()
                raise DecoderCrash(
                    f"decoder ended at frame {idx}, needed {end}", exit_status=proc.returncode
                )
            if idx >= start:
                yield _frame_from_bytes(info, idx, buf)
            idx += 1
    finally:
        if proc.poll() is None:
            proc.kill()
        proc.wait()
        if proc.stdout:
            proc.stdout.close()
        if proc.stderr:
            proc.stderr.close()


class FrameSource:
    """Random-ish access facade over one source file."""

    def __init__(self, source_path, decoder: DecoderConfig | None = None):
        self.path = Path(source_path)
        self.decoder = decoder or DecoderConfig.from_env()
        self.info = probe(self.path, self.decoder)

    def frames(self, start: int, end: int) -> Iterator[Frame]:
        return extract_frames(self.path, (start, end), info=self.info, decoder=self.decoder)

    def frame(self, index: int) -> Frame:
        return next(iter(self.frames(index, index + 1)))

    def gather(self, indices: Sequence[int]) -> dict[int, Frame]:
        """Collect a set of frames in one streaming pass."""
        wanted = sorted(set(indices))
        if not wanted:
            return {}
        out: dict[int, Frame] = {}
        it = iter(self.frames(wanted[0], wanted[-1] + 1))
        pos = 0
        for fr in it:
            if pos < len(wanted) and fr.index == wanted[pos]:
                out[fr.index] = fr
                pos += 1
        return out


DEFAULT_SAMPLE_COUNT = 64
DEFAULT_SAMPLE_STRIDE = 10
DEFAULT_TARGET_SIZE = 224


def sample_segment(
    frames_of_shot: Sequence[Frame],
    count: int = DEFAULT_SAMPLE_COUNT,
    stride: int = DEFAULT_SAMPLE_STRIDE,
    target_size: int = DEFAULT_TARGET_SIZE,
) -> SampledClip:
    """Pick up to ``count`` frames at a fixed stride and resize them square.

    Shots shorter than count*stride get a reduced stride of
    max(1, len // count) so every shot still yields samples.
    """
    frames = list(frames_of_shot)
    if not frames:
        raise EmptyShot("cannot sample an empty shot")
    n = len(frames)
    eff_stride = stride if n >= count * stride else max(1, n // count)
    offsets = list(range(0, n, eff_stride))[:count]
    sampled = []
    for off in offsets:
        src = frames[off]
        sampled.append(
            Frame(
                index=src.index,
                timestamp=src.timestamp,
                pixels=resize_bilinear(src.pixels, target_size, target_size),
            )
        )
    return SampledClip(
        source_range=(frames[0].index, frames[-1].index + 1),
        frames=sampled,
        stride=eff_stride,
        target_size=target_size,
    )
