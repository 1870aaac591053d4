import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from mangaroll.gateway import FixtureStore, GenAiGateway
from mangaroll.media import Frame, write_raw_video
from mangaroll.synth import DemoTransport, make_demo_video, make_replay_corpus


def solid_frame(color, index=0, width=8, height=8, fps=25.0):
    pixels = np.empty((height, width, 3), dtype=np.uint8)
    pixels[:, :] = color
    return Frame(index=index, timestamp=index / fps, pixels=pixels)


def frames_from_arrays(arrays, fps=25.0):
    return [Frame(index=i, timestamp=i / fps, pixels=np.asarray(a, dtype=np.uint8))
            for i, a in enumerate(arrays)]


@pytest.fixture
def make_solid_frame():
    return solid_frame


@pytest.fixture
def demo_gateway():
    """Live-mode gateway against the deterministic offline services."""
    return GenAiGateway(mode="live", transport=DemoTransport())


@pytest.fixture(scope="session")
def demo_corpus(tmp_path_factory):
    """Recorded replay corpus shared by pipeline/service/CLI/acceptance tests."""
    root = tmp_path_factory.mktemp("corpus")
    return make_replay_corpus(root, seed=42)


@pytest.fixture
def replay_gateway(demo_corpus):
    return GenAiGateway(mode="replay", store=FixtureStore(demo_corpus["fixtures"]))


@pytest.fixture
def demo_video(tmp_path):
    path = tmp_path / "video.mrv"
    info = make_demo_video(path)
    return path, info


@pytest.fixture
def three_scene_video(tmp_path):
    """The canonical 3x50-frame solid-color fixture."""
    from mangaroll.synth import SCENE_COLORS

    frames = []
    for scene in range(3):
        bg, _ = SCENE_COLORS[scene]
        for _ in range(50):
            f = np.empty((24, 32, 3), dtype=np.uint8)
            f[:, :] = bg
            frames.append(f)
    path = tmp_path / "three.mrv"
    info = write_raw_video(path, frames, Fraction(25))
    return path, info


def write_script(path: Path, body: str) -> str:
    path.write_text(body, encoding="utf-8")
    path.chmod(0o755)
    return str(path)


@pytest.fixture
def fake_codec(tmp_path):
    """Fake prober + decoder pair honoring the raw rgb24 pipe contract.

    Reports 6 frames of 4x4 at 5 fps; the decoder emits deterministic
    pixels (frame index in the red channel).
    """
    probe_doc = {
        "streams": [
            {"codec_type": "video", "width": 4, "height": 4,
             "r_frame_rate": "5/1", "nb_frames": "6", "duration": "1.2"}
        ]
    }
    prober = write_script(
        tmp_path / "fake_probe.py",
        "#!/usr/bin/env python3\n"
        f"print({json.dumps(json.dumps(probe_doc))})\n",
    )
    decoder = write_script(
        tmp_path / "fake_decode.py",
        "#!/usr/bin/env python3\n"
        "import sys\n"
        "out = sys.stdout.buffer\n"
        "for i in range(6):\n"
        "    out.write(bytes([i, 7, 99]) * 16)\n"
        "out.flush()\n",
    )
    return {
        "probe_command": f"python3 {prober} {{src}}",
        "decode_command": f"python3 {decoder} {{src}}",
    }
