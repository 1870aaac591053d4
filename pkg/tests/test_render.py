import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from mangaroll.broll import AssetStore, BRollAsset
from mangaroll.errors import DimensionMismatch, SinkWriteError
from mangaroll.media import FrameSource, write_raw_video
from mangaroll.narrative import NarrativeGap
from mangaroll.render import (
    BlackInstr,
    BlendInstr,
    EncoderSink,
    ImageSequenceSink,
    SourceInstr,
    StillInstr,
    alpha_curve,
    blend,
    letterbox,
    plan,
    render,
    render_output_frame,
    wipe,
)
from mangaroll.timeline import (
    MediaInfo,
    TimelineProject,
    Transition,
    insert_broll,
)

from conftest import write_script


def checker(i, width=16, height=12):
    """Distinct deterministic frame per index."""
    frame = np.zeros((height, width, 3), dtype=np.uint8)
    frame[:, :, 0] = i % 256
    frame[i % height, :, 1] = 255
    return frame


@pytest.fixture
def source_video(tmp_path):
    frames = [checker(i) for i in range(120)]
    path = tmp_path / "src.mrv"
    info = write_raw_video(path, frames, Fraction(25))
    return path, info, frames


def project_for(path, info):
    return TimelineProject.a_roll_only(info, str(path))


def asset(tag="a", size=(12, 16)):
    rng = np.random.default_rng(abs(hash(tag)) % 2**32)
    image = rng.integers(0, 256, size=(size[0], size[1], 3), dtype=np.uint8)
    return BRollAsset.build(kind="T1", image=image, caption=tag, prompt_text=f"p {tag}")


class TestAlphaCurve:
    def test_endpoints_and_midpoint(self):
        assert alpha_curve(0, 10) == 0.0
        assert alpha_curve(10, 10) == 1.0
        assert alpha_curve(5, 10) == 0.5

    def test_bad_input(self):
        with pytest.raises(ValueError):
            alpha_curve(11, 10)
        with pytest.raises(ValueError):
            alpha_curve(0, 0)


class TestBlend:
    def test_endpoints_exact(self):
        a = checker(3)
        b = checker(9)
        assert (blend(a, b, 0.0) == a).all()
        assert (blend(a, b, 1.0) == b).all()

    def test_round_half_up(self):
        a = np.full((2, 2, 3), 100, np.uint8)
        b = np.full((2, 2, 3), 201, np.uint8)
        assert (blend(a, b, 0.5) == 151).all()  # 150.5 rounds up

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            blend(np.zeros((2, 2, 3), np.uint8), np.zeros((3, 3, 3), np.uint8), 0.5)

    def test_commutes_with_channel_permutation(self):
        rng = np.random.default_rng(12)
        a = rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
        b = rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
        perm = [2, 0, 1]
        assert (blend(a, b, 0.3)[:, :, perm] == blend(a[:, :, perm], b[:, :, perm], 0.3)).all()

    def test_monotone_in_alpha_when_b_dominates(self):
        a = np.full((3, 3, 3), 10, np.uint8)
        b = np.full((3, 3, 3), 240, np.uint8)
        values = [blend(a, b, alpha)[0, 0, 0] for alpha in np.linspace(0, 1, 11)]
        assert values == sorted(values)


class TestWipe:
    def test_endpoints_exact(self):
        a, b = checker(1), checker(2)
        assert (wipe(a, b, 0.0) == a).all()
        assert (wipe(a, b, 1.0) == b).all()

    def test_hand_column_arithmetic(self):
        a = np.zeros((2, 4, 3), np.uint8)
        b = np.full((2, 4, 3), 200, np.uint8)
        out = wipe(a, b, 0.5)
        assert (out[:, :2] == 200).all()
        assert (out[:, 2:] == 0).all()


class TestPlan:
    def test_identity_plan(self, source_video):
        path, info, _ = source_video
        project = project_for(path, info)
        p = plan(project)
        assert len(p) == info.frame_count
        assert all(isinstance(i, SourceInstr) for i in p.instructions)
        assert [i.frame for i in p.instructions] == list(range(info.frame_count))

    def test_still_semantics_with_cut(self, source_video, tmp_path):
        path, info, _ = source_video
        project = project_for(path, info)
        still = asset("still")
        project = insert_broll(
            project, NarrativeGap("climax", (2.0, 3.0), "T1"), [still], Transition(), 30
        )
        p = plan(project)
        assert len(p) == 150
        window = p.instructions[50:80]
        assert all(isinstance(i, StillInstr) and i.asset_id == still.id for i in window)
        assert isinstance(p.instructions[49], SourceInstr)
        assert isinstance(p.instructions[80], SourceInstr)

    def test_speed_two_selects_every_second_frame(self, source_video):
        path, info, _ = source_video
        project = project_for(path, info)
        project = __import__("mangaroll.timeline", fromlist=["apply_edit"]).apply_edit(
            project,
            {"op": "set_speed", "clip_id": project.clips[0].id, "speed": {"num": 2, "den": 1}},
        )
        p = plan(project)
        assert len(p) == 60
        assert [i.frame for i in p.instructions] == [min(2 * o, 119) for o in range(60)]

    def test_uncovered_span_renders_black(self, source_video):
        from mangaroll.timeline import apply_edit

        path, info, _ = source_video
        project = project_for(path, info)
        still = asset("gone")
        project = insert_broll(
            project, NarrativeGap("climax", (2.0, 3.0), "T1"), [still], Transition(), 30
        )
        removed = apply_edit(
            project, {"op": "remove_clip", "clip_id": project.track_clips("t1_track")[0].id}
        )
        p = plan(removed)
        assert all(isinstance(i, BlackInstr) for i in p.instructions[50:80])

    def test_transition_windows_sit_on_source_side(self, source_video):
        path, info, _ = source_video
        project = project_for(path, info)
        still = asset("fade")
        project = insert_broll(
            project,
            NarrativeGap("climax", (2.0, 3.0), "T1"),
            [still],
            Transition("cross_fade", 10),
            30,
        )
        p = plan(project)
        # incoming window eats the a_roll tail [40, 50); still span stays pure
        for o in range(40, 50):
            instr = p.instructions[o]
            assert isinstance(instr, BlendInstr) and instr.kind == "cross_fade"
            assert isinstance(instr.a, SourceInstr) and instr.a.frame == o
            assert isinstance(instr.b, StillInstr)
        assert all(isinstance(i, StillInstr) for i in p.instructions[50:80])
        # outgoing window eats the a_roll head [80, 90), alpha ramps from 0
        first_out = p.instructions[80]
        assert isinstance(first_out, BlendInstr)
        assert first_out.alpha == 0.0 and isinstance(first_out.a, StillInstr)
        assert isinstance(p.instructions[90], SourceInstr)

    def test_plan_length_matches_brute_force_walk(self, source_video):
        rng = np.random.default_rng(31)
        path, info, _ = source_video
        for _ in range(10):
            project = project_for(path, info)
            for i in range(int(rng.integers(1, 3))):
                anchor = float(rng.uniform(0, info.duration))
                n = int(rng.integers(1, 3))
                assets = [asset(f"{i}:{j}") for j in range(n)]
                project = insert_broll(
                    project, NarrativeGap("climax", (anchor, anchor + 1), "T1"),
                    assets, Transition(), int(rng.integers(n, 40)),
                )
            p = plan(project)
            assert len(p) == max(c.out_start + c.out_len for c in project.clips)
            assert all(instr is not None for instr in p.instructions)


class TestRender:
    def _store(self, tmp_path, assets):
        store = AssetStore(tmp_path / "assets")
        for a in assets:
            store.save(a)
        return store

    def test_deterministic_digest(self, source_video, tmp_path):
        path, info, _ = source_video
        project = project_for(path, info)
        still = asset("d")
        project = insert_broll(
            project, NarrativeGap("climax", (1.0, 2.0), "T1"), [still],
            Transition("cross_fade", 8), 20,
        )
        store = self._store(tmp_path, [still])
        p = plan(project)
        s1 = render(p, ImageSequenceSink(tmp_path / "out1"), FrameSource(path), store)
        s2 = render(p, ImageSequenceSink(tmp_path / "out2"), FrameSource(path), store)
        assert s1.digest == s2.digest
        assert s1.frames_written == len(p) == 140

    def test_frame_files_named_and_counted(self, source_video, tmp_path):
        path, info, _ = source_video
        project = project_for(path, info)
        p = plan(project)
        stats = render(p, ImageSequenceSink(tmp_path / "seq"), FrameSource(path))
        assert stats.frames_written == 120
        files = sorted((tmp_path / "seq").glob("frame_*.png"))
        assert len(files) == 120
        assert files[0].name == "frame_00000000.png"

    def test_transition_endpoint_bytes(self, source_video, tmp_path):
        from mangaroll.gateway import decode_png

        path, info, frames = source_video
        project = project_for(path, info)
        still = asset("endpoint")
        project = insert_broll(
            project, NarrativeGap("climax", (2.0, 3.0), "T1"), [still],
            Transition("cross_fade", 10), 30,
        )
        store = self._store(tmp_path, [still])
        p = plan(project)
        render(p, ImageSequenceSink(tmp_path / "seq"), FrameSource(path), store)

        def png(i):
            return decode_png((tmp_path / "seq" / f"frame_{i:08d}.png").read_bytes())

        # first frame of the incoming window equals the pure source frame
        assert (png(40) == frames[40]).all()
        # the still span is byte-stable and equals the letterboxed asset
        boxed = letterbox(still.image, info.height, info.width)
        assert (png(50) == boxed).all()
        assert (png(79) == boxed).all()
        # first frame of the outgoing window equals the pure still
        assert (png(80) == boxed).all()
        # after the window the source resumes where it paused (frame 50 + 10)
        assert (png(90) == frames[60]).all()

    def test_render_via_wipe(self, source_video, tmp_path):
        path, info, _ = source_video
        project = project_for(path, info)
        still = asset("w")
        project = insert_broll(
            project, NarrativeGap("climax", (1.0, 2.0), "T1"), [still],
            Transition("wipe", 6), 20,
        )
        store = self._store(tmp_path, [still])
        stats = render(plan(project), ImageSequenceSink(tmp_path / "seq"), FrameSource(path), store)
        assert stats.frames_written == 140

    def test_thumbnail_matches_source_frame(self, source_video, tmp_path):
        path, info, frames = source_video
        project = project_for(path, info)
        out = render_output_frame(project, 7, FrameSource(path))
        assert (out == frames[7]).all()


class TestEncoderSink:
    def test_pipes_raw_frames(self, source_video, tmp_path):
        path, info, _ = source_video
        sink_script = write_script(
            tmp_path / "encoder.py",
            "#!/usr/bin/env python3\n"
            "import sys\n"
            "data = sys.stdin.buffer.read()\n"
            "open(sys.argv[1], 'wb').write(data)\n",
        )
        project = project_for(path, info)
        p = plan(project)
        dst = tmp_path / "raw.bin"
        sink = EncoderSink(dst, p.width, p.height, p.frame_rate,
                           command=f"python3 {sink_script} {{dst}}")
        stats = render(p, sink, FrameSource(path))
        assert stats.frames_written == 120
        assert dst.stat().st_size == 120 * p.width * p.height * 3

    def test_nonzero_exit_propagates(self, source_video, tmp_path):
        path, info, _ = source_video
        bad = write_script(
            tmp_path / "bad_encoder.py",
            "#!/usr/bin/env python3\nimport sys\nsys.stdin.buffer.read()\nsys.exit(9)\n",
        )
        project = project_for(path, info)
        p = plan(project)
        sink = EncoderSink(tmp_path / "x.bin", p.width, p.height, p.frame_rate,
                           command=f"python3 {bad} {{dst}}")
        with pytest.raises(SinkWriteError):
            render(p, sink, FrameSource(path))


class TestLetterbox:
    def test_aspect_preserved_with_black_bars(self):
        image = np.full((10, 10, 3), 200, np.uint8)
        out = letterbox(image, 12, 24)
        assert out.shape == (12, 24, 3)
        assert (out[:, :6] == 0).all() and (out[:, 18:] == 0).all()
        assert (out[:, 6:18] == 200).all()
