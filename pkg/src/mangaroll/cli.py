"""Batch command line: analyze, render, suggest, serve, demo.

Exit codes: 0 success, 1 validation error, 2 service error. Diagnostics go
to standard error. --replay/--record switch the generative gateway into
fixture mode; --seed overrides the config seed.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import errors as err
from .gateway import FixtureStore, GenAiGateway
from .timeline import PipelineConfig

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SERVICE = 2

_SERVICE_ERRORS = (
    err.GenAiError,
    err.PluginTimeout,
    err.PluginProtocolError,
    err.DecoderCrash,
    err.SinkWriteError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--replay", metavar="DIR", default=None,
                        help="replay generative responses from a fixture directory")
    parser.add_argument("--record", metavar="DIR", default=None,
                        help="record live generative responses into a fixture directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="mangaroll", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("analyze", help="run the full pipeline on a video")
    p.add_argument("--input", required=True, help="source video path")
    p.add_argument("--config", default=None, help="pipeline config JSON file")
    p.add_argument("--out", required=True, help="output project file (.mangaroll.json)")
    p.add_argument("--no-figures", action="store_true", help="skip report figures and CSV")
    p.add_argument("--highlight", action="append", default=None, metavar="START:END",
                   help="manual highlight interval in frames; bypasses selection "
                        "(repeatable)")
    _common(p)

    p = sub.add_parser("render", help="composite a project to frames")
    p.add_argument("--project", required=True, help="project file")
    p.add_argument("--sink", required=True,
                   help="output directory for an image sequence, or 'encoder'")
    p.add_argument("--encoder-command", default=None, help="encoder command template")
    p.add_argument("--destination", default="out.bin", help="encoder destination path")
    _common(p)

    p = sub.add_parser("suggest", help="produce fill suggestions for a project")
    p.add_argument("--project", required=True, help="project file")
    p.add_argument("--level", required=True, choices=["off", "on_demand", "proactive"])
    _common(p)

    p = sub.add_parser("serve", help="start the local editor service")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--workspace", default="mangaroll-workspace")
    _common(p)

    p = sub.add_parser("demo", help="build an offline demo corpus (video + fixtures)")
    p.add_argument("--out", required=True, help="corpus directory")
    p.add_argument("--seed", type=int, default=42)
    return parser


def build_gateway(args) -> GenAiGateway:
    replay = getattr(args, "replay", None)
    record = getattr(args, "record", None)
    if replay and record:
        raise _UsageError("--replay and --record are mutually exclusive")
    if replay:
        return GenAiGateway(mode="replay", store=FixtureStore(replay))
    if record:
        return GenAiGateway(mode="record", store=FixtureStore(record))
    return GenAiGateway(mode="live")


def _load_config(args) -> PipelineConfig:
    doc = {}
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text("utf-8"))
    config = PipelineConfig.from_dict(doc)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "no_figures", False):
        config.emit_figures = False
    return config


def _cmd_analyze(args) -> int:
    from .pipeline import run

    config = _load_config(args)
    gateway = build_gateway(args)
    manual = None
    if args.highlight:
        manual = []
        for spec in args.highlight:
            start, _, end = spec.partition(":")
            manual.append((int(start), int(end)))
    project, report = run(args.input, config, gateway, args.out, explicit_highlights=manual)
    print(
        f"analyzed {args.input}: {report.shots_found} shots, "
        f"{report.highlights_selected} highlights, {report.gaps_found} gaps, "
        f"assets {report.assets_generated}"
    )
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"project written to {args.out}")
    return EXIT_OK


def _cmd_render(args) -> int:
    from .broll import AssetStore
    from .media import FrameSource
    from .render import EncoderSink, ImageSequenceSink, plan, render
    from .timeline import load

    project = load(args.project)
    plan_ = plan(project)
    assets = AssetStore(Path(args.project).parent / project.asset_dir)
    if args.sink == "encoder":
        sink = EncoderSink(args.destination, plan_.width, plan_.height, plan_.frame_rate,
                           command=args.encoder_command)
    else:
        sink = ImageSequenceSink(args.sink)
    stats = render(plan_, sink, FrameSource(project.source), assets)
    print(f"rendered {stats.frames_written} frames, digest {stats.digest}")
    return EXIT_OK


def _cmd_suggest(args) -> int:
    from .broll import AssetStore
    from .pipeline import suggest
    from .timeline import load

    project = load(args.project)
    gateway = build_gateway(args) if args.level == "proactive" else None
    store = (
        AssetStore(Path(args.project).parent / project.asset_dir)
        if args.level == "proactive"
        else None
    )
    result = suggest(project, args.level, gateway=gateway, asset_store=store)
    if args.level == "proactive":
        doc = [
            {"id": a.id, "kind": a.kind, "caption": a.caption, "prompt_text": a.prompt_text}
            for a in result
        ]
    else:
        doc = [s.to_dict() for s in result]
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_serve(args) -> int:
    import os

    import uvicorn

    from .service import create_app

    port = args.port if args.port is not None else int(os.environ.get("MANGAROLL_PORT", "8787"))
    gateway = build_gateway(args)
    app = create_app(args.workspace, gateway=gateway)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return EXIT_OK


def _cmd_demo(args) -> int:
    from .synth import make_replay_corpus

    paths = make_replay_corpus(args.out, seed=args.seed)
    print(f"demo corpus written to {paths['root']}")
    print(f"  video:    {paths['video']}")
    print(f"  config:   {paths['config']}")
    print(f"  fixtures: {paths['fixtures']}")
    return EXIT_OK


_COMMANDS = {
    "analyze": _cmd_analyze,
    "render": _cmd_render,
    "suggest": _cmd_suggest,
    "serve": _cmd_serve,
    "demo": _cmd_demo,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            return EXIT_VALIDATION
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_VALIDATION
    except _SERVICE_ERRORS as exc:
        print(f"service error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    except err.MangarollError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
