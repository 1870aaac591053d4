"""Analysis report outputs: delimited shot/highlight tables plus rendered
figures, written next to the report JSON by the analyze path.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Rectangle

from .pipeline import PipelineReport
from .timeline import TRACKS, SourceRef, TimelineProject

TRACK_LABELS = {"a_roll": "A roll", "t1_track": "T1", "t2_track": "T2", "t3_track": "T3"}
TRACK_COLORS = {"a_roll": "#4878cf", "t1_track": "#d65f5f", "t2_track": "#6acc65", "t3_track": "#b47cc7"}


def write_shots_csv(report: PipelineReport, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["start", "end", "score", "sentiment", "selected", "rank"])
        for row in report.shot_details:
            writer.writerow(
                [row["start"], row["end"], f"{row['score']:.6f}", row["sentiment"],
                 int(row["selected"]), row["rank"] if row["rank"] is not None else ""]
            )


def plot_shot_scores(report: PipelineReport, path):
    details = report.shot_details
    fig, ax = plt.subplots(figsize=(8, 3.2))
    xs = range(len(details))
    colors = ["#d65f5f" if d["selected"] else "#4878cf" for d in details]
    ax.bar(xs, [d["score"] for d in details], color=colors)
    for i, d in enumerate(details):
        if d["selected"]:
            ax.annotate(f"#{d['rank']}", (i, d["score"]), ha="center", va="bottom", fontsize=8)
    ax.set_xlabel("shot")
    ax.set_ylabel("highlight score")
    ax.set_title("Per-shot highlight scores (selected in red)")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_timeline(project: TimelineProject, path):
    fig, ax = plt.subplots(figsize=(9, 2.6))
    total = max(project.total_out_frames(), 1)
    for row, track in enumerate(TRACKS):
        for clip in project.track_clips(track):
            ax.add_patch(
                Rectangle(
                    (clip.out_start, len(TRACKS) - 1 - row + 0.1),
                    clip.out_len,
                    0.8,
                    facecolor=TRACK_COLORS[track],
                    edgecolor="black",
                    linewidth=0.5,
                )
            )
            if isinstance(clip.payload, SourceRef) and clip.out_len > total * 0.04:
                ax.annotate(
                    f"src {clip.payload.src_start}",
                    (clip.out_start + clip.out_len / 2, len(TRACKS) - 1 - row + 0.5),
                    ha="center", va="center", fontsize=7,
                )
    ax.set_xlim(0, total)
    ax.set_ylim(0, len(TRACKS))
    ax.set_yticks([len(TRACKS) - 1 - i + 0.5 for i in range(len(TRACKS))])
    ax.set_yticklabels([TRACK_LABELS[t] for t in TRACKS])
    ax.set_xlabel("output frame")
    ax.set_title("Timeline layout")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def write_report_outputs(report: PipelineReport, project: TimelineProject, out_dir) -> list[Path]:
    """CSV + figures beside the report JSON; returns the written paths."""
    out_dir = Path(out_dir)
    figures = out_dir / "figures"
    figures.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out_dir / "shots.csv"
    write_shots_csv(report, csv_path)
    written.append(csv_path)
    scores_path = figures / "shot_scores.png"
    plot_shot_scores(report, scores_path)
    written.append(scores_path)
    timeline_path = figures / "timeline.png"
    plot_timeline(project, timeline_path)
    written.append(timeline_path)
    return written
