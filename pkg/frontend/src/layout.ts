/**
 * Pure timeline geometry: clip rectangles from (project, zoom). Track order
 * and count are fixed (A roll on top, then T1/T2/T3) regardless of content,
 * so re-rendering the same state is pixel-stable by construction.
 */

import type { ClipDoc, ProjectDoc, TrackName } from "./types.js";
import { TRACK_ORDER } from "./types.js";

export const TRACK_HEIGHT = 42;
export const TRACK_GAP = 6;

export interface ClipRect {
  clipId: string;
  track: TrackName;
  x: number;
  y: number;
  width: number;
  height: number;
  pending: boolean;
  isStill: boolean;
}

export function trackY(track: TrackName): number {
  return TRACK_ORDER.indexOf(track) * (TRACK_HEIGHT + TRACK_GAP);
}

export function totalOutFrames(clips: ClipDoc[]): number {
  return clips.reduce((acc, c) => Math.max(acc, c.out_start + c.out_len), 0);
}

export function clipRect(clip: ClipDoc, zoom: number, pendingIds: Set<string>): ClipRect {
  return {
    clipId: clip.id,
    track: clip.track,
    x: clip.out_start * zoom,
    y: trackY(clip.track),
    width: clip.out_len * zoom,
    height: TRACK_HEIGHT,
    pending: pendingIds.has(clip.id),
    isStill: clip.payload.type === "asset",
  };
}

export function layoutTimeline(
  project: ProjectDoc,
  zoom: number,
  pendingIds: Set<string> = new Set()
): ClipRect[] {
  const rects = project.clips.map((c) => clipRect(c, zoom, pendingIds));
  rects.sort((a, b) => a.y - b.y || a.x - b.x);
  return rects;
}

/** Frame index under an x pixel coordinate at the given zoom. */
export function frameAtX(x: number, zoom: number): number {
  return Math.max(0, Math.round(x / zoom));
}

/** Clips of one track in display order. */
export function trackClips(project: ProjectDoc, track: TrackName): ClipDoc[] {
  return project.clips
    .filter((c) => c.track === track)
    .sort((a, b) => a.out_start - b.out_start);
}

/** First free span of at least `length` frames on a track, or null. */
export function findFreeSpan(
  project: ProjectDoc,
  track: TrackName,
  length: number
): number | null {
  const clips = trackClips(project, track);
  let cursor = 0;
  for (const clip of clips) {
    if (clip.out_start - cursor >= length) return cursor;
    cursor = Math.max(cursor, clip.out_start + clip.out_len);
  }
  return cursor + length <= totalOutFrames(project.clips) + length ? cursor : null;
}
