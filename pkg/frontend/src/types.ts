/**
 * Wire types mirroring the service's project JSON schema (version 1).
 */

export type TrackName = "a_roll" | "t1_track" | "t2_track" | "t3_track";
export type BRollKind = "T1" | "T2" | "T3";
export type TransitionKind = "cut" | "cross_fade" | "wipe";
export type SuggestionLevel = "off" | "on_demand" | "proactive";

export interface Rational {
  num: number;
  den: number;
}

export interface TransitionDoc {
  kind: TransitionKind;
  duration: number;
}

export interface SourcePayload {
  type: "source";
  src_start: number;
  src_len: number;
  speed: Rational;
}

export interface AssetPayload {
  type: "asset";
  asset_id: string;
}

export interface ClipDoc {
  id: string;
  track: TrackName;
  out_start: number;
  out_len: number;
  payload: SourcePayload | AssetPayload;
  transition_in: TransitionDoc | null;
  transition_out: TransitionDoc | null;
}

export interface MediaDoc {
  width: number;
  height: number;
  frame_rate: Rational;
  frame_count: number;
  duration: number;
  pixel_format: string;
  low_quality: boolean;
}

export interface GapDoc {
  role: string;
  start_s: number;
  end_s: number;
  kind: BRollKind;
}

export interface ProjectDoc {
  version: number;
  source: string;
  media: MediaDoc;
  seed: number;
  clips: ClipDoc[];
  gaps: GapDoc[];
  assets: { dir: string; items: { id: string; kind: BRollKind }[] };
  narrative: unknown;
  config: Record<string, unknown>;
  next_clip_seq: number;
}

export interface JobDoc {
  id: string;
  kind: "analyze" | "render" | "suggest";
  state: "queued" | "running" | "done" | "failed";
  progress: number;
  error: string | null;
  result: Record<string, unknown> | null;
}

export interface SuggestionDoc {
  id?: string;
  kind: BRollKind;
  prompt_text: string;
  caption?: string;
  gap?: GapDoc;
  source_frame?: number | null;
}

export interface ViolationDoc {
  violation: string;
  detail: string;
}

/** Edit operations accepted by PATCH /projects/{id}/timeline. */
export type EditOp =
  | { op: "move_clip"; clip_id: string; out_start: number }
  | { op: "resize_clip"; clip_id: string; out_len: number }
  | { op: "set_speed"; clip_id: string; speed: Rational }
  | { op: "remove_clip"; clip_id: string }
  | {
      op: "set_transition";
      clip_id: string;
      side: "in" | "out";
      kind: TransitionKind;
      duration: number;
    };

export const TRACK_ORDER: readonly TrackName[] = [
  "a_roll",
  "t1_track",
  "t2_track",
  "t3_track",
];

export const TRACK_FOR_KIND: Record<BRollKind, TrackName> = {
  T1: "t1_track",
  T2: "t2_track",
  T3: "t3_track",
};
