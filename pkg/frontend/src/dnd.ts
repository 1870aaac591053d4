/**
 * Drag-and-drop from the suggestion library onto the timeline. Kind/track
 * mismatches are blocked client-side before any request is issued.
 */

import type { UiProjectView } from "./state.js";
import type { BRollKind, EditOp, SuggestionDoc, TrackName } from "./types.js";
import { TRACK_FOR_KIND } from "./types.js";

export interface DropDecision {
  allowed: boolean;
  reason?: string;
  op?: EditOp;
}

/**
 * Placing a library asset means resizing one of its placeholder clips or,
 * when the asset is not on the timeline yet, moving an existing clip of the
 * same asset. The service inserts clips only through analyze/insert, so a
 * library drop targets an existing clip of that asset id; dropping a brand
 * new asset is expressed as moving the clip the server created for it.
 */
export function decideDrop(
  view: UiProjectView,
  asset: SuggestionDoc,
  targetTrack: TrackName,
  targetFrame: number
): DropDecision {
  const expected = TRACK_FOR_KIND[asset.kind as BRollKind];
  if (expected !== targetTrack) {
    return { allowed: false, reason: `kind ${asset.kind} cannot drop on ${targetTrack}` };
  }
  const project = view.displayedProject;
  if (!project) return { allowed: false, reason: "no project loaded" };
  const clip = project.clips.find(
    (c) => c.payload.type === "asset" && c.payload.asset_id === asset.id
  );
  if (!clip) {
    return { allowed: false, reason: "asset has no clip on the timeline yet" };
  }
  return {
    allowed: true,
    op: { op: "move_clip", clip_id: clip.id, out_start: Math.max(0, targetFrame) },
  };
}

/** Execute a drop: optimistic placement, PATCH, snap-back on rejection. */
export async function dropAsset(
  view: UiProjectView,
  asset: SuggestionDoc,
  targetTrack: TrackName,
  targetFrame: number
): Promise<{ placed: boolean; reason?: string }> {
  const decision = decideDrop(view, asset, targetTrack, targetFrame);
  if (!decision.allowed || !decision.op) {
    return { placed: false, reason: decision.reason };
  }
  const outcome = await view.applyEdit(decision.op);
  return { placed: outcome.ok, reason: outcome.violation };
}
