/**
 * Editor view state with the optimistic-with-snap-back protocol.
 *
 * The server copy is authoritative: the view is always reconstructible from
 * the last confirmed project plus unacknowledged local edits, and every
 * pending edit stays visually marked until its 200 arrives. On 422 the edit
 * is dropped, the view snaps back to the server copy, and the violation
 * name is surfaced.
 */

import { ApiClient, ApiError } from "./api.js";
import type { ClipDoc, EditOp, ProjectDoc } from "./types.js";

export interface EditOutcome {
  ok: boolean;
  violation?: string;
}

export interface ViewListener {
  (view: UiProjectView): void;
}

function applyLocally(project: ProjectDoc, op: EditOp): ProjectDoc {
  const doc: ProjectDoc = structuredClone(project);
  const clip = doc.clips.find((c) => c.id === op.clip_id);
  if (!clip) return doc;
  switch (op.op) {
    case "move_clip":
      clip.out_start = op.out_start;
      break;
    case "resize_clip":
      clip.out_len = op.out_len;
      break;
    case "set_speed":
      if (clip.payload.type === "source") {
        clip.payload.speed = op.speed;
        clip.out_len = Math.max(
          1,
          Math.floor((clip.payload.src_len * op.speed.den) / op.speed.num + 0.5)
        );
      }
      break;
    case "remove_clip":
      doc.clips = doc.clips.filter((c) => c.id !== op.clip_id);
      break;
    case "set_transition": {
      const t = { kind: op.kind, duration: op.duration };
      if (op.side === "in") clip.transition_in = t;
      else clip.transition_out = t;
      break;
    }
  }
  return doc;
}

export class UiProjectView {
  serverProject: ProjectDoc | null = null;
  pending = new Map<string, EditOp>();
  selectedClipId: string | null = null;
  zoom = 2;
  playheadFrame = 0;
  lastViolation: string | null = null;

  private listeners: ViewListener[] = [];

  constructor(
    private api: ApiClient,
    public projectId: string
  ) {}

  subscribe(listener: ViewListener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this);
  }

  /** Confirmed project plus unacknowledged local edits, for rendering. */
  get displayedProject(): ProjectDoc | null {
    if (!this.serverProject) return null;
    let doc = this.serverProject;
    for (const op of this.pending.values()) doc = applyLocally(doc, op);
    return doc;
  }

  get pendingClipIds(): Set<string> {
    return new Set([...this.pending.values()].map((op) => op.clip_id));
  }

  displayedClip(clipId: string): ClipDoc | undefined {
    return this.displayedProject?.clips.find((c) => c.id === clipId);
  }

  async load(): Promise<void> {
    this.serverProject = await this.api.getProject(this.projectId);
    this.pending.clear();
    this.lastViolation = null;
    this.emit();
  }

  /**
   * Optimistically apply an edit, then reconcile with the server response.
   * Returns the violation name on snap-back.
   */
  async applyEdit(op: EditOp): Promise<EditOutcome> {
    if (!this.serverProject) throw new Error("no project loaded");
    const editId = crypto.randomUUID();  // idempotency keys identify one logical request
    this.pending.set(editId, op);
    this.lastViolation = null;
    this.emit();
    try {
      const confirmed = await this.api.patchTimeline(this.projectId, op, editId);
      this.serverProject = confirmed;
      return { ok: true };
    } catch (error) {
      if (error instanceof ApiError) {
        this.lastViolation = error.violation;
        if (error.status === 409) {
          // another writer: reload the authoritative copy
          this.serverProject = await this.api.getProject(this.projectId);
        }
        return { ok: false, violation: error.violation };
      }
      throw error;
    } finally {
      this.pending.delete(editId);
      this.emit();
    }
  }
}
