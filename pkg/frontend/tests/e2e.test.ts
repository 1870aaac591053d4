/**
 * Scripted end-to-end checks against a real replay-mode service: load,
 * drag, resize, and snap-back flows, with the invariant that after any
 * rejected edit the displayed timeline equals a fresh server GET.
 */
import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { dropAsset, decideDrop } from "../src/dnd.js";
import { layoutTimeline } from "../src/layout.js";
import { UiProjectView } from "../src/state.js";
import { TRACK_FOR_KIND, type BRollKind, type ClipDoc } from "../src/types.js";

const PORT = 8700 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

let corpusDir: string;
let server: ChildProcess | null = null;
let api: ApiClient;
let projectId: string;

async function serviceUp(): Promise<boolean> {
  try {
    const resp = await fetch(`${BASE}/jobs/probe`);
    return resp.status === 404;
  } catch {
    return false;
  }
}

beforeAll(async () => {
  corpusDir = mkdtempSync(join(tmpdir(), "mangaroll-e2e-"));
  const demo = spawnSync(
    "python3",
    ["-m", "mangaroll.cli", "demo", "--out", join(corpusDir, "corpus"), "--seed", "42"],
    { stdio: "pipe", timeout: 180_000 }
  );
  expect(demo.status, String(demo.stderr)).toBe(0);

  server = spawn(
    "python3",
    [
      "-m", "mangaroll.cli", "serve",
      "--port", String(PORT),
      "--workspace", join(corpusDir, "workspace"),
      "--replay", join(corpusDir, "corpus", "fixtures"),
    ],
    { stdio: "pipe" }
  );
  for (let i = 0; i < 200 && !(await serviceUp()); i++) {
    await new Promise((r) => setTimeout(r, 100));
  }
  expect(await serviceUp()).toBe(true);

  api = new ApiClient(BASE);
  const created = await api.createProject(join(corpusDir, "corpus", "video.mrv"));
  projectId = created.id;
  const config = JSON.parse(
    readFileSync(join(corpusDir, "corpus", "config.json"), "utf-8")
  ) as Record<string, unknown>;
  const { job_id } = await api.analyze(projectId, config);
  const job = await api.waitForJob(job_id);
  expect(job.state).toBe("done");
}, 240_000);

afterAll(() => {
  server?.kill();
});

function brollClips(view: UiProjectView): ClipDoc[] {
  return (view.displayedProject?.clips ?? []).filter((c) => c.track !== "a_roll");
}

describe("editor against the replay-mode service", () => {
  it("loads the four-track project with analyzed content", async () => {
    const view = new UiProjectView(api, projectId);
    await view.load();
    const project = view.displayedProject!;
    expect(project.clips.length).toBeGreaterThan(1);
    const tracks = new Set(project.clips.map((c) => c.track));
    expect(tracks.has("a_roll")).toBe(true);
    expect([...tracks].every((t) => ["a_roll", "t1_track", "t2_track", "t3_track"].includes(t))).toBe(true);
    const rects = layoutTimeline(project, 2);
    expect(rects.length).toBe(project.clips.length);
  });

  it("confirms a resize into free space and snaps back on overlap", async () => {
    const view = new UiProjectView(api, projectId);
    await view.load();
    const pair = brollClips(view).filter((c) => c.track === "t2_track");
    expect(pair.length).toBeGreaterThanOrEqual(2);
    const [first, second] = pair;

    // growing the first clip into its neighbor must snap back
    const grow = await view.applyEdit({
      op: "resize_clip", clip_id: first.id, out_len: second.out_start - first.out_start + 5,
    });
    expect(grow.ok).toBe(false);
    expect(grow.violation).toBe("overlap");
    const fresh = await api.getProject(projectId);
    expect(view.displayedProject).toEqual(fresh);

    // shrinking is free space by definition: confirmed
    const shrink = await view.applyEdit({
      op: "resize_clip", clip_id: first.id, out_len: first.out_len - 3,
    });
    expect(shrink.ok).toBe(true);
    expect(view.displayedClip(first.id)?.out_len).toBe(first.out_len - 3);
    // restore for later flows
    await view.applyEdit({ op: "resize_clip", clip_id: first.id, out_len: first.out_len });
  });

  it("drags a library asset within its track and blocks kind mismatches", async () => {
    const view = new UiProjectView(api, projectId);
    await view.load();
    const suggestions = (await api.suggestions(projectId, "on_demand")).suggestions;
    expect(suggestions.length).toBeGreaterThan(0);

    const t2clip = brollClips(view).find((c) => c.track === "t2_track")!;
    const asset = {
      id: (t2clip.payload as { asset_id: string }).asset_id,
      kind: "T2" as BRollKind,
      prompt_text: "from library",
    };
    // mismatched target track is blocked before any request
    expect(decideDrop(view, asset, TRACK_FOR_KIND.T1, 0).allowed).toBe(false);

    // occupied span snaps back; the displayed timeline equals a fresh GET
    const occupied = brollClips(view).find(
      (c) => c.track === "t2_track" && c.id !== t2clip.id
    )!;
    const rejected = await dropAsset(view, asset, "t2_track", occupied.out_start);
    expect(rejected.placed).toBe(false);
    expect(view.displayedProject).toEqual(await api.getProject(projectId));

    // a free span on its own track is confirmed
    const total = Math.max(
      ...view.displayedProject!.clips.map((c) => c.out_start + c.out_len)
    );
    const placed = await dropAsset(view, asset, "t2_track", total + 10);
    expect(placed.placed).toBe(true);
    expect(view.displayedClip(t2clip.id)?.out_start).toBe(total + 10);
    // put it back
    await view.applyEdit({ op: "move_clip", clip_id: t2clip.id, out_start: t2clip.out_start });
  });

  it("serves thumbnails and asset stills over HTTP", async () => {
    const view = new UiProjectView(api, projectId);
    await view.load();
    const thumb = await fetch(api.thumbnailUrl(projectId, 0));
    expect(thumb.status).toBe(200);
    expect(thumb.headers.get("content-type")).toBe("image/png");

    const still = brollClips(view)[0].payload as { asset_id: string };
    const asset = await fetch(api.assetUrl(projectId, still.asset_id));
    expect(asset.status).toBe(200);
    expect((await asset.arrayBuffer()).byteLength).toBeGreaterThan(0);
  });

  it("polls analyze job progress monotonically", async () => {
    const config = JSON.parse(
      readFileSync(join(corpusDir, "corpus", "config.json"), "utf-8")
    ) as Record<string, unknown>;
    const { job_id } = await api.analyze(projectId, config);
    const seen: number[] = [];
    const job = await api.waitForJob(job_id, (f) => seen.push(f));
    expect(job.state).toBe("done");
    for (let i = 1; i < seen.length; i++) expect(seen[i]).toBeGreaterThanOrEqual(seen[i - 1]);
    expect(seen[seen.length - 1]).toBe(1);
  });
}, 240_000);
