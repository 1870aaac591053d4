/**
 * DOM shell wiring the four sections together: Video Content (thumbnail
 * scrub preview), Admin Control, Editable Timeline (A roll + T1/T2/T3) and
 * the AI Suggestions library. All editing intelligence lives in the pure
 * modules; this file only renders state and forwards events.
 */

import { ApiClient } from "./api.js";
import { DEFAULT_FORM, buildAnalyzeConfig, validateForm, type AdminForm } from "./admin.js";
import { dropAsset } from "./dnd.js";
import { TRACK_HEIGHT, layoutTimeline, frameAtX, totalOutFrames } from "./layout.js";
import { SuggestionLibrary } from "./library.js";
import { UiProjectView } from "./state.js";
import { TRACK_ORDER, type SuggestionDoc, type TrackName } from "./types.js";

const baseUrl =
  new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8787";
const api = new ApiClient(baseUrl);

const el = {
  preview: document.getElementById("preview") as HTMLImageElement,
  scrub: document.getElementById("scrub") as HTMLInputElement,
  timeline: document.getElementById("timeline") as HTMLDivElement,
  suggestions: document.getElementById("suggestions") as HTMLDivElement,
  adminForm: document.getElementById("admin-form") as HTMLFormElement,
  adminErrors: document.getElementById("admin-errors") as HTMLDivElement,
  status: document.getElementById("status") as HTMLDivElement,
  projectInput: document.getElementById("project-path") as HTMLInputElement,
  openButton: document.getElementById("open-project") as HTMLButtonElement,
};

let view: UiProjectView | null = null;
let library: SuggestionLibrary | null = null;
let dragged: SuggestionDoc | null = null;

function setStatus(text: string): void {
  el.status.textContent = text;
}

function renderTimeline(): void {
  const project = view?.displayedProject;
  el.timeline.replaceChildren();
  if (!project || !view) return;
  const total = Math.max(totalOutFrames(project.clips), 1);
  const zoom = Math.max(el.timeline.clientWidth / total, 0.05);
  view.zoom = zoom;
  for (const track of TRACK_ORDER) {
    const row = document.createElement("div");
    row.className = "track";
    row.dataset.track = track;
    row.style.height = `${TRACK_HEIGHT}px`;
    row.addEventListener("dragover", (e) => e.preventDefault());
    row.addEventListener("drop", (e) => onDrop(e, track));
    el.timeline.appendChild(row);
  }
  for (const rect of layoutTimeline(project, zoom, view.pendingClipIds)) {
    const div = document.createElement("div");
    div.className = `clip ${rect.isStill ? "still" : "source"}${rect.pending ? " pending" : ""}`;
    div.style.left = `${rect.x}px`;
    div.style.width = `${rect.width}px`;
    div.title = rect.clipId;
    div.addEventListener("click", () => {
      if (view) view.selectedClipId = rect.clipId;
    });
    el.timeline
      .querySelector(`[data-track="${rect.track}"]`)!
      .appendChild(div);
  }
  el.scrub.max = String(total - 1);
}

async function onDrop(event: DragEvent, track: TrackName): Promise<void> {
  event.preventDefault();
  if (!view || !dragged) return;
  const frame = frameAtX(event.offsetX, view.zoom);
  const result = await dropAsset(view, dragged, track, frame);
  if (!result.placed) setStatus(`drop rejected: ${result.reason ?? "unknown"}`);
  else if (library) library.markUsed(dragged);
  dragged = null;
}

function renderSuggestions(): void {
  el.suggestions.replaceChildren();
  if (!library || !view) return;
  for (const item of library.visible()) {
    const card = document.createElement("div");
    card.className = "suggestion";
    card.draggable = true;
    card.addEventListener("dragstart", () => {
      dragged = item;
    });
    if (item.id) {
      const img = document.createElement("img");
      img.loading = "lazy";
      img.src = api.assetUrl(view.projectId, item.id);
      card.appendChild(img);
    }
    const label = document.createElement("span");
    label.textContent = `${item.kind}: ${item.caption ?? item.prompt_text.slice(0, 80)}`;
    card.appendChild(label);
    const dismiss = document.createElement("button");
    dismiss.textContent = "×";
    dismiss.addEventListener("click", () => {
      library!.dismiss(item);
      renderSuggestions();
    });
    card.appendChild(dismiss);
    el.suggestions.appendChild(card);
  }
}

function readForm(): AdminForm {
  const data = new FormData(el.adminForm);
  const num = (k: string, fallback: number) => {
    const v = data.get(k);
    return v === null || v === "" ? fallback : Number(v);
  };
  return {
    ...DEFAULT_FORM,
    playbackSpeed: num("playback_speed", 1),
    palette: (data.get("palette") as AdminForm["palette"]) ?? "black_white",
    athleteName: String(data.get("athlete_name") ?? ""),
    stageCount: num("stage_count", 3),
    density: num("density", 1),
    gapBudgetS: num("gap_budget_s", 6),
    suggestionLevel:
      (data.get("suggestion_level") as AdminForm["suggestionLevel"]) ?? "on_demand",
    histThreshold: num("hist_threshold", 0.4),
    kpThreshold: num("kp_threshold", 0.3),
    minShotLen: num("min_shot_len", 12),
    seed: num("seed", 42),
  };
}

async function refreshSuggestions(level: AdminForm["suggestionLevel"]): Promise<void> {
  if (!view || !library) return;
  if (level === "off") {
    library.setItems([]);
    renderSuggestions();
    return;
  }
  const doc = await api.suggestions(view.projectId, level);
  library.setItems(doc.suggestions);
  renderSuggestions();
}

async function openProject(path: string): Promise<void> {
  const created = await api.createProject(path);
  view = new UiProjectView(api, created.id);
  library = new SuggestionLibrary(created.id, localStorage);
  view.subscribe(() => {
    renderTimeline();
    if (view?.lastViolation) setStatus(`edit rejected: ${view.lastViolation}`);
  });
  await view.load();
  setStatus(`project ${created.id} loaded`);
}

el.openButton.addEventListener("click", () => {
  void openProject(el.projectInput.value).catch((e) => setStatus(String(e)));
});

el.scrub.addEventListener("input", () => {
  if (!view) return;
  view.playheadFrame = Number(el.scrub.value);
  el.preview.src = api.thumbnailUrl(view.projectId, view.playheadFrame);
});

el.adminForm.addEventListener("submit", (event) => {
  event.preventDefault();
  void (async () => {
    if (!view) return;
    const form = readForm();
    const errors = validateForm(form);
    el.adminErrors.textContent = Object.values(errors).join("; ");
    if (Object.keys(errors).length > 0) return; // blocked, no request
    setStatus("analyzing…");
    const { job_id } = await api.analyze(view.projectId, buildAnalyzeConfig(form));
    const job = await api.waitForJob(job_id, (f) =>
      setStatus(`analyzing… ${(f * 100).toFixed(0)}%`)
    );
    if (job.state === "failed") {
      setStatus(`analyze failed: ${job.error}`);
      return;
    }
    await view.load();
    await refreshSuggestions(form.suggestionLevel);
    setStatus("analysis complete");
  })().catch((e) => setStatus(String(e)));
});
