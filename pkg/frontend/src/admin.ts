/**
 * Admin Control form: generation parameters, detection thresholds, and the
 * three-level suggestion setting. Invalid fields are blocked with inline
 * messages before any request is built.
 */

import type { SuggestionLevel } from "./types.js";

export interface AdminForm {
  playbackSpeed: number;
  palette: "black_white" | "color";
  athleteName: string;
  stageCount: number;
  density: number;
  gapBudgetS: number;
  suggestionLevel: SuggestionLevel;
  histThreshold: number;
  kpThreshold: number;
  minShotLen: number;
  selectionMode: "top_k" | "threshold";
  selectionK: number;
  selectionTau: number;
  seed: number;
}

export const DEFAULT_FORM: AdminForm = {
  playbackSpeed: 1,
  palette: "black_white",
  athleteName: "",
  stageCount: 3,
  density: 1,
  gapBudgetS: 6,
  suggestionLevel: "on_demand",
  histThreshold: 0.4,
  kpThreshold: 0.3,
  minShotLen: 12,
  selectionMode: "top_k",
  selectionK: 3,
  selectionTau: 0,
  seed: 42,
};

export type FieldErrors = Partial<Record<keyof AdminForm, string>>;

export function validateForm(form: AdminForm): FieldErrors {
  const errors: FieldErrors = {};
  if (!(form.playbackSpeed > 0)) errors.playbackSpeed = "speed must be positive";
  if (!Number.isInteger(form.stageCount) || form.stageCount < 1) {
    errors.stageCount = "stage count must be an integer >= 1";
  }
  if (!Number.isInteger(form.density) || form.density < 1) {
    errors.density = "density must be an integer >= 1";
  }
  if (!(form.gapBudgetS > 0)) errors.gapBudgetS = "gap budget must be positive";
  if (!(form.histThreshold >= 0 && form.histThreshold <= 1)) {
    errors.histThreshold = "histogram threshold lies in [0, 1]";
  }
  if (!(form.kpThreshold >= 0 && form.kpThreshold <= 1)) {
    errors.kpThreshold = "keypoint threshold lies in [0, 1]";
  }
  if (!Number.isInteger(form.minShotLen) || form.minShotLen < 1) {
    errors.minShotLen = "minimum shot length must be an integer >= 1";
  }
  if (form.selectionMode === "top_k" && (!Number.isInteger(form.selectionK) || form.selectionK < 1)) {
    errors.selectionK = "k must be an integer >= 1";
  }
  if (!Number.isInteger(form.seed)) errors.seed = "seed must be an integer";
  return errors;
}

/** Rational approximation good enough for UI speed steps (0.25 precision). */
function toRational(value: number): { num: number; den: number } {
  const den = 4;
  return { num: Math.round(value * den), den };
}

/** Build the analyze config payload; throws if the form does not validate. */
export function buildAnalyzeConfig(form: AdminForm): Record<string, unknown> {
  const errors = validateForm(form);
  if (Object.keys(errors).length > 0) {
    throw new Error(`invalid form: ${Object.values(errors).join("; ")}`);
  }
  return {
    playback_speed: toRational(form.playbackSpeed),
    style: { palette: form.palette, relevance: 0.5, extra_directives: "" },
    athlete_name: form.athleteName.trim() || null,
    stage_count: form.stageCount,
    density: form.density,
    gap_budget_s: form.gapBudgetS,
    suggestion_level: form.suggestionLevel,
    seed: form.seed,
    segmentation: {
      hist_threshold: form.histThreshold,
      kp_threshold: form.kpThreshold,
      min_shot_len: form.minShotLen,
    },
    selection: {
      mode: form.selectionMode,
      k: form.selectionK,
      tau: form.selectionTau,
    },
  };
}
