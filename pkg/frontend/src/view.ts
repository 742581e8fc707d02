/**
 * Position panel assembly: the two conditional expected scores, the service's
 * long/short/neutral call, and the current limits, ready for display.
 */

import { formatLimitsInterval, formatScore } from "./format.js";
import type { Position, PreviewResponse } from "./types.js";

export interface PositionView {
  scoreIfTrue: string;
  scoreIfFalse: string;
  badge: Position;
  limitsText: string;
  currentText: string;
}

export function positionView(preview: PreviewResponse): PositionView {
  return {
    scoreIfTrue: formatScore(preview.exp_score_if_true),
    scoreIfFalse: formatScore(preview.exp_score_if_false),
    badge: preview.position,
    limitsText: formatLimitsInterval(preview.limits.lower, preview.limits.upper),
    currentText: formatScore(preview.current_conditional),
  };
}

/**
 * A badge is consistent when "long" means strictly better if the state comes
 * true, "short" strictly worse, and "neutral" sits within half a displayed
 * 0.01 of even. Guards the render path against a divergent service payload.
 */
export function badgeConsistent(preview: PreviewResponse): boolean {
  const diff = preview.exp_score_if_true - preview.exp_score_if_false;
  switch (preview.position) {
    case "long":
      return diff > 0;
    case "short":
      return diff < 0;
    case "neutral":
      return Math.abs(diff) < 0.005;
    default:
      return false;
  }
}
