export { ApiError, MarketClient } from "./api.js";
export type { MarketApi, RetryOptions } from "./api.js";
export { TraderConsole } from "./console.js";
export type { BannerKind, ConsoleOptions } from "./console.js";
export {
  formatJointState,
  formatLimit,
  formatLimitsInterval,
  formatProb,
  formatScore,
  roundHalfEven,
} from "./format.js";
export { assumptionCandidates, statesOf, validateEdit } from "./form.js";
export { clampToLimits, insideLimits, sliderGeometry } from "./limits.js";
export { Poller } from "./poll.js";
export { badgeConsistent, positionView } from "./view.js";
export type * from "./types.js";
