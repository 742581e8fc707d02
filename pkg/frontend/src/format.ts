/**
 * Display formatting. Probabilities and scores show 2 decimals, edit limits
 * show 4, and ties round half to even in all cases, matching the server CLI.
 */

/**
 * Round to `digits` decimals with ties going to the even neighbor.
 *
 * Values that land within a hair of the midpoint are treated as exact ties,
 * so decimal literals like 0.135 (stored as 0.13500000000000001) behave the
 * way a reader of the decimal expects.
 */
export function roundHalfEven(value: number, digits = 2): number {
  if (!Number.isFinite(value)) return value;
  const factor = 10 ** digits;
  const scaled = value * factor;
  const floor = Math.floor(scaled);
  const diff = scaled - floor;
  const eps = 1e-9 * Math.max(1, Math.abs(scaled));
  let units: number;
  if (diff > 0.5 + eps) units = floor + 1;
  else if (diff < 0.5 - eps) units = floor;
  else units = floor % 2 === 0 ? floor : floor + 1;
  return units / factor;
}

export function formatProb(value: number): string {
  return roundHalfEven(value, 2).toFixed(2);
}

export function formatScore(value: number): string {
  return roundHalfEven(value, 2).toFixed(2);
}

export function formatLimit(value: number): string {
  return roundHalfEven(value, 4).toFixed(4);
}

/** "(0.0065, 0.9965)" style open interval. */
export function formatLimitsInterval(lower: number, upper: number): string {
  return `(${formatLimit(lower)}, ${formatLimit(upper)})`;
}

/** One joint state as "{d2,e2,f1}", states listed in the market's variable order. */
export function formatJointState(state: Record<string, string>, order: string[]): string {
  return `{${order.map((name) => state[name]).join(",")}}`;
}
