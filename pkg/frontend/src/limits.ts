/**
 * Slider geometry for the proposed-value control.
 *
 * Edit limits are an open interval: a trade at exactly lower or upper would
 * pin some joint state's assets to zero and the service rejects it. The
 * slider therefore never offers the endpoints, and typed values get nudged
 * strictly inside before they can reach a submit.
 */

export interface OpenInterval {
  lower: number;
  upper: number;
}

export interface SliderGeometry {
  min: number;
  max: number;
  step: number;
}

const f64 = new Float64Array(1);
const u64 = new BigUint64Array(f64.buffer);

/** Next representable double above x (toward +inf). */
export function nextUp(x: number): number {
  if (!Number.isFinite(x)) return x;
  if (x === 0) return Number.MIN_VALUE;
  f64[0] = x;
  u64[0] += x > 0 ? 1n : -1n;
  return f64[0];
}

/** Next representable double below x (toward -inf). */
export function nextDown(x: number): number {
  return -nextUp(-x);
}

export function insideLimits(value: number, limits: OpenInterval): boolean {
  return value > limits.lower && value < limits.upper;
}

/**
 * Clamp a candidate value strictly inside the open interval. Interior values
 * pass through unchanged; anything at or beyond an endpoint lands one float
 * step inside it.
 */
export function clampToLimits(value: number, limits: OpenInterval): number {
  const lo = nextUp(limits.lower);
  const hi = nextDown(limits.upper);
  if (Number.isNaN(value)) return clampToLimits((limits.lower + limits.upper) / 2, limits);
  if (value < lo) return lo;
  if (value > hi) return hi;
  return value;
}

/**
 * Quantized slider bounds that sit strictly inside the open interval: min is
 * the smallest multiple of `step` above lower, max the largest below upper.
 * When the interval is too narrow for that, the step shrinks until at least
 * two positions fit (or we fall back to float-step bounds).
 */
export function sliderGeometry(limits: OpenInterval, step = 0.0001): SliderGeometry {
  for (let s = step; s >= 1e-12; s /= 10) {
    const min = quantizeAbove(limits.lower, s);
    const max = quantizeBelow(limits.upper, s);
    if (min < max && insideLimits(min, limits) && insideLimits(max, limits)) {
      return { min, max, step: s };
    }
  }
  const lo = nextUp(limits.lower);
  const hi = nextDown(limits.upper);
  return { min: lo, max: hi, step: (hi - lo) / 100 };
}

function quantizeAbove(x: number, step: number): number {
  let k = Math.floor(x / step) + 1;
  let v = roundToStep(k, step);
  while (v <= x) v = roundToStep(++k, step);
  return v;
}

function quantizeBelow(x: number, step: number): number {
  let k = Math.ceil(x / step) - 1;
  let v = roundToStep(k, step);
  while (v >= x) v = roundToStep(--k, step);
  return v;
}

// k * step recomputed through the decimal string to dodge float drift like
// 9965 * 0.0001 = 0.9965000000000001
function roundToStep(k: number, step: number): number {
  const digits = Math.max(0, Math.ceil(-Math.log10(step)));
  return Number((k * step).toFixed(digits + 2));
}
