/**
 * Edit form rules. An edit is target + state plus optional assumptions, and
 * the engine only accepts assumptions that live in one clique together with
 * the target; that keeps the factored state exact. The picker enforces the
 * rule up front and the validator explains any leftover violation instead of
 * letting the service bounce it.
 */

import type { EditRequest, MarketInfo } from "./types.js";

/**
 * Variables a user may still add as assumptions: those sharing at least one
 * clique with the target and everything already assumed. Narrows as
 * assumptions accumulate, so the picker can never build an invalid set.
 */
export function assumptionCandidates(
  market: MarketInfo,
  target: string,
  chosen: string[] = [],
): string[] {
  const required = new Set([target, ...chosen]);
  const out = new Set<string>();
  for (const clique of market.cliques) {
    const members = new Set(clique);
    if (![...required].every((v) => members.has(v))) continue;
    for (const v of clique) {
      if (!required.has(v)) out.add(v);
    }
  }
  return [...out].sort();
}

export function statesOf(market: MarketInfo, name: string): string[] {
  const variable = market.variables.find((v) => v.name === name);
  return variable ? variable.states : [];
}

/**
 * Structural check run before any network call. Returns human-readable
 * problems; an empty list means the form is safe to preview or submit.
 */
export function validateEdit(market: MarketInfo, edit: EditRequest): string[] {
  const errors: string[] = [];
  const names = new Set(market.variables.map((v) => v.name));

  if (!names.has(edit.target)) {
    errors.push(`unknown target variable "${edit.target}"`);
    return errors;
  }
  if (!statesOf(market, edit.target).includes(edit.target_state)) {
    errors.push(`"${edit.target_state}" is not a state of ${edit.target}`);
  }

  const assumed = Object.keys(edit.assumptions);
  for (const name of assumed) {
    if (!names.has(name)) {
      errors.push(`unknown assumption variable "${name}"`);
    } else if (!statesOf(market, name).includes(edit.assumptions[name])) {
      errors.push(`"${edit.assumptions[name]}" is not a state of ${name}`);
    }
  }
  if (errors.length) return errors;
  if (!assumed.length) return errors;

  // the whole set must fit a single clique; name the assumption that breaks it
  const scope = new Set([edit.target, ...assumed]);
  const fits = (vars: Iterable<string>) =>
    market.cliques.some((clique) => {
      const members = new Set(clique);
      return [...vars].every((v) => members.has(v));
    });
  if (fits(scope)) return errors;

  for (const name of assumed) {
    if (!fits([edit.target, name])) {
      errors.push(`assumption ${name} shares no clique with target ${edit.target}`);
    }
  }
  if (!errors.length) {
    errors.push(
      `assumptions ${assumed.join(", ")} do not fit one clique together with ${edit.target}`,
    );
  }
  return errors;
}
