"""Propagation over junction-tree potentials.

Three families of operations share the compiled structure:
  * sum-calibration queries (marginals, conditionals, hard conditioning),
  * conditional soft evidence (Jeffrey updates) implementing market edits,
  * min-calibration and constrained minimization over factored assets.

Min-propagation runs the same division-based two-phase schedule as
sum-calibration with min in place of sum; validity for the quotient form
Π q_c / Π q_s is checked against brute-force oracles in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import QueryError, SameCliqueError, ZeroProbabilityError
from .jtree import (JunctionTree, Potential, ProbTree, embed, marginalize,
                    safe_divide, sum_calibrate)

MIN_TIE_RTOL = 1e-9
DEFAULT_ARGMIN_CAP = 100


@dataclass
class SoftEvidence:
    """A structure-preserving edit: new conditional distribution for `target`
    given the assumption assignment, mass off the edited state spread over the
    remaining states in proportion to their previous conditional."""

    target: str
    target_state: str
    assumptions: dict[str, str]
    new_conditional: np.ndarray

    def validate(self, card: int) -> None:
        nc = self.new_conditional
        if nc.shape != (card,):
            raise QueryError(f"new conditional needs {card} entries, got {nc.shape}")
        if np.any(nc <= 0.0) or np.any(nc >= 1.0):
            raise QueryError("new conditional entries must lie strictly in (0, 1)")
        if abs(float(nc.sum()) - 1.0) > 1e-12:
            raise QueryError("new conditional must sum to 1")
        if self.target in self.assumptions:
            raise QueryError(f"target {self.target!r} cannot also be assumed")


@dataclass
class MinTree:
    structure: JunctionTree
    cliques: list[np.ndarray]
    separators: list[np.ndarray]
    link_potentials: list[np.ndarray]

    @property
    def global_min(self) -> float:
        return float(self.cliques[0].min())


@dataclass
class MinResult:
    value: float
    states: list[tuple[str, ...]]
    truncated: bool


# ---------------------------------------------------------------------------
# sum queries

def _resolve_assignment(jt: JunctionTree, assignment: dict[str, str]) -> dict[str, int]:
    out = {}
    for name, label in assignment.items():
        out[name] = jt.net.variable(name).state_index(label)
    return out


def evidence_clique(jt: JunctionTree, target: str, assumptions: dict[str, str]) -> int:
    """The clique an edit on (target | assumptions) lives in: smallest clique
    containing all of them, ties by clique order."""
    names = {target, *assumptions}
    for name in names:
        jt.net.var_index(name)
    c = jt.smallest_clique_containing(names)
    if c is None:
        raise SameCliqueError(
            f"variables {sorted(names)} do not share a clique; "
            "the edit is not structure preserving")
    return c


def query_marginal(tree: ProbTree, names: tuple[str, ...] | list[str]) -> Potential:
    """Exact joint marginal over `names`, which must share a clique."""
    jt = tree.structure
    names = tuple(sorted(set(names), key=jt.net.var_index))
    if not names:
        raise QueryError("empty variable set")
    c = jt.smallest_clique_containing(set(names))
    if c is None:
        raise QueryError(f"variables {names} span multiple cliques; query per clique")
    values = marginalize(tree.cliques[c], jt.cliques[c], names)
    return Potential(names, values / values.sum())


def query_conditional(tree: ProbTree, target: str, target_state: str,
                      assumptions: dict[str, str]) -> float:
    """p(target = target_state | assumptions), read from the evidence clique."""
    dist = _conditional_dist(tree, target, assumptions)
    t = tree.structure.net.variable(target).state_index(target_state)
    return float(dist[t])


def _conditional_dist(tree: ProbTree, target: str, assumptions: dict[str, str]) -> np.ndarray:
    jt = tree.structure
    c = evidence_clique(jt, target, assumptions)
    keep = tuple(sorted({target, *assumptions}, key=jt.net.var_index))
    values = marginalize(tree.cliques[c], jt.cliques[c], keep)
    idx = _resolve_assignment(jt, assumptions)
    selector = tuple(slice(None) if v == target else idx[v] for v in keep)
    sliced = values[selector]
    mass = float(sliced.sum())
    if mass <= 0.0:
        raise ZeroProbabilityError(f"assumption event {assumptions} has probability 0")
    return sliced / mass


def make_soft_evidence(tree: ProbTree, target: str, target_state: str,
                       assumptions: dict[str, str], new_value: float) -> SoftEvidence:
    """Build the full new conditional for an edit moving p(target=state | a)
    to `new_value`, spreading 1 - new_value proportionally to the previous
    conditional over the other states."""
    old = _conditional_dist(tree, target, assumptions)
    t = tree.structure.net.variable(target).state_index(target_state)
    if not 0.0 < new_value < 1.0:
        raise QueryError("edited value must lie strictly in (0, 1)")
    new = old * ((1.0 - new_value) / (1.0 - old[t]))
    new[t] = new_value
    return SoftEvidence(target, target_state, dict(assumptions), new)


def apply_soft_evidence(tree: ProbTree, ev: SoftEvidence) -> ProbTree:
    """Jeffrey update: scale the evidence clique's cells matching each
    (target = τ, assumptions) by new(τ)/old(τ), then recalibrate the affected
    component. Returns a new calibrated tree."""
    jt = tree.structure
    ev.validate(jt.net.card(ev.target))
    c = evidence_clique(jt, ev.target, ev.assumptions)
    old = _conditional_dist(tree, ev.target, ev.assumptions)
    ratios = ev.new_conditional / old

    out = tree.copy()
    out.cliques[c] = out.cliques[c] * _ratio_field(jt, c, ev, ratios)
    component = next(k for k, comp in enumerate(jt.components) if c in comp)
    _calibrate_component(out, component)
    return out


def _ratio_field(jt: JunctionTree, c: int, ev: SoftEvidence, ratios: np.ndarray) -> np.ndarray:
    """Per-cell multiplier over clique c: ratio of the target state on cells
    matching the assumptions, 1 elsewhere."""
    scope = jt.cliques[c]
    idx = _resolve_assignment(jt, ev.assumptions)
    field = np.ones(jt.clique_shape(c))
    selector = []
    for v in scope:
        if v == ev.target:
            selector.append(slice(None))
        elif v in idx:
            selector.append(idx[v])
        else:
            selector.append(slice(None))
    t_axis_vars = [v for v in scope if v == ev.target or v not in idx]
    target_pos = t_axis_vars.index(ev.target)
    shape = [1] * len(t_axis_vars)
    shape[target_pos] = len(ratios)
    field[tuple(selector)] = ratios.reshape(shape)
    return field


def _calibrate_component(tree: ProbTree, component: int) -> None:
    jt = tree.structure
    comp = set(jt.components[component])
    order = [(p, c, e) for (p, c, e) in jt.schedule() if p in comp]
    from .jtree import _pass_message
    for parent, child, e in reversed(order):
        _pass_message(tree, child, parent, e)
    for parent, child, e in order:
        _pass_message(tree, parent, child, e)
    for c in jt.components[component]:
        total = tree.cliques[c].sum()
        if total > 0:
            tree.cliques[c] = tree.cliques[c] / total
    for e, (i, j) in enumerate(jt.edges):
        if i in comp:
            total = tree.separators[e].sum()
            if total > 0:
                tree.separators[e] = tree.separators[e] / total
    tree.calibrated = True


def condition_tree(tree: ProbTree, condition: dict[str, str | list[str]]) -> ProbTree:
    """Clone + hard evidence + recalibration. `condition` maps variables to an
    allowed state or list of states."""
    jt = tree.structure
    out = tree.copy()
    for name, allowed in condition.items():
        var = jt.net.variable(name)
        labels = [allowed] if isinstance(allowed, str) else list(allowed)
        mask = np.zeros(var.card)
        for label in labels:
            mask[var.state_index(label)] = 1.0
        c = jt.smallest_clique_containing({name})
        out.cliques[c] = out.cliques[c] * embed(mask, (name,), jt.cliques[c])
    sum_calibrate(out)
    for c, values in enumerate(out.cliques):
        if values.sum() <= 0.0:
            raise ZeroProbabilityError(f"conditioning event {condition} has probability 0")
    return out


# ---------------------------------------------------------------------------
# min propagation

def _combined_edges(jt: JunctionTree) -> list[tuple[int, int, int, tuple[str, ...]]]:
    """Real edges plus cross-component links as (i, j, edge_id, sep_scope)."""
    out = [(i, j, e, jt.separators[e]) for e, (i, j) in enumerate(jt.edges)]
    for k, (i, j) in enumerate(jt.links):
        out.append((i, j, len(jt.edges) + k, ()))
    return out


def _combined_schedule(jt: JunctionTree) -> list[tuple[int, int, int, tuple[str, ...]]]:
    """(parent, child, edge_id, sep_scope) DFS order over the linked forest,
    rooted at clique 0."""
    adj: list[list[tuple[int, int, tuple[str, ...]]]] = [[] for _ in jt.cliques]
    for i, j, e, scope in _combined_edges(jt):
        adj[i].append((j, e, scope))
        adj[j].append((i, e, scope))
    for lst in adj:
        lst.sort()
    order = []
    seen = {0}
    stack = [0]
    while stack:
        node = stack.pop()
        for other, e, scope in reversed(adj[node]):
            if other not in seen:
                seen.add(other)
                order.append((node, other, e, scope))
                stack.append(other)
    return order


def _min_pass(cliques, seps, c_scopes, src, dst, e, sep_scope):
    msg = marginalize(cliques[src], c_scopes[src], sep_scope, op="min")
    cliques[dst] = cliques[dst] * embed(msg / seps[e], sep_scope, c_scopes[dst])
    seps[e] = msg


def _min_propagate(jt: JunctionTree, cliques: list[np.ndarray],
                   seps: list[np.ndarray], scopes: list[tuple[str, ...]],
                   sep_scopes: list[tuple[str, ...]]) -> None:
    order = _combined_schedule(jt)
    for parent, child, e, _ in reversed(order):
        _min_pass(cliques, seps, scopes, child, parent, e, sep_scopes[e])
    for parent, child, e, _ in order:
        _min_pass(cliques, seps, scopes, parent, child, e, sep_scopes[e])


def min_calibrate(jt: JunctionTree, clique_values: list[np.ndarray],
                  sep_values: list[np.ndarray]) -> MinTree:
    """Min-calibrated potentials: afterwards every clique's minimum equals the
    global minimum of Π_c q_c / Π_s q_s."""
    cliques = [v.astype(np.float64, copy=True) for v in clique_values]
    seps = [v.astype(np.float64, copy=True) for v in sep_values]
    links = [np.ones(()) for _ in jt.links]
    all_seps = seps + links
    sep_scopes = list(jt.separators) + [() for _ in jt.links]
    _min_propagate(jt, cliques, all_seps, list(jt.cliques), sep_scopes)
    return MinTree(jt, cliques, all_seps[:len(seps)], all_seps[len(seps):])


def constrained_min(jt: JunctionTree, clique_values: list[np.ndarray],
                    sep_values: list[np.ndarray],
                    constraints: dict[str, str | list[str]] | None = None,
                    cap: int = DEFAULT_ARGMIN_CAP,
                    states: bool = True) -> MinResult:
    """Minimum of Π_c q_c / Π_s q_s over configurations consistent with the
    constraints, with argmin states enumerated by traceback.

    The argmin list is complete (in mixed-radix order over declared variables,
    last fastest) when the tie count is at most `cap`; otherwise it holds cap
    states and the truncation flag is set.
    """
    net = jt.net
    allowed: dict[str, list[int]] = {v.name: list(range(v.card)) for v in net.variables}
    for name, spec in (constraints or {}).items():
        var = net.variable(name)
        labels = [spec] if isinstance(spec, str) else list(spec)
        if not labels:
            raise QueryError(f"empty constraint for {name!r}")
        allowed[name] = sorted({var.state_index(s) for s in labels})

    def reduce(values: np.ndarray, scope: tuple[str, ...]) -> np.ndarray:
        if all(len(allowed[v]) == net.card(v) for v in scope):
            return values.astype(np.float64, copy=True)
        return values[np.ix_(*[allowed[v] for v in scope])].astype(np.float64)

    cliques = [reduce(v, jt.cliques[c]) for c, v in enumerate(clique_values)]
    seps = [reduce(v, jt.separators[s]) for s, v in enumerate(sep_values)]
    links = [np.ones(()) for _ in jt.links]
    all_seps = seps + links
    sep_scopes = list(jt.separators) + [() for _ in jt.links]
    _min_propagate(jt, cliques, all_seps, list(jt.cliques), sep_scopes)
    value = float(cliques[0].min())

    if not states:
        return MinResult(value, [], False)
    assignments, truncated = _argmin_states(jt, cliques, allowed, value, cap)
    labels = [
        tuple(net.variables[i].states[s] for i, s in enumerate(full))
        for full in assignments
    ]
    return MinResult(value, labels, truncated)


def _argmin_states(jt: JunctionTree, cliques: list[np.ndarray],
                   allowed: dict[str, list[int]], value: float,
                   cap: int) -> tuple[list[tuple[int, ...]], bool]:
    """Enumerate joint states whose every clique belief ties the global min."""
    net = jt.net
    thresh = value * (1.0 + MIN_TIE_RTOL)
    truncated = False

    # pre-order over the linked forest: consistency of a new clique with
    # everything already assigned reduces to its parent separator (running
    # intersection), so tie cells are bucketed by that projection
    visit: list[tuple[int, tuple[str, ...]]] = [(0, ())]
    visit += [(child, sep_scope) for _, child, _, sep_scope in _combined_schedule(jt)]

    partials: list[dict[str, int]] = [{}]
    for c, shared in visit:
        scope = jt.cliques[c]
        minimal = np.argwhere(cliques[c] <= thresh)
        pos = [scope.index(v) for v in shared]
        proj = minimal[:, pos].tolist()
        cells = minimal.tolist()
        buckets: dict[tuple[int, ...], list[list[int]]] = {}
        for key, cell in zip(proj, cells):
            buckets.setdefault(tuple(key), []).append(cell)
        reduced = {v: {s: r for r, s in enumerate(allowed[v])} for v in shared}

        extended: list[dict[str, int]] = []
        for partial in partials:
            key = tuple(reduced[v][partial[v]] for v in shared)
            for cell in buckets.get(key, ()):
                nxt = dict(partial)
                for k, v in enumerate(scope):
                    nxt[v] = allowed[v][cell[k]]
                extended.append(nxt)
                if len(extended) > cap:
                    break
            if len(extended) > cap:
                break
        if len(extended) > cap:
            truncated = True
            extended = extended[:cap]
        partials = extended

    names = net.names
    # variables in single-state constraint sets may be missing only if some
    # variable appears in no clique, which compile() rules out
    full = sorted(
        (tuple(p[v] for v in names) for p in partials))
    return full[:cap], truncated
