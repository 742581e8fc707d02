"""Scalability and contention experiments.

Random networks are built over k-trees so the compiled treewidth is bounded
by construction: every new variable's parent set is a subset (at most k) of
one existing clique, which keeps the moral graph chordal.

The market simulation drives `service.submit_edit` with Poisson arrivals.
With a synthetic lock time set, time is purely virtual: the run is a
deterministic event sequence, so rejection statistics depend only on the
arrival process and the lock constant, not on hardware.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .engine import evidence_clique, make_soft_evidence, apply_soft_evidence
from .market import Market, MarketConfig
from .model import BayesNet, Cpd, DiscreteVariable
from .service import EditSubmission, LockPolicy, MarketService

CPD_FLOOR = 1e-4
LIMIT_SHRINK = 0.01  # proposed values stay 1% of the interval away from each edge


@dataclass(frozen=True)
class LockStats:
    mean: float
    p95: float
    max: float
    samples: tuple[float, ...]


@dataclass(frozen=True)
class SimReport:
    attempted: int
    accepted: int
    rejected: int
    rejection_rate: float
    lock_mean: float
    lock_p95: float
    lock_max: float
    intensity: float
    seed: int


def generate_random_network(n_vars: int, treewidth_bound: int,
                            states_per_var: int = 2, seed: int = 0) -> BayesNet:
    if n_vars < 1:
        raise ValueError("n_vars must be at least 1")
    if treewidth_bound < 1:
        raise ValueError("treewidth_bound must be at least 1")
    if states_per_var < 2:
        raise ValueError("states_per_var must be at least 2")
    rng = np.random.default_rng(seed)
    k = treewidth_bound
    # random k-tree: a seed clique of k+1 mutually connected variables, then
    # each new variable adopts k members of one existing (k+1)-clique
    parent_sets: list[list[int]] = []
    cliques: list[list[int]] = []
    for i in range(min(n_vars, k + 1)):
        parent_sets.append(list(range(i)))
    cliques.append(list(range(min(n_vars, k + 1))))
    for i in range(k + 1, n_vars):
        base = cliques[rng.integers(len(cliques))]
        drop = rng.integers(len(base))
        chosen = [v for j, v in enumerate(base) if j != drop]
        parent_sets.append(chosen)
        cliques.append(chosen + [i])

    states = tuple(f"s{j}" for j in range(states_per_var))
    variables = [DiscreteVariable(f"v{i}", states) for i in range(n_vars)]
    cpds = []
    for i, parents in enumerate(parent_sets):
        n_rows = states_per_var ** len(parents)
        table = rng.dirichlet(np.ones(states_per_var), size=n_rows)
        table = np.maximum(table, CPD_FLOOR)
        table = table / table.sum(axis=1, keepdims=True)
        cpds.append(Cpd(f"v{i}", tuple(f"v{p}" for p in parents), table))
    return BayesNet(variables, cpds)


def _draw_edit(rng: np.random.Generator, market: Market, uid: str):
    """One random structure-preserving edit: clique, target in it, and two
    assumed variables when the clique is big enough."""
    jt = market.jt
    net = market.net
    clique = jt.cliques[rng.integers(len(jt.cliques))]
    target = clique[rng.integers(len(clique))]
    assumptions: dict[str, str] = {}
    if len(clique) > 3:
        others = [v for v in clique if v != target]
        picks = rng.choice(len(others), size=2, replace=False)
        for j in sorted(picks):
            var = net.variable(others[j])
            assumptions[var.name] = var.states[rng.integers(var.card)]
    var = net.variable(target)
    target_state = var.states[rng.integers(var.card)]
    limits = market.edit_limits(uid, target, target_state, assumptions)
    margin = LIMIT_SHRINK * (limits.upper - limits.lower)
    lo, hi = limits.lower + margin, limits.upper - margin
    if not lo < hi:
        lo = hi = 0.5 * (limits.lower + limits.upper)
    value = float(rng.uniform(lo, hi)) if lo < hi else lo
    return target, target_state, assumptions, value


def benchmark_lock_time(net: BayesNet, n_edits: int, seed: int = 0) -> LockStats:
    """Time the commit critical section (evidence application, recalibration,
    asset clique update) for a sequence of random valid edits."""
    market = Market(net, MarketConfig.from_loss_bound(10.0, net))
    market.register_user("bench")
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n_edits):
        target, target_state, assumptions, value = _draw_edit(rng, market, "bench")
        tree = market.tree
        assets = market.users["bench"]
        started = time.perf_counter()
        ev = make_soft_evidence(tree, target, target_state, assumptions, value)
        c = evidence_clique(market.jt, target, assumptions)
        new_tree = apply_soft_evidence(tree, ev)
        new_q = assets.cliques[c] * (new_tree.cliques[c] / tree.cliques[c])
        samples.append(time.perf_counter() - started)
        market.tree = new_tree
        assets.cliques[c] = new_q
    arr = np.array(samples)
    return LockStats(float(arr.mean()), float(np.percentile(arr, 95)),
                     float(arr.max()), tuple(samples))


def run_market_simulation(net: BayesNet, n_users: int, intensity: float,
                          n_edits: int, lock_policy: LockPolicy,
                          seed: int = 0,
                          trace: list[tuple[int, float, bool, float | None]] | None = None
                          ) -> SimReport:
    """Poisson-arrival market session. Proposed values are redrawn inside the
    submitting user's current limits, so in an uncontended market every edit
    is valid; rejections measure contention, not validation.

    When `trace` is a list, one (seq, arrival time, accepted, lock time)
    tuple per attempted edit is appended to it."""
    if intensity <= 0:
        raise ValueError("intensity must be positive")
    market = Market(net, MarketConfig.from_loss_bound(10.0, net))
    users = [f"u{i:03d}" for i in range(n_users)]
    for uid in users:
        market.register_user(uid)
    service = MarketService(market, lock_policy)
    virtual = lock_policy.synthetic_lock_time is not None

    rng = np.random.default_rng(seed)
    mean_gap = 60.0 / intensity
    now = 0.0
    accepted = rejected = 0
    lock_times = []
    for i in range(n_edits):
        now += float(rng.exponential(mean_gap))
        uid = users[rng.integers(len(users))]
        target, target_state, assumptions, value = _draw_edit(rng, market, uid)
        submission = EditSubmission(uid, target, target_state, assumptions, value)
        result = service.submit_edit(submission, at=now if virtual else None)
        if result.accepted:
            accepted += 1
            if result.lock_time is not None:
                lock_times.append(result.lock_time)
            if result.outcome.min_q < 1.0 - 1e-9:
                raise RuntimeError(
                    f"safety violation: accepted edit left min-q {result.outcome.min_q}")
        else:
            rejected += 1
        if trace is not None:
            trace.append((i + 1, now, result.accepted, result.lock_time))
    arr = np.array(lock_times) if lock_times else np.zeros(1)
    return SimReport(
        attempted=n_edits, accepted=accepted, rejected=rejected,
        rejection_rate=rejected / n_edits if n_edits else 0.0,
        lock_mean=float(arr.mean()), lock_p95=float(np.percentile(arr, 95)),
        lock_max=float(arr.max()), intensity=intensity, seed=seed)


def erlang_loss(intensity_per_minute: float, lock_time_s: float) -> float:
    """Expected rejection rate for a single-server loss system: a/(1+a) with
    a = arrival rate times lock time."""
    a = (intensity_per_minute / 60.0) * lock_time_s
    return a / (1.0 + a)
