"""LMSR market over a factored state space.

One consensus probability tree plus a per-user asset tree factored on the same
junction tree. An edit is a conditional soft-evidence update; the committing
user's assets change clique-locally by the probability ratio, so every user's
contingent wealth for every joint state stays available at clique cost.

Scores relate to assets by S = b ln q; keeping min q >= 1 (enforced through
edit limits) keeps every score non-negative, which bounds the market maker's
worst-case payout at b ln(q0).
"""
from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import engine
from .errors import (DuplicateUserError, LedgerError, NetworkValidationError,
                     OutOfLimitsError, UnknownUserError)
from .jtree import JunctionTree, ProbTree, compile as compile_jtree
from .jtree import initialize_prob_tree
from .model import BayesNet, validate_network

POSITION_TOL = 1e-9
REPLAY_PRICE_TOL = 1e-12

LEDGER_FIELDS = ("seq", "time", "user", "target", "target_state",
                 "assumptions", "old_p", "new_p")


@dataclass(frozen=True)
class MarketConfig:
    """b is the currency-per-log-ratio scale; q0 the uniform starting assets."""

    b: float
    q0: float = 100.0

    def __post_init__(self) -> None:
        if not self.b > 0:
            raise ValueError("b must be positive")
        if not self.q0 >= 1:
            raise ValueError("q0 must be at least 1")

    @classmethod
    def from_loss_bound(cls, loss_bound: float, net: BayesNet, q0: float = 100.0) -> "MarketConfig":
        """b = M / ln L with L the joint state count of the net."""
        ln_l = sum(math.log(v.card) for v in net.variables)
        return cls(b=loss_bound / ln_l, q0=q0)


@dataclass
class AssetTree:
    owner: str
    structure: JunctionTree
    cliques: list[np.ndarray]
    separators: list[np.ndarray]

    def copy(self) -> "AssetTree":
        return AssetTree(self.owner, self.structure,
                         [v.copy() for v in self.cliques],
                         [v.copy() for v in self.separators])

    def min_q(self, constraints: dict[str, str | list[str]] | None = None,
              states: bool = True, cap: int = engine.DEFAULT_ARGMIN_CAP) -> engine.MinResult:
        return engine.constrained_min(self.structure, self.cliques, self.separators,
                                      constraints, cap=cap, states=states)


@dataclass(frozen=True)
class EditLimits:
    lower: float
    upper: float
    m_t: float
    m_not_t: float

    def contains_strict(self, value: float) -> bool:
        return self.lower < value < self.upper


@dataclass(frozen=True)
class TradePreview:
    current_conditional: float
    limits: EditLimits
    exp_score_if_true: float
    exp_score_if_false: float
    position: str  # long | short | neutral


@dataclass(frozen=True)
class TradeRecord:
    seq: int
    time: float
    user: str
    target: str
    target_state: str
    assumptions: dict[str, str]
    old_p: float
    new_p: float


@dataclass(frozen=True)
class TradeOutcome:
    marginals: dict[str, list[float]]
    expected_score: float
    min_q: float
    min_states: list[tuple[str, ...]]
    truncated: bool
    record: TradeRecord


def serialize_record(record: TradeRecord) -> str:
    payload = {name: getattr(record, name) for name in LEDGER_FIELDS}
    return json.dumps(payload, separators=(",", ":"))


def parse_record(line: str) -> TradeRecord:
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LedgerError(f"bad ledger line: {exc}") from exc
    missing = [name for name in LEDGER_FIELDS if name not in payload]
    if missing:
        raise LedgerError(f"ledger record missing fields {missing}")
    return TradeRecord(seq=int(payload["seq"]), time=float(payload["time"]),
                       user=str(payload["user"]), target=str(payload["target"]),
                       target_state=str(payload["target_state"]),
                       assumptions=dict(payload["assumptions"]),
                       old_p=float(payload["old_p"]), new_p=float(payload["new_p"]))


class Market:
    """Consensus distribution, per-user assets, and the trade log.

    Reads take a reference to the published tree and run lock-free; commits
    are serialized by an internal lock and publish whole new objects, so a
    concurrent reader always sees the state after some trade prefix.
    """

    def __init__(self, net: BayesNet, config: MarketConfig,
                 ledger_sink: Callable[[str], None] | None = None):
        report = validate_network(net)
        if not report.ok:
            raise NetworkValidationError("; ".join(report.violations))
        self.net = net
        self.config = config
        self.jt = compile_jtree(net)
        self.tree: ProbTree = initialize_prob_tree(net, self.jt)
        self.users: dict[str, AssetTree] = {}
        self.records: list[TradeRecord] = []
        self.seq_base = 0  # > 0 when resumed from a snapshot
        self.ledger_sink = ledger_sink
        self._write_lock = threading.Lock()

    # -- reads ---------------------------------------------------------------

    @property
    def next_seq(self) -> int:
        return self.seq_base + len(self.records) + 1

    def marginal(self, name: str) -> list[float]:
        return [float(x) for x in engine.query_marginal(self.tree, (name,)).values]

    def marginals(self, names: list[str] | None = None) -> dict[str, list[float]]:
        names = list(names) if names else list(self.net.names)
        return {name: self.marginal(name) for name in names}

    def assets(self, uid: str) -> AssetTree:
        try:
            return self.users[uid]
        except KeyError:
            raise UnknownUserError(f"unknown user {uid!r}") from None

    def register_user(self, uid: str) -> AssetTree:
        """Uniform starting assets: every clique and separator cell q0."""
        with self._write_lock:
            if uid in self.users:
                raise DuplicateUserError(f"user {uid!r} already registered")
            q0 = self.config.q0
            jt = self.jt
            tree = AssetTree(uid, jt,
                             [np.full(jt.clique_shape(c), q0) for c in range(len(jt.cliques))],
                             [np.full(jt.sep_shape(s), q0) for s in range(len(jt.separators))])
            self.users[uid] = tree
            return tree

    def edit_limits(self, uid: str, target: str, target_state: str,
                    assumptions: dict[str, str] | None = None) -> EditLimits:
        assumptions = dict(assumptions or {})
        tree = self.tree
        assets = self.assets(uid)
        p_t = engine.query_conditional(tree, target, target_state, assumptions)
        var = self.net.variable(target)
        others = [s for s in var.states if s != var.states[var.state_index(target_state)]]
        m_t = assets.min_q({**assumptions, target: target_state}, states=False).value
        m_not = assets.min_q({**assumptions, target: others}, states=False).value
        return EditLimits(lower=p_t / m_t, upper=1.0 - (1.0 - p_t) / m_not,
                          m_t=m_t, m_not_t=m_not)

    def expected_assets(self, uid: str,
                        condition: dict[str, str | list[str]] | None = None) -> float:
        tree = self.tree
        if condition:
            tree = engine.condition_tree(tree, condition)
        return self._expected_score(tree, self.assets(uid))

    def _expected_score(self, tree: ProbTree, assets: AssetTree) -> float:
        total = 0.0
        for p_c, q_c in zip(tree.cliques, assets.cliques):
            total += float((p_c * np.log(q_c)).sum())
        for p_s, q_s in zip(tree.separators, assets.separators):
            total -= float((p_s * np.log(q_s)).sum())
        return self.config.b * total

    def preview_trade(self, uid: str, target: str, target_state: str,
                      assumptions: dict[str, str] | None = None) -> TradePreview:
        assumptions = dict(assumptions or {})
        limits = self.edit_limits(uid, target, target_state, assumptions)
        p_t = engine.query_conditional(self.tree, target, target_state, assumptions)
        var = self.net.variable(target)
        others = [s for s in var.states if s != target_state]
        s_true = self.expected_assets(uid, {**assumptions, target: target_state})
        s_false = self.expected_assets(uid, {**assumptions, target: others})
        if s_true - s_false > POSITION_TOL:
            position = "long"
        elif s_false - s_true > POSITION_TOL:
            position = "short"
        else:
            position = "neutral"
        return TradePreview(p_t, limits, s_true, s_false, position)

    # -- writes --------------------------------------------------------------

    def commit_trade(self, uid: str, target: str, target_state: str,
                     assumptions: dict[str, str] | None, new_value: float) -> TradeOutcome:
        assumptions = dict(assumptions or {})
        with self._write_lock:
            limits = self.edit_limits(uid, target, target_state, assumptions)
            if not limits.contains_strict(new_value):
                raise OutOfLimitsError(
                    f"value {new_value} outside open interval "
                    f"({limits.lower}, {limits.upper})", limits.lower, limits.upper)
            old_p = engine.query_conditional(self.tree, target, target_state, assumptions)
            record = TradeRecord(seq=self.next_seq, time=time.time(), user=uid,
                                 target=target, target_state=target_state,
                                 assumptions=assumptions, old_p=old_p, new_p=new_value)
            return self._execute(record)

    def apply_record(self, record: TradeRecord) -> TradeOutcome:
        """Replay path: same commit mechanics, but the record is authoritative
        and is cross-checked against the reconstructed state."""
        with self._write_lock:
            if record.seq != self.next_seq:
                raise LedgerError(f"sequence gap: expected {self.next_seq}, got {record.seq}")
            if record.user not in self.users:
                self.users[record.user] = AssetTree(
                    record.user, self.jt,
                    [np.full(self.jt.clique_shape(c), self.config.q0)
                     for c in range(len(self.jt.cliques))],
                    [np.full(self.jt.sep_shape(s), self.config.q0)
                     for s in range(len(self.jt.separators))])
            old_p = engine.query_conditional(self.tree, record.target,
                                             record.target_state, record.assumptions)
            if abs(old_p - record.old_p) > REPLAY_PRICE_TOL:
                raise LedgerError(
                    f"record {record.seq}: stored old_p {record.old_p} does not match "
                    f"reconstructed {old_p}")
            limits = self.edit_limits(record.user, record.target,
                                      record.target_state, record.assumptions)
            if not limits.contains_strict(record.new_p):
                raise LedgerError(
                    f"record {record.seq}: value {record.new_p} violates limits "
                    f"({limits.lower}, {limits.upper}) at replay point")
            return self._execute(record)

    def _execute(self, record: TradeRecord) -> TradeOutcome:
        tree = self.tree
        assets = self.assets(record.user)
        ev = engine.make_soft_evidence(tree, record.target, record.target_state,
                                       record.assumptions, record.new_p)
        c = engine.evidence_clique(self.jt, record.target, record.assumptions)
        new_tree = engine.apply_soft_evidence(tree, ev)

        new_assets = assets.copy()
        new_assets.cliques[c] = new_assets.cliques[c] * (new_tree.cliques[c] / tree.cliques[c])

        if self.ledger_sink is not None:
            self.ledger_sink(serialize_record(record))
        self.tree = new_tree
        self.users[record.user] = new_assets
        self.records.append(record)

        comp = next(comp for comp in self.jt.components if c in comp)
        affected = sorted({v for i in comp for v in self.jt.cliques[i]},
                          key=self.net.var_index)
        res = new_assets.min_q()
        return TradeOutcome(
            marginals={name: self.marginal(name) for name in affected},
            expected_score=self._expected_score(new_tree, new_assets),
            min_q=res.value, min_states=res.states, truncated=res.truncated,
            record=record)

    def records_since(self, seq: int) -> list[TradeRecord]:
        return [r for r in self.records if r.seq > seq]


# Spec-level operation aliases; the methods hold the behavior.

def create_market(net: BayesNet, config: MarketConfig,
                  ledger_sink: Callable[[str], None] | None = None) -> Market:
    return Market(net, config, ledger_sink)


def register_user(market: Market, uid: str) -> AssetTree:
    return market.register_user(uid)


def edit_limits(market: Market, uid: str, target: str, target_state: str,
                assumptions: dict[str, str] | None = None) -> EditLimits:
    return market.edit_limits(uid, target, target_state, assumptions)


def expected_assets(market: Market, uid: str,
                    condition: dict[str, str | list[str]] | None = None) -> float:
    return market.expected_assets(uid, condition)


def preview_trade(market: Market, uid: str, target: str, target_state: str,
                  assumptions: dict[str, str] | None = None) -> TradePreview:
    return market.preview_trade(uid, target, target_state, assumptions)


def commit_trade(market: Market, uid: str, target: str, target_state: str,
                 assumptions: dict[str, str] | None, new_value: float) -> TradeOutcome:
    return market.commit_trade(uid, target, target_state, assumptions, new_value)
