"""Wire layer: serialized trade submission, persistence, recovery.

Commits are strictly one-at-a-time. While one is in flight the service either
rejects concurrent submissions as busy (retriable, distinct from validation
failure) or lets a bounded number of them wait. Submissions carry a client
token; resubmitting an accepted token returns the original outcome without
touching the ledger.

The service also understands a virtual clock: when submissions carry explicit
arrival times and the policy sets a synthetic lock time, busy windows are
computed arithmetically instead of by holding a real lock. Simulations use
this to reproduce rejection statistics independent of hardware speed.
"""
from __future__ import annotations

import base64
import json
import math
import threading
import time
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np
from pydantic import BaseModel

from .errors import (DuplicateUserError, LedgerError, OutOfLimitsError,
                     QueryError, SameCliqueError, UnknownUserError,
                     ZeroProbabilityError)
from .market import (Market, MarketConfig, TradeOutcome, parse_record,
                     serialize_record)
from .model import BayesNet, parse_network, serialize_network

SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class LockPolicy:
    mode: str = "reject"  # reject | queue
    queue_capacity: int = 0
    synthetic_lock_time: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("reject", "queue"):
            raise ValueError(f"unknown lock mode {self.mode!r}")
        if self.queue_capacity < 0:
            raise ValueError("queue_capacity must be >= 0")


@dataclass(frozen=True)
class EditSubmission:
    user: str
    target: str
    target_state: str
    assumptions: dict[str, str]
    new_value: float
    token: str | None = None


@dataclass(frozen=True)
class SubmitResult:
    accepted: bool
    outcome: TradeOutcome | None = None
    reason: str | None = None  # busy|out-of-limits|same-clique|unknown-user|zero-probability|invalid|queue-full
    detail: str = ""
    lower: float | None = None  # refreshed limits on out-of-limits rejections
    upper: float | None = None
    lock_time: float | None = None


class MarketService:
    def __init__(self, market: Market, policy: LockPolicy = LockPolicy()):
        self.market = market
        self.policy = policy
        self._commit_lock = threading.Lock()
        self._admission = threading.Lock()
        self._waiting = 0
        self._tokens: dict[str, SubmitResult] = {}
        # virtual-clock state: end of the current busy window
        self._busy_until = 0.0
        self._queued_starts: list[float] = []

    # -- submission ----------------------------------------------------------

    def submit_edit(self, submission: EditSubmission, at: float | None = None) -> SubmitResult:
        token = submission.token
        if token is not None and token in self._tokens:
            return self._tokens[token]
        if at is not None and self.policy.synthetic_lock_time is not None:
            result = self._submit_virtual(submission, at)
        else:
            result = self._submit_real(submission)
        if token is not None and result.accepted:
            self._tokens[token] = result
        return result

    def _submit_virtual(self, submission: EditSubmission, at: float) -> SubmitResult:
        lock = self.policy.synthetic_lock_time
        self._queued_starts = [s for s in self._queued_starts if s > at]
        if at >= self._busy_until:
            start = at
        elif self.policy.mode == "queue" and len(self._queued_starts) < self.policy.queue_capacity:
            start = self._busy_until
        else:
            reason = "busy" if self.policy.mode == "reject" else "queue-full"
            return SubmitResult(False, reason=reason,
                                detail=f"committing until t={self._busy_until:.3f}")
        result = self._commit(submission)
        if result.accepted:
            if start > at:
                self._queued_starts.append(start)
            self._busy_until = start + lock
            result = SubmitResult(True, outcome=result.outcome, lock_time=lock)
        return result

    def _submit_real(self, submission: EditSubmission) -> SubmitResult:
        if self.policy.mode == "queue":
            with self._admission:
                if self._commit_lock.locked() and self._waiting >= self.policy.queue_capacity:
                    return SubmitResult(False, reason="queue-full",
                                        detail="waiting line at capacity")
                self._waiting += 1
            self._commit_lock.acquire()
            with self._admission:
                self._waiting -= 1
        else:
            if not self._commit_lock.acquire(blocking=False):
                return SubmitResult(False, reason="busy",
                                    detail="another commit is in flight")
        try:
            token = submission.token
            if token is not None and token in self._tokens:
                return self._tokens[token]
            started = time.perf_counter()
            result = self._commit(submission)
            if self.policy.synthetic_lock_time is not None:
                time.sleep(self.policy.synthetic_lock_time)
                lock_time = self.policy.synthetic_lock_time
            else:
                lock_time = time.perf_counter() - started
            if result.accepted:
                result = SubmitResult(True, outcome=result.outcome, lock_time=lock_time)
            return result
        finally:
            self._commit_lock.release()

    def _commit(self, s: EditSubmission) -> SubmitResult:
        try:
            outcome = self.market.commit_trade(s.user, s.target, s.target_state,
                                               s.assumptions, s.new_value)
            return SubmitResult(True, outcome=outcome)
        except OutOfLimitsError as exc:
            return SubmitResult(False, reason="out-of-limits", detail=str(exc),
                                lower=exc.lower, upper=exc.upper)
        except SameCliqueError as exc:
            return SubmitResult(False, reason="same-clique", detail=str(exc))
        except UnknownUserError as exc:
            return SubmitResult(False, reason="unknown-user", detail=str(exc))
        except ZeroProbabilityError as exc:
            return SubmitResult(False, reason="zero-probability", detail=str(exc))
        except (QueryError, KeyError, ValueError) as exc:
            return SubmitResult(False, reason="invalid", detail=str(exc))

    # -- persistence ---------------------------------------------------------

    def snapshot_state(self) -> dict:
        """Self-contained market image: config, network text, and every
        potential as raw little-endian float64 bytes in row-major order."""
        m = self.market
        return {
            "version": SNAPSHOT_VERSION,
            "config": {"b": m.config.b, "q0": m.config.q0},
            "network": serialize_network(m.net),
            "seq": m.next_seq - 1,
            "tree": {
                "cliques": [_encode(v) for v in m.tree.cliques],
                "separators": [_encode(v) for v in m.tree.separators],
            },
            "users": {
                uid: {
                    "cliques": [_encode(v) for v in at.cliques],
                    "separators": [_encode(v) for v in at.separators],
                }
                for uid, at in sorted(m.users.items())
            },
        }


def _encode(values: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(values, dtype="<f8").tobytes()).decode()


def _decode(text: str, shape: tuple[int, ...]) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(text), dtype="<f8")
    return raw.reshape(shape).copy()


def restore_state(snapshot: dict) -> Market:
    if snapshot.get("version") != SNAPSHOT_VERSION:
        raise LedgerError(f"unsupported snapshot version {snapshot.get('version')!r}")
    net = parse_network(snapshot["network"])
    config = MarketConfig(b=snapshot["config"]["b"], q0=snapshot["config"]["q0"])
    market = Market(net, config)
    jt = market.jt
    market.tree.cliques = [
        _decode(text, jt.clique_shape(c)) for c, text in enumerate(snapshot["tree"]["cliques"])]
    market.tree.separators = [
        _decode(text, jt.sep_shape(s)) for s, text in enumerate(snapshot["tree"]["separators"])]
    for uid, arrays in snapshot["users"].items():
        at = market.register_user(uid)
        at.cliques = [_decode(text, jt.clique_shape(c))
                      for c, text in enumerate(arrays["cliques"])]
        at.separators = [_decode(text, jt.sep_shape(s))
                         for s, text in enumerate(arrays["separators"])]
    market.seq_base = int(snapshot["seq"])
    return market


def replay_ledger(net: BayesNet, config: MarketConfig,
                  stream: Iterable[str] | TextIO,
                  onto: Market | None = None) -> Market:
    """Rebuild a market by re-committing every ledger record in order. Each
    record is revalidated at its replay point: sequence must be dense, the
    stored pre-edit conditional must match the reconstructed tree, and the
    value must still sit inside the re-derived limits."""
    market = onto if onto is not None else Market(net, config)
    for line in stream:
        line = line.strip()
        if not line:
            continue
        market.apply_record(parse_record(line))
    return market


class FileLedger:
    """Append-only line sink; each line is flushed before the commit that
    produced it publishes (write-ahead)."""

    def __init__(self, path: str):
        self.path = path
        self._fh: TextIO = open(path, "a", encoding="utf-8")

    def __call__(self, line: str) -> None:
        self._fh.write(line + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def open_market(net: BayesNet, config: MarketConfig,
                ledger_path: str | None = None) -> Market:
    """Create a market, replaying an existing ledger file first if present."""
    market = Market(net, config)
    if ledger_path is not None:
        try:
            with open(ledger_path, "r", encoding="utf-8") as fh:
                replay_ledger(net, config, fh, onto=market)
        except FileNotFoundError:
            pass
        market.ledger_sink = FileLedger(ledger_path)
    return market


# -- HTTP app ----------------------------------------------------------------

class UserBody(BaseModel):
    id: str


class PreviewBody(BaseModel):
    target: str
    target_state: str
    assumptions: dict[str, str] = {}


class TradeBody(BaseModel):
    target: str
    target_state: str
    assumptions: dict[str, str] = {}
    new_value: float
    token: str | None = None


def create_app(service: MarketService):
    from fastapi import FastAPI, HTTPException

    app = FastAPI(title="cpmarket", docs_url=None, redoc_url=None)
    market = service.market

    def outcome_json(outcome: TradeOutcome) -> dict:
        r = outcome.record
        return {
            "marginals": outcome.marginals,
            "expected_score": outcome.expected_score,
            "min_q": outcome.min_q,
            "min_score": market.config.b * math.log(outcome.min_q),
            "min_states": [dict(zip(market.net.names, s)) for s in outcome.min_states],
            "truncated": outcome.truncated,
            "record": {"seq": r.seq, "time": r.time, "user": r.user,
                       "target": r.target, "target_state": r.target_state,
                       "assumptions": r.assumptions, "old_p": r.old_p, "new_p": r.new_p},
        }

    @app.get("/market")
    def get_market() -> dict:
        jt = market.jt
        return {
            "variables": [{"name": v.name, "states": list(v.states)} for v in market.net.variables],
            "cliques": [list(c) for c in jt.cliques],
            "separators": [list(s) for s in jt.separators],
            "treewidth": jt.treewidth,
            "b": market.config.b,
            "q0": market.config.q0,
            "seq": market.next_seq - 1,
        }

    @app.get("/marginals")
    def get_marginals(vars: str | None = None) -> dict:
        names = [v for v in vars.split(",") if v] if vars else None
        try:
            return {"marginals": market.marginals(names), "seq": market.next_seq - 1}
        except KeyError as exc:
            raise HTTPException(400, f"unknown variable {exc.args[0]!r}")

    @app.post("/users", status_code=201)
    def post_user(body: UserBody) -> dict:
        try:
            market.register_user(body.id)
        except DuplicateUserError as exc:
            raise HTTPException(409, str(exc))
        return {"id": body.id, "expected_score": market.expected_assets(body.id)}

    @app.get("/users/{uid}/assets")
    def get_assets(uid: str) -> dict:
        try:
            assets = market.assets(uid)
            score = market.expected_assets(uid)
        except UnknownUserError as exc:
            raise HTTPException(404, str(exc))
        res = assets.min_q()
        return {
            "id": uid,
            "expected_score": score,
            "min_q": res.value,
            "min_score": market.config.b * math.log(res.value),
            "min_states": [dict(zip(market.net.names, s)) for s in res.states],
            "truncated": res.truncated,
        }

    @app.post("/users/{uid}/preview")
    def post_preview(uid: str, body: PreviewBody) -> dict:
        try:
            pv = market.preview_trade(uid, body.target, body.target_state, body.assumptions)
        except UnknownUserError as exc:
            raise HTTPException(404, str(exc))
        except SameCliqueError as exc:
            raise HTTPException(422, str(exc))
        except (QueryError, ZeroProbabilityError, KeyError) as exc:
            raise HTTPException(400, str(exc))
        return {
            "current_conditional": pv.current_conditional,
            "limits": {"lower": pv.limits.lower, "upper": pv.limits.upper,
                       "m_t": pv.limits.m_t, "m_not_t": pv.limits.m_not_t},
            "exp_score_if_true": pv.exp_score_if_true,
            "exp_score_if_false": pv.exp_score_if_false,
            "position": pv.position,
        }

    @app.post("/users/{uid}/trades")
    def post_trade(uid: str, body: TradeBody) -> dict:
        submission = EditSubmission(user=uid, target=body.target,
                                    target_state=body.target_state,
                                    assumptions=body.assumptions,
                                    new_value=body.new_value, token=body.token)
        result = service.submit_edit(submission)
        if result.accepted:
            return {"accepted": True, **outcome_json(result.outcome)}
        if result.reason in ("busy", "queue-full"):
            raise HTTPException(503, {"reason": result.reason, "detail": result.detail})
        if result.reason == "out-of-limits":
            raise HTTPException(409, {"reason": result.reason, "detail": result.detail,
                                      "lower": result.lower, "upper": result.upper})
        if result.reason == "unknown-user":
            raise HTTPException(404, {"reason": result.reason, "detail": result.detail})
        if result.reason == "same-clique":
            raise HTTPException(422, {"reason": result.reason, "detail": result.detail})
        raise HTTPException(400, {"reason": result.reason, "detail": result.detail})

    @app.get("/trades")
    def get_trades(since: int = 0) -> dict:
        records = market.records_since(since)
        return {"trades": [json.loads(serialize_record(r)) for r in records],
                "seq": market.next_seq - 1}

    return app


def save_snapshot(service: MarketService, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(service.snapshot_state(), fh)
        fh.write("\n")


def load_snapshot(path: str) -> Market:
    with open(path, "r", encoding="utf-8") as fh:
        return restore_state(json.load(fh))
