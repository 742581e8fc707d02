import math

import numpy as np
import pytest

from cpmarket import model, sim
from cpmarket.jtree import factored_joint
from cpmarket.market import Market, MarketConfig

from . import oracles

WALKTHROUGH_B = 10.0 / math.log(100.0)


@pytest.fixture
def bn_def() -> model.BayesNet:
    return model.load_builtin("bn-def")


@pytest.fixture
def walkthrough_market(bn_def) -> Market:
    market = Market(bn_def, MarketConfig(b=WALKTHROUGH_B, q0=100.0))
    market.register_user("joe")
    market.register_user("amy")
    return market


def flat_assets(market: Market, uid: str) -> np.ndarray:
    """User's q(x) for every joint state via direct product evaluation."""
    at = market.users[uid]
    return factored_joint(market.jt, at.cliques, at.separators)


def flat_prob(market: Market) -> np.ndarray:
    joint = factored_joint(market.jt, market.tree.cliques, market.tree.separators)
    return joint / joint.sum()


def full_conditional(net, flat, target, state, assumptions, value):
    """New target distribution given the assumptions once p(state)=value, with
    the remaining mass spread proportionally (flat-array reference)."""
    axis = net.names.index(target)
    mask = oracles.state_mask(net, assumptions)
    joint = np.where(mask, flat, 0.0)
    dist = joint.sum(axis=tuple(i for i in range(flat.ndim) if i != axis))
    dist = dist / dist.sum()
    idx = net.variable(target).states.index(state)
    new = dist * (1.0 - value) / (1.0 - dist[idx])
    new[idx] = value
    return new


def run_random_session(seed: int, n_trades: int = 20, n_vars: int = 6,
                       treewidth: int = 2, b: float = 1.5, q0: float = 20.0):
    """Drive a market with random valid trades while tracking flat-array
    probability and per-user asset references alongside it."""
    rng = np.random.default_rng(seed)
    net = sim.generate_random_network(n_vars, treewidth, 2, seed=seed)
    market = Market(net, MarketConfig(b=b, q0=q0))
    uids = ["u0", "u1", "u2"]
    for uid in uids:
        market.register_user(uid)
    flat_p = oracles.flat_joint(net)
    flat_q = {uid: np.full(flat_p.shape, q0) for uid in uids}

    for _ in range(n_trades):
        uid = uids[int(rng.integers(3))]
        target, state, assumptions, value = sim._draw_edit(rng, market, uid)
        market.commit_trade(uid, target, state, assumptions, value)
        new_p = oracles.jeffrey_update(
            net, flat_p, target, assumptions,
            full_conditional(net, flat_p, target, state, assumptions, value))
        flat_q[uid] = oracles.q_update(flat_q[uid], flat_p, new_p)
        flat_p = new_p
    return net, market, flat_p, flat_q


# -- acceptance reporting ------------------------------------------------------
# tests carrying @pytest.mark.acceptance(num, label) roll up into one
# PASS/FAIL line per criterion at the end of the run

_ACCEPTANCE: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when not in ("setup", "call"):
        return
    num, label = marker.args
    entry = _ACCEPTANCE.setdefault(num, {"label": label, "ok": True})
    if report.failed or report.skipped:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        entry = _ACCEPTANCE[num]
        verdict = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {num} ({entry['label']}): {verdict}")
