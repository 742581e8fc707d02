"""End-to-end acceptance gate.

Each test rolls up into a per-criterion PASS/FAIL line printed at the end of
the run (see conftest). Tolerances: two-decimal golden values are checked at
+/-0.005 when computed from exactly transcribed inputs, +/-0.01 when the
inputs themselves were only available rounded.
"""
import json
import math
import time

import numpy as np
import pytest

from cpmarket import engine, model, sim
from cpmarket.errors import OutOfLimitsError
from cpmarket.jtree import compile, initialize_prob_tree
from cpmarket.market import Market, MarketConfig, TradeRecord, parse_record
from cpmarket.service import LockPolicy

from . import oracles
from .conftest import (WALKTHROUGH_B, flat_assets, flat_prob, full_conditional,
                       run_random_session)

EXACT = 0.005   # two-decimal goldens from exactly transcribed inputs
ROUNDED = 0.01  # goldens whose inputs were themselves rounded


def fresh_market():
    market = Market(model.load_builtin("bn-def"),
                    MarketConfig(b=WALKTHROUGH_B, q0=100.0))
    market.register_user("joe")
    market.register_user("amy")
    return market


def run_walkthrough(market):
    out1 = market.commit_trade("joe", "E", "e1", {}, 0.8)
    out2 = market.commit_trade("amy", "D", "d1", {"F": "f2"}, 0.7)
    preview = market.preview_trade("joe", "E", "e1", {"D": "d2"})
    out3 = market.commit_trade("joe", "E", "e1", {"D": "d2"}, 0.99)
    return out1, out2, preview, out3


# -- criterion 1: three-trade reference session -------------------------------

@pytest.mark.acceptance(1, "reference walkthrough")
def test_c1_runtime_under_one_second():
    market = fresh_market()
    started = time.perf_counter()
    run_walkthrough(market)
    assert time.perf_counter() - started < 1.0


@pytest.mark.acceptance(1, "reference walkthrough")
def test_c1_edit1_joe_values():
    market = fresh_market()
    limits = market.edit_limits("joe", "E", "e1", {})
    assert limits.lower == pytest.approx(0.0065, abs=EXACT)
    assert limits.upper == pytest.approx(0.9965, abs=EXACT)
    out = market.commit_trade("joe", "E", "e1", {}, 0.8)
    assert out.marginals["D"] == pytest.approx([0.58, 0.42], abs=EXACT)
    assert out.marginals["E"] == pytest.approx([0.80, 0.20], abs=EXACT)
    assert out.marginals["F"] == pytest.approx([0.22, 0.78], abs=EXACT)
    assert out.expected_score == pytest.approx(10.12, abs=EXACT)
    assert out.min_q == pytest.approx(57.14, abs=EXACT)


@pytest.mark.acceptance(1, "reference walkthrough")
def test_c1_edit1_min_states_exact_pair():
    market = fresh_market()
    out = market.commit_trade("joe", "E", "e1", {}, 0.8)
    # After a trade on E alone every joint state moves by a factor that
    # depends only on E, so all four E=e2 assignments tie at the minimum
    # 57.14; the two-state answer below is a strict subset of that tie.
    assert set(out.min_states) == {("d2", "e2", "f1"), ("d2", "e2", "f2")}, (
        "all four E=e2 assignments tie at min-q because the edit multiplies "
        "assets by a function of E only; a two-state argmin is unreachable")


@pytest.mark.acceptance(1, "reference walkthrough")
def test_c1_edit2_amy_values_and_joe_isolation():
    market = fresh_market()
    market.commit_trade("joe", "E", "e1", {}, 0.8)
    joe_cliques = [v.copy() for v in market.users["joe"].cliques]
    joe_seps = [v.copy() for v in market.users["joe"].separators]

    limits = market.edit_limits("amy", "D", "d1", {"F": "f2"})
    assert limits.lower == pytest.approx(0.0052, abs=EXACT)
    assert limits.upper == pytest.approx(0.9952, abs=EXACT)
    out = market.commit_trade("amy", "D", "d1", {"F": "f2"}, 0.7)
    assert out.marginals["D"] == pytest.approx([0.72, 0.28], abs=EXACT)
    assert out.marginals["E"] == pytest.approx([0.85, 0.15], abs=EXACT)
    assert out.marginals["F"] == pytest.approx([0.22, 0.78], abs=EXACT)
    assert out.expected_score == pytest.approx(10.11, abs=EXACT)
    assert out.min_q == pytest.approx(62.54, abs=EXACT)
    assert out.min_states == [("d2", "e1", "f2"), ("d2", "e2", "f2")]

    for got, want in zip(market.users["joe"].cliques, joe_cliques):
        assert np.array_equal(got, want)
    for got, want in zip(market.users["joe"].separators, joe_seps):
        assert np.array_equal(got, want)


@pytest.mark.acceptance(1, "reference walkthrough")
def test_c1_edit3_preview_and_commit():
    market = fresh_market()
    market.commit_trade("joe", "E", "e1", {}, 0.8)
    market.commit_trade("amy", "D", "d1", {"F": "f2"}, 0.7)

    preview = market.preview_trade("joe", "E", "e1", {"D": "d2"})
    assert preview.exp_score_if_true == pytest.approx(10.45, abs=EXACT)
    assert preview.position == "long"
    assert preview.limits.lower == pytest.approx(0.0048, abs=EXACT)
    assert preview.limits.upper == pytest.approx(0.9928, abs=EXACT)

    out = market.commit_trade("joe", "E", "e1", {"D": "d2"}, 0.99)
    assert out.marginals["D"] == pytest.approx([0.72, 0.28], abs=EXACT)
    assert out.marginals["E"] == pytest.approx([0.96, 0.04], abs=EXACT)
    assert out.marginals["F"] == pytest.approx([0.22, 0.78], abs=EXACT)
    assert out.expected_score == pytest.approx(10.67, abs=EXACT)
    assert out.min_q == pytest.approx(1.39, abs=EXACT)


@pytest.mark.acceptance(1, "reference walkthrough")
def test_c1_edit3_preview_score_if_false():
    market = fresh_market()
    market.commit_trade("joe", "E", "e1", {}, 0.8)
    market.commit_trade("amy", "D", "d1", {"F": "f2"}, 0.7)
    preview = market.preview_trade("joe", "E", "e1", {"D": "d2"})
    # The exact conditional expected score on {E=e2, D=d2} is
    # b*ln(400/7) = 8.784809756568523, which rounds to 8.78; the golden
    # two-decimal value 8.79 sits 0.0052 away and is unreachable at the
    # exact-input tolerance.
    assert preview.exp_score_if_false == pytest.approx(8.79, abs=EXACT), (
        f"score if false is {preview.exp_score_if_false!r} = b*ln(400/7), "
        "which rounds to 8.78, not 8.79")


# -- criterion 2: flat-array oracle equivalence -------------------------------

@pytest.mark.acceptance(2, "flat-oracle equivalence, 100 random nets")
def test_c2_oracle_equivalence_100_nets():
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    for seed in range(100):
        n_vars = 3 + seed % 10          # 3..12 binary variables
        treewidth = 1 + seed % 3
        net, market, flat_p, flat_q = run_random_session(
            seed, n_trades=20, n_vars=n_vars, treewidth=treewidth)

        assert np.allclose(flat_prob(market), flat_p, rtol=1e-9, atol=1e-12)
        for uid, want_q in flat_q.items():
            got_q = flat_assets(market, uid)
            assert np.allclose(got_q, want_q, rtol=1e-9, atol=1e-9)

            # global and constrained minima against brute force
            assets = market.users[uid]
            res = assets.min_q()
            assert res.value == pytest.approx(want_q.min(), rel=1e-9)
            name = net.names[int(rng.integers(len(net.names)))]
            constraint = {name: net.variable(name).states[0]}
            res_c = assets.min_q(constraint)
            want_min, want_states = oracles.brute_min(net, want_q, constraint)
            assert res_c.value == pytest.approx(want_min, rel=1e-9)
            if not res_c.truncated:
                assert res_c.states == want_states

            # factored expected score against the direct sum E[b ln q]
            got_s = market.expected_assets(uid)
            want_s = oracles.expected_score(flat_p, want_q, market.config.b)
            assert got_s == pytest.approx(want_s, rel=1e-9)
    assert time.perf_counter() - started < 120.0


# -- criterion 3: safety invariants under fuzzing -----------------------------

@pytest.mark.acceptance(3, "safety under 10,000 fuzzed trades")
def test_c3_fuzzed_trades_never_breach_floor():
    started = time.perf_counter()
    total = in_limit = out_limit = 0
    seed = 0
    while total < 10_000:
        seed += 1
        rng = np.random.default_rng(seed)
        net = sim.generate_random_network(3 + seed % 6, 1 + seed % 3, 2,
                                          seed=seed)
        market = Market(net, MarketConfig(b=WALKTHROUGH_B, q0=100.0))
        uids = ["u0", "u1"]
        for uid in uids:
            market.register_user(uid)
        for _ in range(400):
            uid = uids[int(rng.integers(2))]
            target, state, assumptions, value = sim._draw_edit(rng, market, uid)
            limits = market.edit_limits(uid, target, state, assumptions)
            if rng.random() < 0.25:
                # propose outside the envelope; must always be rejected
                if rng.random() < 0.5:
                    bad = limits.upper + (1.0 - limits.upper) * float(rng.random())
                else:
                    bad = limits.lower * float(rng.random())
                with pytest.raises(OutOfLimitsError):
                    market.commit_trade(uid, target, state, assumptions, bad)
                before = market.marginal(target)
                assert market.marginal(target) == before
                out_limit += 1
            else:
                out = market.commit_trade(uid, target, state, assumptions, value)
                assert out.min_q >= 1.0 - 1e-9, (
                    f"accepted trade left min-q at {out.min_q}")
                in_limit += 1
            total += 1
    assert in_limit > 0 and out_limit > 0
    assert time.perf_counter() - started < 120.0


@pytest.mark.acceptance(3, "safety under 10,000 fuzzed trades")
def test_c3_boundary_trades_pin_assets_to_one():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        net = sim.generate_random_network(4 + seed % 5, 2, 2, seed=seed)
        market = Market(net, MarketConfig(b=WALKTHROUGH_B, q0=100.0))
        market.register_user("u")
        target, state, assumptions, _ = sim._draw_edit(rng, market, "u")
        limits = market.edit_limits("u", target, state, assumptions)
        old_p = engine.query_conditional(market.tree, target, state, assumptions)
        bound = limits.lower if seed % 2 == 0 else limits.upper
        # executed exactly at the envelope edge (the public path rejects it)
        market._execute(TradeRecord(seq=1, time=0.0, user="u", target=target,
                                    target_state=state, assumptions=assumptions,
                                    old_p=old_p, new_p=bound))
        res = market.users["u"].min_q(states=False)
        assert res.value == pytest.approx(1.0, abs=1e-9)


# -- criterion 4: single-user gain cap ----------------------------------------

@pytest.mark.acceptance(4, "adversarial gain bound")
def test_c4_adversarial_gain_below_bankroll():
    doc = {"variables": [{"name": n, "states": ["0", "1"]} for n in "XYZ"],
           "cpds": [{"child": n, "parents": [], "table": [[0.5, 0.5]]}
                    for n in "XYZ"]}
    net = model.parse_network(json.dumps(doc))
    cfg = MarketConfig.from_loss_bound(10.0, net)
    market = Market(net, cfg)
    market.register_user("whale")
    start_q = flat_assets(market, "whale")[1, 1, 1]

    for _ in range(120):
        for name in "XYZ":
            limits = market.edit_limits("whale", name, "1", {})
            p = market.marginal(name)[1]
            value = p + 0.9 * (limits.upper - p)
            if limits.contains_strict(value):
                market.commit_trade("whale", name, "1", {}, value)

    gain = cfg.b * math.log(flat_assets(market, "whale")[1, 1, 1] / start_q)
    assert gain <= 10.0 + 1e-6
    assert gain > 9.5  # the drive actually approaches the cap


# -- criterion 5: lock-time shape ---------------------------------------------

@pytest.mark.acceptance(5, "lock-time scalability shape")
def test_c5_variable_growth_mild_next_to_treewidth_growth():
    def mean_lock(n_vars, k):
        net = sim.generate_random_network(n_vars, k, 2, seed=17)
        return sim.benchmark_lock_time(net, n_edits=12, seed=17).mean

    t_n30 = mean_lock(30, 5)
    t_n480 = mean_lock(480, 5)
    t_k5 = mean_lock(120, 5)
    t_k15 = mean_lock(120, 15)

    growth_per_var = (t_n480 / t_n30) / (480 / 30)
    growth_treewidth = t_k15 / t_k5
    # a 16x wider net costs about 16x (flat per-variable cost), while ten
    # extra treewidth levels blow past it
    assert growth_per_var < 3.0
    assert growth_per_var < growth_treewidth / 3.0


@pytest.mark.acceptance(5, "lock-time scalability shape")
def test_c5_desk_scale_commit_under_one_second():
    net = sim.generate_random_network(200, 10, 2, seed=5)
    market = Market(net, MarketConfig.from_loss_bound(10.0, net))
    market.register_user("u")
    rng = np.random.default_rng(5)
    target, state, assumptions, value = sim._draw_edit(rng, market, "u")
    started = time.perf_counter()
    out = market.commit_trade("u", target, state, assumptions, value)
    elapsed = time.perf_counter() - started
    assert out.min_q >= 1.0 - 1e-9
    assert elapsed < 1.0


# -- criterion 6: contention rates under a 0.3 s lock -------------------------

@pytest.mark.acceptance(6, "rejection rates vs published table")
def test_c6_rejection_rates_match_table():
    started = time.perf_counter()
    policy = LockPolicy(mode="reject", synthetic_lock_time=0.3)
    published = {2.0: 0.012, 8.0: 0.04, 30.0: 0.143}
    net = model.load_builtin("bn-def")
    for intensity, table_rate in published.items():
        rep = sim.run_market_simulation(net, 100, intensity, 10_000,
                                        policy, seed=42)
        loss = sim.erlang_loss(intensity, 0.3)
        assert rep.rejection_rate == pytest.approx(table_rate, abs=0.02), (
            f"{intensity}/min: got {rep.rejection_rate:.4f}")
        assert rep.rejection_rate == pytest.approx(loss, abs=0.01), (
            f"{intensity}/min: got {rep.rejection_rate:.4f}, "
            f"loss model {loss:.4f}")
    assert time.perf_counter() - started < 60.0


# -- criterion 7: replay determinism ------------------------------------------

def assert_bit_identical(a: Market, b: Market):
    for x, y in zip(a.tree.cliques, b.tree.cliques):
        assert np.array_equal(x, y)
    for x, y in zip(a.tree.separators, b.tree.separators):
        assert np.array_equal(x, y)
    assert sorted(a.users) == sorted(b.users)
    for uid in a.users:
        for x, y in zip(a.users[uid].cliques, b.users[uid].cliques):
            assert np.array_equal(x, y)
        for x, y in zip(a.users[uid].separators, b.users[uid].separators):
            assert np.array_equal(x, y)


@pytest.mark.acceptance(7, "ledger replay determinism")
def test_c7_walkthrough_replay_bit_identical():
    lines = []
    market = Market(model.load_builtin("bn-def"),
                    MarketConfig(b=WALKTHROUGH_B, q0=100.0),
                    ledger_sink=lines.append)
    market.register_user("joe")
    market.register_user("amy")
    run_walkthrough(market)

    fresh = Market(model.load_builtin("bn-def"),
                   MarketConfig(b=WALKTHROUGH_B, q0=100.0))
    for line in lines:
        fresh.apply_record(parse_record(line))
    assert_bit_identical(market, fresh)


@pytest.mark.acceptance(7, "ledger replay determinism")
def test_c7_fuzzed_session_replay_bit_identical():
    for seed in (3, 12):
        rng = np.random.default_rng(seed)
        net = sim.generate_random_network(10, 3, 2, seed=seed)
        lines = []
        market = Market(net, MarketConfig(b=2.0, q0=50.0),
                        ledger_sink=lines.append)
        uids = ["u0", "u1", "u2"]
        for uid in uids:
            market.register_user(uid)
        for _ in range(50):
            uid = uids[int(rng.integers(3))]
            target, state, assumptions, value = sim._draw_edit(rng, market, uid)
            market.commit_trade(uid, target, state, assumptions, value)

        fresh = Market(net, MarketConfig(b=2.0, q0=50.0))
        for line in lines:
            fresh.apply_record(parse_record(line))
        assert_bit_identical(market, fresh)
