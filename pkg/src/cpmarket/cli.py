"""Operator command line.

Numeric report lines carry the full-precision value plus a short display
column: probabilities and scores at 2 decimals, edit limits at 4 (they live
near the ends of the unit interval, where 2 decimals says nothing).
"""
from __future__ import annotations

import argparse
import math
import sys

from . import model, sim
from .errors import CpmError
from .jtree import compile as compile_jtree
from .market import Market, MarketConfig
from .model import BayesNet
from .service import LockPolicy, MarketService, create_app, open_market, replay_ledger

DEFAULT_B = 10.0 / math.log(100.0)
DEFAULT_Q0 = 100.0


def _load_net(spec: str, fmt: str | None) -> BayesNet:
    if spec in model.builtin_names():
        return model.load_builtin(spec)
    return model.load_network_file(spec, fmt)


def _fmt_clique(names) -> str:
    return "{" + ",".join(names) + "}"


def _row(label: str, full, disp: str) -> str:
    return f"{label:<20} {str(full):<44} {disp}".rstrip()


def _prob_row(label: str, value: float) -> str:
    return _row(label, value, f"{value:.2f}")


def _vec_row(label: str, values: list[float]) -> str:
    disp = "[" + ", ".join(f"{v:.2f}" for v in values) + "]"
    return _row(label, "[" + ", ".join(str(v) for v in values) + "]", disp)


def _states_str(states) -> str:
    return " ".join(_fmt_clique(s) for s in states)


def cmd_inspect(args) -> int:
    net = _load_net(args.net, args.format)
    jt = compile_jtree(net)
    cliques = " ".join(_fmt_clique(c) for c in jt.cliques)
    label = "separator" if len(jt.separators) == 1 else "separators"
    seps = " ".join(_fmt_clique(s) for s in jt.separators) or "none"
    print(f"cliques: {cliques}; {label}: {seps}; treewidth: {jt.treewidth}")
    return 0


def _print_outcome(market: Market, outcome) -> None:
    for name, values in outcome.marginals.items():
        print(_vec_row(f"marginal {name}", values))
    print(_prob_row("expected score S", outcome.expected_score))
    print(_prob_row("min-q", outcome.min_q))
    suffix = " (truncated)" if outcome.truncated else ""
    print(_row("min-states", _states_str(outcome.min_states) + suffix, ""))


def cmd_walkthrough(_args) -> int:
    net = model.load_builtin("bn-def")
    jt = compile_jtree(net)
    market = Market(net, MarketConfig(b=DEFAULT_B, q0=DEFAULT_Q0))
    market.register_user("joe")
    market.register_user("amy")
    cliques = " ".join(_fmt_clique(c) for c in jt.cliques)
    print(f"bn-def: cliques: {cliques}; separator: {_fmt_clique(jt.separators[0])}; "
          f"treewidth: {jt.treewidth}")
    print(_row("b", market.config.b, f"{market.config.b:.2f}"))
    print(_row("q0", market.config.q0, f"{market.config.q0:.2f}"))

    edits = [
        ("joe", "E", "e1", {}, 0.80),
        ("amy", "D", "d1", {"F": "f2"}, 0.70),
        ("joe", "E", "e1", {"D": "d2"}, 0.99),
    ]
    for i, (uid, target, state, assumptions, value) in enumerate(edits, start=1):
        given = "" if not assumptions else \
            " | " + ", ".join(f"{k}={v}" for k, v in assumptions.items())
        print()
        print(f"== edit {i}: {uid} sets p({target}={state}{given}) = {value} ==")
        pv = market.preview_trade(uid, target, state, assumptions)
        print(_prob_row("p before", pv.current_conditional))
        print(_row("limits",
                   f"[{pv.limits.lower}, {pv.limits.upper}]",
                   f"[{pv.limits.lower:.4f}, {pv.limits.upper:.4f}]"))
        print(_prob_row("score if true", pv.exp_score_if_true))
        print(_prob_row("score if false", pv.exp_score_if_false))
        print(_row("position", pv.position, ""))
        outcome = market.commit_trade(uid, target, state, assumptions, value)
        _print_outcome(market, outcome)
    return 0


def _parse_nk(text: str) -> list[tuple[int, int]]:
    out = []
    for part in text.split(","):
        n, _, k = part.partition(":")
        out.append((int(n), int(k)))
    return out


def cmd_bench(args) -> int:
    from . import report as report_mod
    rows = []
    if args.sweep:
        for n, k in _parse_nk(args.sweep):
            net = sim.generate_random_network(n, k, seed=args.seed)
            stats = sim.benchmark_lock_time(net, args.edits, seed=args.seed)
            rows.append(report_mod.BenchRow(n, k, stats.mean, stats.p95, stats.max))
            print(f"n={n} k={k}: mean {stats.mean*1000:.3f} ms  "
                  f"p95 {stats.p95*1000:.3f} ms  max {stats.max*1000:.3f} ms  "
                  f"({args.edits} edits, seed {args.seed})")
        if args.csv:
            report_mod.write_bench_csv(rows, args.csv)
        if args.plot:
            report_mod.write_lock_time_figure(rows, args.plot)
    else:
        net = _load_net(args.net, args.format)
        stats = sim.benchmark_lock_time(net, args.edits, seed=args.seed)
        print(f"{args.net}: mean {stats.mean*1000:.3f} ms  p95 {stats.p95*1000:.3f} ms  "
              f"max {stats.max*1000:.3f} ms  ({args.edits} edits, seed {args.seed})")
        if args.csv:
            import csv as csv_mod
            with open(args.csv, "w", newline="", encoding="utf-8") as fh:
                writer = csv_mod.writer(fh)
                writer.writerow(["edit", "lock_time_s"])
                for i, s in enumerate(stats.samples, start=1):
                    writer.writerow([i, s])
    return 0


def cmd_simulate(args) -> int:
    from . import report as report_mod
    net = _load_net(args.net, args.format)
    policy = LockPolicy(mode=args.policy, queue_capacity=args.queue_capacity,
                        synthetic_lock_time=args.lock_time)
    intensities = [float(x) for x in str(args.intensity).split(",")]
    reports = []
    trace: list = []
    for intensity in intensities:
        this_trace: list = []
        rep = sim.run_market_simulation(net, args.users, intensity, args.edits,
                                        policy, seed=args.seed, trace=this_trace)
        reports.append(rep)
        trace = this_trace
        oracle = sim.erlang_loss(intensity, args.lock_time or 0.0)
        print(f"intensity {intensity:g}/min: attempted {rep.attempted} "
              f"accepted {rep.accepted} rejected {rep.rejected} "
              f"rate {100*rep.rejection_rate:.2f}% (loss model {100*oracle:.2f}%) "
              f"lock mean {rep.lock_mean:.3f}s p95 {rep.lock_p95:.3f}s "
              f"max {rep.lock_max:.3f}s seed {rep.seed}")
    if args.csv:
        if len(reports) == 1:
            report_mod.write_sim_trace_csv(trace, args.csv)
        else:
            report_mod.write_rejection_csv(reports, args.lock_time or 0.0, args.csv)
    if args.plot:
        report_mod.write_rejection_figure(reports, args.lock_time or 0.0, args.plot)
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    net = _load_net(args.net, args.format)
    config = MarketConfig(b=args.b, q0=args.q0)
    market = open_market(net, config, args.ledger)
    policy = LockPolicy(mode=args.policy, queue_capacity=args.queue_capacity,
                        synthetic_lock_time=args.lock_time)
    app = create_app(MarketService(market, policy))
    host, _, port = args.addr.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000),
                log_level="warning")
    return 0


def cmd_replay(args) -> int:
    net = _load_net(args.net, args.format)
    config = MarketConfig(b=args.b, q0=args.q0)
    with open(args.ledger, "r", encoding="utf-8") as fh:
        market = replay_ledger(net, config, fh)
    print(f"replayed {market.next_seq - 1} trades, {len(market.users)} users")
    for name, values in market.marginals().items():
        print(_vec_row(f"marginal {name}", values))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpmarket",
        description="combinatorial prediction market over junction trees")
    sub = parser.add_subparsers(dest="cmd")

    def add_format(p):
        p.add_argument("--format", choices=("native", "bif"), default=None,
                       help="network file format (default: by extension)")

    def add_config(p):
        p.add_argument("--b", type=float, default=DEFAULT_B,
                       help="score scale per log ratio (default 10/ln 100)")
        p.add_argument("--q0", type=float, default=DEFAULT_Q0,
                       help="starting assets per state (default 100)")

    p = sub.add_parser("inspect", help="print compiled cliques, separators, treewidth")
    p.add_argument("net", help="builtin name (bn-def, alarm) or file path")
    add_format(p)
    p.set_defaults(run=cmd_inspect)

    p = sub.add_parser("walkthrough", help="run the three-trade reference session")
    p.set_defaults(run=cmd_walkthrough)

    p = sub.add_parser("bench", help="time the commit critical section")
    p.add_argument("--net", default="alarm")
    add_format(p)
    p.add_argument("--sweep", default=None,
                   help="comma list of n:k random-net sizes, e.g. 30:5,120:5")
    p.add_argument("--edits", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", default=None, help="write per-edit or sweep CSV here")
    p.add_argument("--plot", default=None, help="write lock-time figure (PNG) here")
    p.set_defaults(run=cmd_bench)

    p = sub.add_parser("simulate", help="Poisson-arrival market simulation")
    p.add_argument("--net", default="bn-def")
    add_format(p)
    p.add_argument("--users", type=int, default=100)
    p.add_argument("--intensity", default="8",
                   help="edits per minute; comma list sweeps intensities")
    p.add_argument("--edits", type=int, default=1000)
    p.add_argument("--lock-time", type=float, default=0.3,
                   help="synthetic lock seconds (virtual clock)")
    p.add_argument("--policy", choices=("reject", "queue"), default="reject")
    p.add_argument("--queue-capacity", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", default=None,
                   help="per-edit trace CSV (single intensity) or sweep summary CSV")
    p.add_argument("--plot", default=None, help="write rejection-rate figure (PNG) here")
    p.set_defaults(run=cmd_simulate)

    p = sub.add_parser("serve", help="serve the market HTTP API")
    p.add_argument("net", help="builtin name or file path")
    add_format(p)
    add_config(p)
    p.add_argument("--addr", default="127.0.0.1:8000")
    p.add_argument("--policy", choices=("reject", "queue"), default="reject")
    p.add_argument("--queue-capacity", type=int, default=0)
    p.add_argument("--lock-time", type=float, default=None,
                   help="hold the commit lock this long (testing)")
    p.add_argument("--ledger", default=None,
                   help="append-only trade log; replayed on startup if present")
    p.set_defaults(run=cmd_serve)

    p = sub.add_parser("replay", help="rebuild a market from a ledger file")
    p.add_argument("net", help="builtin name or file path")
    p.add_argument("ledger", help="ledger file (one trade per line)")
    add_format(p)
    add_config(p)
    p.set_defaults(run=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.cmd is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.run(args)
    except FileNotFoundError as exc:
        print(f"cpmarket: file not found: {exc.filename or exc}", file=sys.stderr)
        return 1
    except CpmError as exc:
        print(f"cpmarket: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
