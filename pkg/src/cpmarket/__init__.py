"""Combinatorial prediction market over junction trees.

A market's full joint distribution and every user's contingent assets live in
factored form on one compiled junction tree, so conditional trades, edit
limits, and worst-case asset queries all run at clique cost instead of
enumerating joint states.
"""
from .errors import (CpmError, DuplicateUserError, LedgerError,
                     NetworkParseError, NetworkValidationError,
                     OutOfLimitsError, QueryError, SameCliqueError,
                     UnknownUserError, ZeroProbabilityError)
from .model import (BayesNet, Cpd, DiscreteVariable, ValidationReport,
                    builtin_names, load_builtin, load_network_file,
                    parse_network, serialize_network, validate_network)
from .jtree import JunctionTree, Potential, ProbTree, compile, initialize_prob_tree, sum_calibrate
from .engine import (MinResult, MinTree, SoftEvidence, apply_soft_evidence,
                     condition_tree, constrained_min, make_soft_evidence,
                     min_calibrate, query_conditional, query_marginal)
from .market import (AssetTree, EditLimits, Market, MarketConfig, TradeOutcome,
                     TradePreview, TradeRecord, commit_trade, create_market,
                     edit_limits, expected_assets, preview_trade, register_user)
from .service import (EditSubmission, LockPolicy, MarketService, SubmitResult,
                      create_app, open_market, replay_ledger, restore_state)
from .sim import (LockStats, SimReport, benchmark_lock_time, erlang_loss,
                  generate_random_network, run_market_simulation)

__version__ = "0.1.0"
