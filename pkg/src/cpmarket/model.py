"""Discrete Bayesian networks: types, file formats, validation.

Indexing contract used throughout the package: configurations of an ordered
variable list are numbered in mixed radix with the LAST variable varying
fastest (C order). CPD tables hold one row per joint parent configuration,
rows in that order, each row listing child-state probabilities in declared
state order.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import NetworkParseError, NetworkValidationError

ROW_SUM_TOL = 1e-9

_BUILTIN_FILES = {"bn-def": "bn_def.json", "alarm": "alarm.bif"}
_BUILTIN_FORMATS = {"bn-def": "native", "alarm": "bif-subset"}


@dataclass(frozen=True)
class DiscreteVariable:
    name: str
    states: tuple[str, ...]

    @property
    def card(self) -> int:
        return len(self.states)

    def state_index(self, label: str) -> int:
        try:
            return self.states.index(label)
        except ValueError:
            raise KeyError(f"variable {self.name!r} has no state {label!r}") from None


@dataclass
class Cpd:
    """p(child | parents); table shape (#parent configurations, #child states)."""

    child: str
    parents: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.float64)
        if self.table.ndim != 2:
            raise NetworkParseError(
                f"CPD for {self.child!r}: table must be a rectangular list of rows")

    def __eq__(self, other):
        return (isinstance(other, Cpd) and self.child == other.child
                and self.parents == other.parents
                and self.table.shape == other.table.shape
                and bool(np.array_equal(self.table, other.table)))


@dataclass
class BayesNet:
    variables: list[DiscreteVariable]
    cpds: list[Cpd]
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {v.name: i for i, v in enumerate(self.variables)}

    def __eq__(self, other):
        return (isinstance(other, BayesNet) and self.variables == other.variables
                and self.cpds == other.cpds)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def variable(self, name: str) -> DiscreteVariable:
        return self.variables[self.var_index(name)]

    def var_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}") from None

    def card(self, name: str) -> int:
        return self.variable(name).card

    def cpd_for(self, name: str) -> Cpd:
        for cpd in self.cpds:
            if cpd.child == name:
                return cpd
        raise KeyError(f"no CPD for variable {name!r}")

    def log_joint_size(self) -> float:
        """ln of the number of joint states, summed in log space."""
        return sum(math.log(v.card) for v in self.variables)


@dataclass
class ValidationReport:
    ok: bool
    violations: list[str]


def config_index(cards: tuple[int, ...], states: tuple[int, ...]) -> int:
    """Mixed-radix index of a configuration, last position fastest."""
    idx = 0
    for card, state in zip(cards, states):
        idx = idx * card + state
    return idx


# ---------------------------------------------------------------------------
# native format

def parse_network(text: str, format: str = "native") -> BayesNet:
    """Parse network text and return a validated BayesNet.

    Raises NetworkParseError for malformed text and NetworkValidationError
    when the parsed structure violates network invariants.
    """
    if not text or not text.strip():
        raise NetworkParseError("empty network text")
    if format == "native":
        net = _parse_native(text)
    elif format in ("bif", "bif-subset"):
        net = _parse_bif(text)
    else:
        raise ValueError(f"unknown format {format!r}")
    report = validate_network(net)
    if not report.ok:
        raise NetworkValidationError("; ".join(report.violations))
    return net


def _parse_native(text: str) -> BayesNet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkParseError(f"bad syntax: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise NetworkParseError("top level must be an object")
    for key in ("variables", "cpds"):
        if not isinstance(doc.get(key), list):
            raise NetworkParseError(f"missing or non-list {key!r} section")

    variables = []
    for entry in doc["variables"]:
        if not isinstance(entry, dict) or not isinstance(entry.get("name"), str):
            raise NetworkParseError("each variable needs a string 'name'")
        states = entry.get("states")
        if (not isinstance(states, list) or
                not all(isinstance(s, str) for s in states)):
            raise NetworkParseError(f"variable {entry['name']!r}: 'states' must be a "
                                    "list of labels")
        variables.append(DiscreteVariable(entry["name"], tuple(states)))

    cpds = []
    for entry in doc["cpds"]:
        if not isinstance(entry, dict) or not isinstance(entry.get("child"), str):
            raise NetworkParseError("each CPD needs a string 'child'")
        child = entry["child"]
        parents = entry.get("parents")
        if not isinstance(parents, list) or not all(isinstance(p, str) for p in parents):
            raise NetworkParseError(f"CPD for {child!r}: 'parents' must be a name list")
        table = entry.get("table")
        if (not isinstance(table, list) or not table
                or not all(isinstance(row, list) for row in table)):
            raise NetworkParseError(f"CPD for {child!r}: 'table' must be a list of rows")
        width = len(table[0])
        if any(len(row) != width for row in table):
            raise NetworkParseError(f"CPD for {child!r}: ragged table rows")
        try:
            arr = np.array(table, dtype=np.float64)
        except (TypeError, ValueError):
            raise NetworkParseError(f"CPD for {child!r}: non-numeric table entry") from None
        cpds.append(Cpd(child, tuple(parents), arr))

    return BayesNet(variables, cpds)


def serialize_network(net: BayesNet) -> str:
    """Canonical native text: fixed key order, CPDs in variable declaration
    order, 2-space indentation. parse(serialize(net)) == net."""
    by_child = {c.child: c for c in net.cpds}
    doc = {
        "variables": [{"name": v.name, "states": list(v.states)} for v in net.variables],
        "cpds": [
            {
                "child": v.name,
                "parents": list(by_child[v.name].parents),
                "table": [[float(x) for x in row] for row in by_child[v.name].table],
            }
            for v in net.variables if v.name in by_child
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# BIF subset: enough to load classic benchmark files, nothing more

_BIF_VAR_RE = re.compile(r"variable\s+(\S+)\s*\{")
_BIF_TYPE_RE = re.compile(r"type\s+discrete\s*\[\s*(\d+)\s*\]\s*\{([^}]*)\}\s*;")
_BIF_PROB_RE = re.compile(r"probability\s*\(\s*([^|)]+?)(?:\|([^)]*))?\)\s*\{")
_BIF_TABLE_RE = re.compile(r"table\s+([^;]+);")
_BIF_ROW_RE = re.compile(r"\(([^)]*)\)\s*([^;]+);")


def _split_names(chunk: str) -> list[str]:
    return [part.strip() for part in chunk.split(",") if part.strip()]


def _parse_bif(text: str) -> BayesNet:
    lines = text.splitlines()
    variables: list[DiscreteVariable] = []
    cards: dict[str, DiscreteVariable] = {}
    cpds: list[Cpd] = []

    i = 0
    n = len(lines)
    while i < n:
        line = lines[i].strip()
        if not line or line.startswith("//") or line.startswith("network") or line == "}":
            i += 1
            continue
        m = _BIF_VAR_RE.match(line)
        if m:
            name = m.group(1)
            i += 1
            states = None
            while i < n and "}" not in lines[i - 1]:
                tm = _BIF_TYPE_RE.search(lines[i])
                if tm:
                    declared = int(tm.group(1))
                    states = _split_names(tm.group(2))
                    if len(states) != declared:
                        raise NetworkParseError(
                            f"variable {name!r}: {declared} states declared, "
                            f"{len(states)} listed", i + 1)
                if lines[i].strip() == "}":
                    i += 1
                    break
                i += 1
            if states is None:
                raise NetworkParseError(f"variable {name!r}: no discrete type line", i)
            var = DiscreteVariable(name, tuple(states))
            variables.append(var)
            cards[name] = var
            continue
        m = _BIF_PROB_RE.match(line)
        if m:
            child = m.group(1).strip()
            parents = _split_names(m.group(2) or "")
            if child not in cards or any(p not in cards for p in parents):
                raise NetworkParseError(
                    f"probability block for {child!r} references undeclared names", i + 1)
            child_card = cards[child].card
            parent_vars = [cards[p] for p in parents]
            n_rows = int(np.prod([v.card for v in parent_vars], dtype=np.int64)) if parents else 1
            rows: list[list[float] | None] = [None] * n_rows
            i += 1
            while i < n:
                body = lines[i].strip()
                if body == "}":
                    i += 1
                    break
                tm = _BIF_TABLE_RE.search(body)
                if tm and not parents:
                    rows[0] = _parse_floats(tm.group(1), i + 1)
                else:
                    rm = _BIF_ROW_RE.match(body)
                    if rm:
                        labels = _split_names(rm.group(1))
                        if len(labels) != len(parents):
                            raise NetworkParseError(
                                f"{child!r}: row labels {labels} do not match parents",
                                i + 1)
                        states = tuple(v.state_index(s) for v, s in zip(parent_vars, labels))
                        idx = config_index(tuple(v.card for v in parent_vars), states)
                        rows[idx] = _parse_floats(rm.group(2), i + 1)
                    elif body:
                        raise NetworkParseError(f"unrecognized probability row: {body!r}",
                                                i + 1)
                i += 1
            if any(r is None for r in rows):
                raise NetworkParseError(f"{child!r}: missing parent-configuration rows")
            if any(len(r) != child_card for r in rows if r is not None):
                raise NetworkParseError(f"{child!r}: row length != state count")
            cpds.append(Cpd(child, tuple(parents), np.array(rows, dtype=np.float64)))
            continue
        i += 1

    if not variables:
        raise NetworkParseError("no variable declarations found")
    return BayesNet(variables, cpds)


def _parse_floats(chunk: str, line: int) -> list[float]:
    try:
        return [float(part) for part in chunk.split(",") if part.strip()]
    except ValueError:
        raise NetworkParseError(f"non-numeric probability value: {chunk!r}", line) from None


# ---------------------------------------------------------------------------
# validation

def validate_network(net: BayesNet) -> ValidationReport:
    """Check all network invariants; violations are data, not exceptions."""
    problems: list[str] = []
    seen = set()
    for v in net.variables:
        if v.name in seen:
            problems.append(f"duplicate variable {v.name!r}")
        seen.add(v.name)
        if v.card < 2:
            problems.append(f"variable {v.name!r}: fewer than 2 states")
        if len(set(v.states)) != v.card:
            problems.append(f"variable {v.name!r}: duplicate state labels")

    by_child: dict[str, Cpd] = {}
    for cpd in net.cpds:
        if cpd.child not in seen:
            problems.append(f"CPD for unknown variable {cpd.child!r}")
            continue
        if cpd.child in by_child:
            problems.append(f"duplicate CPD for {cpd.child!r}")
            continue
        by_child[cpd.child] = cpd
    for v in net.variables:
        if v.name not in by_child:
            problems.append(f"missing CPD for {v.name!r}")

    for cpd in by_child.values():
        bad_parent = False
        for p in cpd.parents:
            if p not in seen or p == cpd.child:
                problems.append(f"CPD for {cpd.child!r}: bad parent {p!r}")
                bad_parent = True
        if len(set(cpd.parents)) != len(cpd.parents):
            problems.append(f"CPD for {cpd.child!r}: repeated parent")
            bad_parent = True
        if bad_parent:
            continue
        child_card = net.card(cpd.child)
        want_rows = 1
        for p in cpd.parents:
            want_rows *= net.card(p)
        if cpd.table.shape != (want_rows, child_card):
            problems.append(
                f"CPD for {cpd.child!r}: table shape {cpd.table.shape} != "
                f"({want_rows}, {child_card})")
            continue
        if not np.all(np.isfinite(cpd.table)):
            problems.append(f"CPD for {cpd.child!r}: non-finite entry")
            continue
        for r, row in enumerate(cpd.table):
            if np.any(row <= 0.0):
                problems.append(f"CPD for {cpd.child!r} row {r}: zero probability entry")
            total = float(row.sum())
            if abs(total - 1.0) > ROW_SUM_TOL:
                problems.append(f"CPD for {cpd.child!r} row {r}: row sum {total} != 1")

    if not problems:
        cycle = _find_cycle(net)
        if cycle:
            problems.append(f"parent relation has a cycle through {cycle!r}")
    return ValidationReport(not problems, problems)


def _find_cycle(net: BayesNet) -> str | None:
    """Kahn peel; returns a variable on a cycle, or None."""
    parents = {c.child: set(c.parents) for c in net.cpds}
    remaining = {name: set(ps) for name, ps in parents.items()}
    ready = [name for name, ps in remaining.items() if not ps]
    done = set()
    while ready:
        name = ready.pop()
        done.add(name)
        for other, ps in remaining.items():
            if name in ps:
                ps.discard(name)
                if not ps and other not in done:
                    ready.append(other)
    leftover = [name for name in remaining if name not in done]
    return leftover[0] if leftover else None


# ---------------------------------------------------------------------------
# bundled nets

def builtin_names() -> list[str]:
    return sorted(_BUILTIN_FILES)


def load_builtin(name: str) -> BayesNet:
    """Load a bundled demo/benchmark network by name."""
    try:
        filename = _BUILTIN_FILES[name]
    except KeyError:
        raise KeyError(f"no bundled network {name!r}; have {builtin_names()}") from None
    text = resources.files("cpmarket.data").joinpath(filename).read_text()
    return parse_network(text, _BUILTIN_FORMATS[name])


def load_network_file(path: str, format: str | None = None) -> BayesNet:
    """Read a network from disk, guessing the format from the suffix."""
    if format is None:
        format = "bif-subset" if path.endswith(".bif") else "native"
    with open(path, "r", encoding="utf-8") as fh:
        return parse_network(fh.read(), format)
