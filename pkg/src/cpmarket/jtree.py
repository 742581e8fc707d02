"""Junction-tree compilation and the factored probability representation.

A compiled tree fixes the skeleton shared by the market's probability
potentials and every user's asset potentials: cliques, separators, a fixed
message schedule, and the clique assignment of every CPD family. Clique
scopes are ordered by variable declaration; potential arrays are indexed in
C order over that scope (last scope variable fastest).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import BayesNet


# ---------------------------------------------------------------------------
# potential algebra (free functions over plain arrays)

@dataclass
class Potential:
    scope: tuple[str, ...]
    values: np.ndarray


def embed(values: np.ndarray, sub: tuple[str, ...], scope: tuple[str, ...]) -> np.ndarray:
    """View `values` (defined on `sub`, a subsequence of `scope`) broadcastable
    against a `scope`-shaped array."""
    shape = []
    it = iter(zip(sub, values.shape))
    current = next(it, None)
    for var in scope:
        if current is not None and var == current[0]:
            shape.append(current[1])
            current = next(it, None)
        else:
            shape.append(1)
    if current is not None:
        raise ValueError(f"{sub} is not a subsequence of {scope}")
    return values.reshape(shape)


def marginalize(values: np.ndarray, scope: tuple[str, ...], keep: tuple[str, ...],
                op: str = "sum") -> np.ndarray:
    """Collapse axes outside `keep` with sum or min. `keep` must preserve the
    relative order of `scope`."""
    axes = tuple(i for i, var in enumerate(scope) if var not in keep)
    if not axes:
        return values.copy()
    if op == "sum":
        return values.sum(axis=axes)
    return values.min(axis=axes)


def safe_divide(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Hugin separator division with the 0/0 := 0 convention."""
    out = np.zeros(np.broadcast_shapes(num.shape, den.shape))
    return np.divide(num, den, out=out, where=den != 0)


# ---------------------------------------------------------------------------
# structure

@dataclass
class JunctionTree:
    net: BayesNet
    cliques: list[tuple[str, ...]]
    separators: list[tuple[str, ...]]
    edges: list[tuple[int, int]]
    treewidth: int
    family_clique: dict[str, int]
    components: list[list[int]]
    # cross-component propagation links (empty separators); kept out of
    # `edges`/`separators` so adjacency stays a forest for disconnected nets
    links: list[tuple[int, int]]
    neighbors: list[list[tuple[int, int]]] = field(init=False)

    def __post_init__(self):
        self.neighbors = [[] for _ in self.cliques]
        for e, (i, j) in enumerate(self.edges):
            self.neighbors[i].append((j, e))
            self.neighbors[j].append((i, e))
        for lst in self.neighbors:
            lst.sort()

    def clique_shape(self, c: int) -> tuple[int, ...]:
        return tuple(self.net.card(v) for v in self.cliques[c])

    def sep_shape(self, s: int) -> tuple[int, ...]:
        return tuple(self.net.card(v) for v in self.separators[s])

    def cliques_containing(self, names: set[str]) -> list[int]:
        return [i for i, c in enumerate(self.cliques) if names <= set(c)]

    def smallest_clique_containing(self, names: set[str]) -> int | None:
        """Smallest clique covering `names`; ties broken by clique order."""
        best = None
        for i in self.cliques_containing(names):
            if best is None or len(self.cliques[i]) < len(self.cliques[best]):
                best = i
        return best

    def schedule(self) -> list[tuple[int, int, int]]:
        """Deterministic (parent, child, edge) visit order, one DFS per
        component rooted at its lowest clique index."""
        out: list[tuple[int, int, int]] = []
        seen = set()
        for comp in self.components:
            root = comp[0]
            stack = [root]
            seen.add(root)
            while stack:
                node = stack.pop()
                for other, e in reversed(self.neighbors[node]):
                    if other not in seen:
                        seen.add(other)
                        out.append((node, other, e))
                        stack.append(other)
        return out


def _min_fill_order(n_vars: int, adj: list[set[int]]) -> list[tuple[int, set[int]]]:
    """Eliminate all vertices, returning (vertex, clique-at-elimination) pairs.
    Ties: fewer fill edges, then smaller clique, then declaration order."""
    adj = [set(s) for s in adj]
    alive = set(range(n_vars))
    out = []
    while alive:
        best = None
        best_key = None
        for v in sorted(alive):
            nbrs = adj[v]
            fill = 0
            nbr_list = sorted(nbrs)
            for a_i, a in enumerate(nbr_list):
                for b in nbr_list[a_i + 1:]:
                    if b not in adj[a]:
                        fill += 1
            key = (fill, len(nbrs) + 1, v)
            if best_key is None or key < best_key:
                best, best_key = v, key
        nbrs = sorted(adj[best])
        clique = set(nbrs) | {best}
        for a in nbrs:
            adj[a].update(b for b in nbrs if b != a)
            adj[a].discard(best)
        adj[best] = set()
        alive.discard(best)
        out.append((best, clique))
    return out


def compile(net: BayesNet, heuristic: str = "min-fill") -> JunctionTree:
    """Moralize, triangulate (min-fill), and build a max-weight clique tree.

    Deterministic for a fixed input: all ties resolve by declaration order.
    """
    if heuristic != "min-fill":
        raise ValueError(f"unknown heuristic {heuristic!r}")
    n = len(net.variables)
    index = {v.name: i for i, v in enumerate(net.variables)}
    adj: list[set[int]] = [set() for _ in range(n)]
    for cpd in net.cpds:
        family = [index[cpd.child]] + [index[p] for p in cpd.parents]
        for a_i, a in enumerate(family):
            for b in family[a_i + 1:]:
                adj[a].add(b)
                adj[b].add(a)

    candidates = [clique for _, clique in _min_fill_order(n, adj)]
    cliques_idx: list[set[int]] = []
    for cand in candidates:
        if not any(cand <= kept for kept in cliques_idx):
            cliques_idx.append(cand)

    names = net.names
    cliques = [tuple(names[i] for i in sorted(c)) for c in cliques_idx]

    # max-weight spanning forest over pairwise intersections (Kruskal);
    # ties by clique declaration order
    weighted = []
    for i in range(len(cliques_idx)):
        for j in range(i + 1, len(cliques_idx)):
            w = len(cliques_idx[i] & cliques_idx[j])
            if w > 0:
                weighted.append((-w, i, j))
    weighted.sort()
    parent = list(range(len(cliques_idx)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges: list[tuple[int, int]] = []
    separators: list[tuple[str, ...]] = []
    for negw, i, j in weighted:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            edges.append((i, j))
            separators.append(tuple(names[v] for v in sorted(cliques_idx[i] & cliques_idx[j])))

    roots: dict[int, list[int]] = {}
    for i in range(len(cliques_idx)):
        roots.setdefault(find(i), []).append(i)
    components = sorted(roots.values(), key=lambda comp: comp[0])
    links = [(components[k][0], components[k + 1][0]) for k in range(len(components) - 1)]

    family_clique: dict[str, int] = {}
    for cpd in net.cpds:
        family = {cpd.child, *cpd.parents}
        best = None
        for c, clique in enumerate(cliques):
            if family <= set(clique):
                if best is None or len(clique) < len(cliques[best]):
                    best = c
        assert best is not None, f"family {family} not covered"
        family_clique[cpd.child] = best

    return JunctionTree(
        net=net,
        cliques=cliques,
        separators=separators,
        edges=edges,
        treewidth=max(len(c) for c in cliques) - 1,
        family_clique=family_clique,
        components=components,
        links=links,
    )


# ---------------------------------------------------------------------------
# probability potentials

@dataclass
class ProbTree:
    structure: JunctionTree
    cliques: list[np.ndarray]
    separators: list[np.ndarray]
    calibrated: bool = False

    def copy(self) -> "ProbTree":
        return ProbTree(self.structure, [c.copy() for c in self.cliques],
                        [s.copy() for s in self.separators], self.calibrated)


def sum_calibrate(tree: ProbTree) -> None:
    """Two-phase Hugin propagation in place: collect to each component root,
    distribute back, then normalize every potential to unit mass."""
    jt = tree.structure
    order = jt.schedule()
    for parent, child, e in reversed(order):
        _pass_message(tree, child, parent, e)
    for parent, child, e in order:
        _pass_message(tree, parent, child, e)
    for c, values in enumerate(tree.cliques):
        total = values.sum()
        if total > 0:
            tree.cliques[c] = values / total
    for s, values in enumerate(tree.separators):
        total = values.sum()
        if total > 0:
            tree.separators[s] = values / total
    tree.calibrated = True


def _pass_message(tree: ProbTree, src: int, dst: int, e: int) -> None:
    jt = tree.structure
    sep_scope = jt.separators[e]
    msg = marginalize(tree.cliques[src], jt.cliques[src], sep_scope)
    ratio = safe_divide(msg, tree.separators[e])
    tree.cliques[dst] = tree.cliques[dst] * embed(ratio, sep_scope, jt.cliques[dst])
    tree.separators[e] = msg


def initialize_prob_tree(net: BayesNet, jt: JunctionTree) -> ProbTree:
    """Multiply every CPD into its assigned clique and calibrate; afterwards
    each clique potential is the exact marginal over its scope."""
    cliques = [np.ones(jt.clique_shape(c)) for c in range(len(jt.cliques))]
    seps = [np.ones(jt.sep_shape(s)) for s in range(len(jt.separators))]
    for cpd in net.cpds:
        c = jt.family_clique[cpd.child]
        pot = _cpd_potential(net, cpd)
        cliques[c] = cliques[c] * embed(pot.values, pot.scope, jt.cliques[c])
    tree = ProbTree(jt, cliques, seps)
    sum_calibrate(tree)
    return tree


def _cpd_potential(net: BayesNet, cpd) -> Potential:
    """CPD table as a potential with scope in declaration order."""
    axes_order = list(cpd.parents) + [cpd.child]
    shape = tuple(net.card(v) for v in axes_order)
    values = cpd.table.reshape(shape)
    scope = tuple(sorted(axes_order, key=net.var_index))
    perm = [axes_order.index(v) for v in scope]
    return Potential(scope, np.ascontiguousarray(values.transpose(perm)))


def factored_joint(jt: JunctionTree, cliques: list[np.ndarray],
                   separators: list[np.ndarray]) -> np.ndarray:
    """Evaluate Π_c pot_c / Π_s pot_s over every joint state (small nets only).

    Result is indexed over all variables in declaration order, C layout.
    """
    names = tuple(jt.net.names)
    size = 1
    for v in jt.net.variables:
        size *= v.card
    if size > 1 << 22:
        raise ValueError("joint too large to materialize")
    shape = tuple(v.card for v in jt.net.variables)
    joint = np.ones(shape)
    for c, values in enumerate(cliques):
        joint = joint * embed(values, jt.cliques[c], names)
    for s, values in enumerate(separators):
        joint = joint / embed(values, jt.separators[s], names)
    return joint
