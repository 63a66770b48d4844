"""Feedback graphs, greedy star decomposition and exact small-graph oracles.

Vertices are ``0..n-1``. Every vertex carries a self-loop, so ``adj[v]`` is
the closed neighbourhood of ``v`` and ``degree(v) = len(adj[v])`` counts the
vertex itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._rng import make_rng

EXACT_MAX_VERTICES = 20


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class FeedbackGraph:
    n: int
    adj: tuple[frozenset[int], ...]

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"graph needs at least one vertex, got n={self.n}")
        if len(self.adj) != self.n:
            raise GraphError(f"adjacency has {len(self.adj)} rows for n={self.n}")
        for v, nbrs in enumerate(self.adj):
            if v not in nbrs:
                raise GraphError(f"vertex {v} lacks its self-loop")
            for u in nbrs:
                if not 0 <= u < self.n:
                    raise GraphError(f"neighbour {u} of {v} out of range")
                if v not in self.adj[u]:
                    raise GraphError(f"edge ({v}, {u}) is not symmetric")

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    @property
    def max_degree(self) -> int:
        return max(len(a) for a in self.adj)

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges ``(u, v)`` with ``u < v``; self-loops omitted."""
        return sorted((u, v) for u in range(self.n) for v in self.adj[u] if u < v)

    def is_complete(self) -> bool:
        return all(len(a) == self.n for a in self.adj)

    def adjacency_matrix(self) -> np.ndarray:
        m = np.zeros((self.n, self.n), dtype=bool)
        for v, nbrs in enumerate(self.adj):
            m[v, list(nbrs)] = True
        return m

    def masks(self) -> list[int]:
        """Closed neighbourhoods as bitmasks."""
        return [sum(1 << u for u in a) for a in self.adj]

    def star_center(self) -> int | None:
        """Center of a star graph, or ``None`` if the graph is not a star.

        A single vertex is a (leafless) star; for two adjacent vertices the
        lower index is taken as the center.
        """
        full = frozenset(range(self.n))
        for c in range(self.n):
            if self.adj[c] != full:
                continue
            if all(self.adj[v] == frozenset((v, c)) for v in range(self.n) if v != c):
                return c
        return None


def build_graph(n: int, edges: Iterable[Sequence[int]]) -> FeedbackGraph:
    """Undirected feedback graph from an edge list; adds self-loops, dedups."""
    if n < 1:
        raise GraphError(f"n must be >= 1, got {n}")
    adj = [{v} for v in range(n)]
    for pair in edges:
        u, v = (int(x) for x in pair)
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edge {(u, v)} has an endpoint outside [0, {n})")
        adj[u].add(v)
        adj[v].add(u)
    return FeedbackGraph(n, tuple(frozenset(a) for a in adj))


def star(k_leaves: int) -> FeedbackGraph:
    """Vertex 0 is the center, vertices ``1..k_leaves`` are leaves."""
    if k_leaves < 0:
        raise GraphError("k_leaves must be >= 0")
    return build_graph(k_leaves + 1, [(0, v) for v in range(1, k_leaves + 1)])


def complete(n: int) -> FeedbackGraph:
    return build_graph(n, [(u, v) for u in range(n) for v in range(u + 1, n)])


def bandit(n: int) -> FeedbackGraph:
    return build_graph(n, [])


def union_of_stars(leaf_counts: Sequence[int]) -> FeedbackGraph:
    """Disjoint stars laid out center-first: ``[c0, leaves..., c1, leaves...]``."""
    if not leaf_counts:
        raise GraphError("need at least one star")
    edges = []
    base = 0
    for k in leaf_counts:
        if k < 0:
            raise GraphError("leaf counts must be >= 0")
        edges += [(base, base + j) for j in range(1, k + 1)]
        base += k + 1
    return build_graph(base, edges)


def erdos_renyi(n: int, p: float, seed: int) -> FeedbackGraph:
    if not 0.0 <= p <= 1.0:
        raise GraphError(f"edge probability must lie in [0, 1], got {p}")
    rng = make_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return build_graph(n, zip(iu[keep].tolist(), ju[keep].tolist()))


GENERATORS = {
    "star": star,
    "complete": complete,
    "bandit": bandit,
    "union_of_stars": union_of_stars,
    "erdos_renyi": erdos_renyi,
}


def generate(kind: str, **params) -> FeedbackGraph:
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise GraphError(f"unknown graph kind {kind!r}; expected one of {sorted(GENERATORS)}") from None
    for name, value in params.items():
        if isinstance(value, (int, float)) and not isinstance(value, bool) and name not in ("p", "seed") and value <= 0:
            raise GraphError(f"parameter {name} must be positive, got {value}")
    return gen(**params)


# ---------------------------------------------------------------------------
# star decomposition


@dataclass(frozen=True)
class StarDecomposition:
    revealing: tuple[int, ...]
    owner: tuple[int, ...]

    def members(self, r: int) -> list[int]:
        return [v for v, o in enumerate(self.owner) if o == r]

    def leaves(self, r: int) -> list[int]:
        return [v for v, o in enumerate(self.owner) if o == r and v != r]

    def check(self, g: FeedbackGraph) -> None:
        """Raise ``GraphError`` if any decomposition invariant fails."""
        if len(self.owner) != g.n:
            raise GraphError("owner map does not cover every vertex")
        rset = set(self.revealing)
        for v, o in enumerate(self.owner):
            if o not in rset:
                raise GraphError(f"owner {o} of vertex {v} is not revealing")
            if o not in g.adj[v]:
                raise GraphError(f"owner {o} is not adjacent to {v}")
        for r in self.revealing:
            if self.owner[r] != r:
                raise GraphError(f"revealing vertex {r} is not its own owner")
        if not is_dominating(g, self.revealing):
            raise GraphError("revealing set does not dominate the graph")


def greedy_dominating_set(g: FeedbackGraph) -> StarDecomposition:
    """Greedy minimum-dominating-set heuristic returning the induced stars.

    Each step picks, among still-uncovered vertices, the one with the most
    uncovered closed neighbours (lowest index on ties), makes it revealing and
    hands it every uncovered neighbour. Covered vertices leave the graph.
    """
    uncovered = set(range(g.n))
    owner = [-1] * g.n
    revealing = []
    while uncovered:
        best = min(uncovered, key=lambda v: (-len(g.adj[v] & uncovered), v))
        claimed = g.adj[best] & uncovered
        for v in claimed:
            owner[v] = best
        revealing.append(best)
        uncovered -= claimed
    return StarDecomposition(tuple(revealing), tuple(owner))


def is_dominating(g: FeedbackGraph, s: Iterable[int]) -> bool:
    covered = set()
    for v in s:
        covered |= g.adj[v]
    return len(covered) == g.n


# ---------------------------------------------------------------------------
# exact oracles


@dataclass(frozen=True)
class GraphStats:
    gamma: int
    alpha: int
    phi: Fraction
    max_degree: int
    n_maximal_independent: int = field(default=0, compare=False)


def _subset_tables(masks: list[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """For every subset S of V (as an integer mask): union of closed
    neighbourhoods, independence flag and popcount."""
    n = len(masks)
    cover = np.zeros(1, dtype=np.int64)
    indep = np.ones(1, dtype=bool)
    for k in range(n):
        ids = np.arange(1 << k, dtype=np.int64)
        open_nbrs = masks[k] & ~(1 << k)
        cover = np.concatenate([cover, cover | masks[k]])
        indep = np.concatenate([indep, indep & ((ids & open_nbrs) == 0)])
    size = np.bitwise_count(np.arange(1 << n, dtype=np.int64)).astype(np.int64)
    return cover, indep, size


def exact_stats(g: FeedbackGraph) -> GraphStats:
    """Exact domination number, independence number and phi by enumeration.

    Independence ignores self-loops. phi is the minimum over maximal
    independent sets ``I`` of ``delta(I) / |I|``, where ``delta(I)`` is the
    largest number of ``I``-vertices adjacent to one member of some
    inclusion-minimal set dominating ``I``. Any vertex touching ``I`` belongs
    to such a set (pad it with the untouched ``I``-vertices themselves), so
    ``delta(I) = max_v |N(v) & I|``; ``phi_bruteforce`` checks this by full
    enumeration on small graphs.
    """
    if g.n > EXACT_MAX_VERTICES:
        raise GraphError(
            f"exact statistics need n <= {EXACT_MAX_VERTICES} (exponential enumeration), got n={g.n}"
        )
    masks = g.masks()
    full = (1 << g.n) - 1
    cover, indep, size = _subset_tables(masks)
    dominating = cover == full
    gamma = int(size[dominating].min())
    alpha = int(size[indep].max())

    maximal = np.flatnonzero(indep & dominating).astype(np.int64)
    best = np.zeros(len(maximal), dtype=np.int64)
    for m in masks:
        np.maximum(best, np.bitwise_count(maximal & m).astype(np.int64), out=best)
    sizes = size[maximal]
    # minimise best/size by cross-multiplication to stay exact
    k = 0
    for j in range(1, len(maximal)):
        if best[j] * sizes[k] < best[k] * sizes[j]:
            k = j
    phi = Fraction(int(best[k]), int(sizes[k]))
    return GraphStats(gamma, alpha, phi, g.max_degree, len(maximal))


def _bits(mask: int) -> list[int]:
    return [i for i in range(mask.bit_length()) if mask >> i & 1]


def phi_bruteforce(g: FeedbackGraph) -> Fraction:
    """phi by enumerating every maximal independent set and every
    inclusion-minimal dominating set of it. Exponential twice over; test
    oracle for tiny graphs only."""
    if g.n > 10:
        raise GraphError("phi_bruteforce is limited to n <= 10")
    masks = g.masks()
    n = g.n
    ratios = []
    for i_mask in range(1, 1 << n):
        members = _bits(i_mask)
        if any(masks[u] & i_mask & ~(1 << u) for u in members):
            continue
        if any(not (masks[v] & i_mask) for v in range(n) if not i_mask >> v & 1):
            continue  # not maximal
        delta = 0
        for s_mask in range(1, 1 << n):
            s = _bits(s_mask)
            hit = 0
            for v in s:
                hit |= masks[v] & i_mask
            if hit != i_mask:
                continue
            minimal = True
            for v in s:
                rest = 0
                for w in s:
                    if w != v:
                        rest |= masks[w] & i_mask
                if rest == i_mask:
                    minimal = False
                    break
            if minimal:
                delta = max(delta, max(bin(masks[v] & i_mask).count("1") for v in s))
        ratios.append(Fraction(delta, len(members)))
    return min(ratios)


def greedy_bound(g: FeedbackGraph, gamma: int) -> float:
    """Approximation guarantee ``(2 + ln(max degree)) * gamma``."""
    return (2.0 + math.log(g.max_degree)) * gamma


# ---------------------------------------------------------------------------
# edge-list text format


def parse_edge_list(text: str) -> FeedbackGraph:
    """First non-blank line ``n``; then one ``u v`` pair per line (0-based)."""
    lines = [(i, ln.split("#", 1)[0].strip()) for i, ln in enumerate(text.splitlines(), 1)]
    lines = [(i, ln) for i, ln in lines if ln]
    if not lines:
        raise GraphError("empty edge list")
    lineno, head = lines[0]
    try:
        n = int(head)
    except ValueError:
        raise GraphError(f"line {lineno}: expected vertex count, got {head!r}") from None
    edges = []
    for lineno, ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise GraphError(f"line {lineno}: expected 'u v', got {ln!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphError(f"line {lineno}: non-integer vertex in {ln!r}") from None
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"line {lineno}: edge {(u, v)} out of range [0, {n})")
        edges.append((u, v))
    return build_graph(n, edges)


def read_edge_list(path: str | Path) -> FeedbackGraph:
    return parse_edge_list(Path(path).read_text())


def format_edge_list(g: FeedbackGraph) -> str:
    return "\n".join([str(g.n)] + [f"{u} {v}" for u, v in g.edges()]) + "\n"
