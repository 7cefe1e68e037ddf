"""Integer-weighted level graphs and hierarchical graphs.

A :class:`LevelGraph` stores undirected edges canonically as ``(u, v)`` with
``u <= v``; a self-loop ``(i, i)`` carries the internal weight of the
community that was aggregated into node ``i``.

A :class:`HierarchicalGraph` is kept in canonical form: at every level the
nodes of one community are contiguous, communities appear in the order of
their parent nodes, and inside a community the nodes follow the weighted BFS
order of :func:`bfs_order_community`.  Autoregressive steps therefore index
nodes by position directly.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

Edge = tuple[int, int]


class GraphError(ValueError):
    """Malformed graph or hierarchy."""


class InvalidPartitionError(GraphError):
    pass


class ConsistencyError(AssertionError):
    """A hierarchy violated weight conservation or parent consistency."""


def canon(u: int, v: int) -> Edge:
    return (u, v) if u <= v else (v, u)


@dataclass(frozen=True)
class LevelGraph:
    node_count: int
    edges: Mapping[Edge, int] = field(default_factory=dict)
    level_index: int = 0

    def __post_init__(self):
        clean: dict[Edge, int] = {}
        for (u, v), w in dict(self.edges).items():
            u, v, w = int(u), int(v), int(w)
            key = canon(u, v)
            if not (0 <= key[0] and key[1] < self.node_count):
                raise GraphError(f"edge {key} out of range for {self.node_count} nodes")
            if w < 1:
                raise GraphError(f"edge {key} has non-positive weight {w}")
            if key in clean:
                raise GraphError(f"duplicate edge {key}")
            clean[key] = w
        object.__setattr__(self, "edges", dict(sorted(clean.items())))

    @classmethod
    def from_edges(cls, node_count: int, triples: Iterable[Sequence[int]], level_index: int = 0,
                   accumulate: bool = False) -> "LevelGraph":
        acc: dict[Edge, int] = defaultdict(int) if accumulate else {}
        for t in triples:
            u, v = int(t[0]), int(t[1])
            w = int(t[2]) if len(t) > 2 else 1
            key = canon(u, v)
            if not accumulate and key in acc:
                raise GraphError(f"duplicate edge {key}")
            acc[key] = acc.get(key, 0) + w if accumulate else w
        return cls(node_count, dict(acc), level_index)

    @property
    def total_weight(self) -> int:
        return sum(self.edges.values())

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def self_loop(self, i: int) -> int:
        return self.edges.get((i, i), 0)

    def has_self_loops(self) -> bool:
        return any(u == v for u, v in self.edges)

    def triples(self) -> list[tuple[int, int, int]]:
        return [(u, v, w) for (u, v), w in self.edges.items()]

    def adjacency(self) -> np.ndarray:
        """Dense symmetric weight matrix; self-loops sit on the diagonal once."""
        a = np.zeros((self.node_count, self.node_count), dtype=np.int64)
        for (u, v), w in self.edges.items():
            a[u, v] = w
            a[v, u] = w
        return a

    def neighbors(self) -> list[dict[int, int]]:
        nbrs: list[dict[int, int]] = [dict() for _ in range(self.node_count)]
        for (u, v), w in self.edges.items():
            nbrs[u][v] = w
            nbrs[v][u] = w
        return nbrs

    def strength(self) -> np.ndarray:
        """Weighted degree with self-loops counted twice (modularity convention)."""
        s = np.zeros(self.node_count, dtype=np.int64)
        for (u, v), w in self.edges.items():
            s[u] += w
            s[v] += w
        return s

    def is_simple(self) -> bool:
        return all(u != v and w == 1 for (u, v), w in self.edges.items())

    def relabel(self, mapping: Sequence[int]) -> "LevelGraph":
        """Return the graph with node ``i`` renamed ``mapping[i]``."""
        edges = {canon(mapping[u], mapping[v]): w for (u, v), w in self.edges.items()}
        return LevelGraph(self.node_count, edges, self.level_index)

    def subgraph(self, nodes: Sequence[int]) -> "LevelGraph":
        """Induced subgraph with nodes renumbered by their position in ``nodes``."""
        pos = {n: i for i, n in enumerate(nodes)}
        edges = {}
        for (u, v), w in self.edges.items():
            if u in pos and v in pos:
                edges[canon(pos[u], pos[v])] = w
        return LevelGraph(len(nodes), edges, self.level_index)

    def connected_components(self) -> list[list[int]]:
        nbrs = self.neighbors()
        seen = [False] * self.node_count
        comps = []
        for s in range(self.node_count):
            if seen[s]:
                continue
            seen[s] = True
            stack, comp = [s], []
            while stack:
                x = stack.pop()
                comp.append(x)
                for y in nbrs[x]:
                    if not seen[y]:
                        seen[y] = True
                        stack.append(y)
            comps.append(sorted(comp))
        return comps

    def with_level(self, level_index: int) -> "LevelGraph":
        return LevelGraph(self.node_count, self.edges, level_index)

    def __eq__(self, other):
        if not isinstance(other, LevelGraph):
            return NotImplemented
        return self.node_count == other.node_count and self.edges == other.edges

    def __hash__(self):
        return hash((self.node_count, tuple(self.edges.items())))


def coarsen(g: LevelGraph, assignment: Sequence[int]) -> LevelGraph:
    """Aggregate each cluster into a super-node.

    Internal weight (including existing self-loops) becomes the super-node's
    self-loop and cross weights between two clusters are summed into one
    super-edge, so the total weight is unchanged.
    """
    a = np.asarray(assignment, dtype=np.int64)
    if a.shape != (g.node_count,):
        raise InvalidPartitionError(f"assignment has {a.size} entries for {g.node_count} nodes")
    k = int(a.max()) + 1 if a.size else 0
    if a.size and (a.min() < 0 or len(np.unique(a)) != k):
        raise InvalidPartitionError("cluster ids must be contiguous from 0")
    acc: dict[Edge, int] = defaultdict(int)
    for (u, v), w in g.edges.items():
        acc[canon(int(a[u]), int(a[v]))] += w
    return LevelGraph(k, dict(acc), max(g.level_index - 1, 0))


@dataclass(frozen=True)
class CommunityView:
    level: int
    parent: int
    nodes: tuple[int, ...]
    edges: Mapping[Edge, int]
    leaf: bool

    @property
    def total_weight(self) -> int:
        return sum(self.edges.values())


@dataclass(frozen=True)
class BipartiteView:
    level: int
    parent_edge: Edge
    left: tuple[int, ...]
    right: tuple[int, ...]
    edges: Mapping[Edge, int]
    leaf: bool

    @property
    def total_weight(self) -> int:
        return sum(self.edges.values())

    def candidates(self) -> list[Edge]:
        return [(a, b) for a in self.left for b in self.right]


def bfs_order_community(community: CommunityView | LevelGraph,
                        nodes: Sequence[int] | None = None) -> list[int]:
    """Weighted BFS order of a community.

    The start node maximises weighted degree plus self-loop weight.  The queue
    holds discovered nodes and is re-sorted every step by the total weight of
    edges to already-ordered nodes plus the node's self-edge; ties go to the
    smallest id.  Disconnected communities are handled one component at a time,
    largest component first.
    """
    if isinstance(community, CommunityView):
        members = list(community.nodes)
        edges = community.edges
    else:
        members = list(range(community.node_count)) if nodes is None else list(nodes)
        member_set = set(members)
        edges = {e: w for e, w in community.edges.items() if e[0] in member_set and e[1] in member_set}
    if not members:
        raise GraphError("empty community")
    member_set = set(members)
    nbrs: dict[int, dict[int, int]] = {n: {} for n in members}
    self_w: dict[int, int] = defaultdict(int)
    for (u, v), w in edges.items():
        if u not in member_set or v not in member_set:
            continue
        if u == v:
            self_w[u] += w
        else:
            nbrs[u][v] = w
            nbrs[v][u] = w

    # components, largest first, ties by smallest member id
    seen: set[int] = set()
    comps = []
    for s in sorted(members):
        if s in seen:
            continue
        seen.add(s)
        stack, comp = [s], []
        while stack:
            x = stack.pop()
            comp.append(x)
            for y in nbrs[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        comps.append(comp)
    comps.sort(key=lambda c: (-len(c), min(c)))

    order: list[int] = []
    for comp in comps:
        start = min(comp, key=lambda n: (-(sum(nbrs[n].values()) + self_w[n]), n))
        placed = {start}
        order.append(start)
        link: dict[int, int] = {}
        for y, w in nbrs[start].items():
            link[y] = link.get(y, 0) + w
        while link:
            nxt = min(link, key=lambda n: (-(link[n] + self_w[n]), n))
            del link[nxt]
            placed.add(nxt)
            order.append(nxt)
            for y, w in nbrs[nxt].items():
                if y not in placed:
                    link[y] = link.get(y, 0) + w
    return order


def candidate_edges_at_step(community: CommunityView | int, order: Sequence[int] | None = None,
                            t: int = 1, leaf: bool | None = None) -> list[Edge]:
    """Candidate edges (by position) between the ``t``-th node and its predecessors.

    Non-leaf levels append the self-edge ``(t, t)``.  ``community`` may be a
    view or just the community size.
    """
    if isinstance(community, CommunityView):
        size = len(community.nodes)
        leaf = community.leaf if leaf is None else leaf
    else:
        size = int(community)
    if leaf is None:
        raise TypeError("leaf flag required when passing a size")
    if order is not None and len(order) != size:
        raise GraphError("order does not match community size")
    if not 0 <= t < size:
        raise GraphError(f"step {t} outside community of size {size}")
    if t == 0 and leaf:
        raise GraphError("the first leaf node has no candidate edges")
    cands = [(t, j) for j in range(t)]
    if not leaf:
        cands.append((t, t))
    return cands


@dataclass(frozen=True)
class HierarchicalGraph:
    """Levels ``0..L`` (root first) plus per-level parent maps.

    ``parents[l - 1][i]`` is the parent (at level ``l - 1``) of node ``i`` at
    level ``l``.  ``leaf_labels[i]`` is the original id of canonical leaf node
    ``i``.
    """
    levels: tuple[LevelGraph, ...]
    parents: tuple[tuple[int, ...], ...]
    leaf_labels: tuple[int, ...] = ()
    meta: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(g.with_level(i) for i, g in enumerate(self.levels)))
        object.__setattr__(self, "parents", tuple(tuple(int(x) for x in p) for p in self.parents))
        if not self.leaf_labels:
            object.__setattr__(self, "leaf_labels", tuple(range(self.levels[-1].node_count)))

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def w0(self) -> int:
        return self.levels[0].total_weight

    @property
    def leaf(self) -> LevelGraph:
        return self.levels[-1]

    def parent_of(self, level: int) -> np.ndarray:
        return np.asarray(self.parents[level - 1], dtype=np.int64)

    def community_slices(self, level: int) -> list[tuple[int, int, int]]:
        """``(parent, start, stop)`` for each community at ``level >= 1``."""
        par = self.parents[level - 1]
        n_par = self.levels[level - 1].node_count
        bounds = np.searchsorted(np.asarray(par), np.arange(n_par + 1))
        return [(p, int(bounds[p]), int(bounds[p + 1])) for p in range(n_par)]

    def community(self, level: int, parent: int) -> CommunityView:
        _, a, b = self.community_slices(level)[parent]
        g = self.levels[level]
        edges = {e: w for e, w in g.edges.items() if a <= e[0] < b and a <= e[1] < b}
        return CommunityView(level, parent, tuple(range(a, b)), edges, level == self.depth)

    def communities(self, level: int) -> list[CommunityView]:
        return [self.community(level, p) for p in range(self.levels[level - 1].node_count)]

    def bipartites(self, level: int) -> list[BipartiteView]:
        """One view per parent edge ``(i, j)``, ``i < j``, in edge-key order."""
        par = self.parents[level - 1]
        slices = self.community_slices(level)
        cross: dict[Edge, dict[Edge, int]] = defaultdict(dict)
        for (u, v), w in self.levels[level].edges.items():
            pu, pv = par[u], par[v]
            if pu != pv:
                if pu < pv:
                    cross[(pu, pv)][(u, v)] = w
                else:
                    cross[(pv, pu)][(v, u)] = w
        views = []
        for (i, j) in self.levels[level - 1].edges:
            if i == j:
                continue
            _, a0, a1 = slices[i]
            _, b0, b1 = slices[j]
            views.append(BipartiteView(level, (i, j), tuple(range(a0, a1)), tuple(range(b0, b1)),
                                       cross.get((i, j), {}), level == self.depth))
        return views

    def to_json(self) -> dict:
        return {
            "levels": [{"n": g.node_count, "edges": [list(t) for t in g.triples()]} for g in self.levels],
            "parents": [list(p) for p in self.parents],
            "leaf_labels": list(self.leaf_labels),
            **({"meta": dict(self.meta)} if self.meta else {}),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "HierarchicalGraph":
        levels = tuple(LevelGraph.from_edges(lv["n"], lv["edges"], i) for i, lv in enumerate(doc["levels"]))
        hg = cls(levels, tuple(tuple(p) for p in doc["parents"]),
                 tuple(doc.get("leaf_labels", ())), doc.get("meta", {}))
        validate_hg(hg)
        return hg


def validate_hg(hg: HierarchicalGraph, leaf_simple: bool = True) -> None:
    """Raise :class:`ConsistencyError` unless every hierarchy invariant holds."""
    if hg.levels[0].node_count != 1:
        raise ConsistencyError("root level must have exactly one node")
    if len(hg.parents) != hg.depth:
        raise ConsistencyError("need one parent map per non-root level")
    w0 = hg.w0
    for lv, g in enumerate(hg.levels):
        if g.total_weight != w0:
            raise ConsistencyError(f"level {lv} total weight {g.total_weight} != w0 {w0}")
    if leaf_simple and hg.depth > 0 and not hg.leaf.is_simple():
        raise ConsistencyError("leaf level must be a simple graph")
    for lv in range(1, hg.depth + 1):
        par = np.asarray(hg.parents[lv - 1], dtype=np.int64)
        if par.shape != (hg.levels[lv].node_count,):
            raise ConsistencyError(f"parent map of level {lv} has wrong length")
        if par.size and np.any(np.diff(par) < 0):
            raise ConsistencyError(f"level {lv} communities are not contiguous")
        try:
            rebuilt = coarsen(hg.levels[lv], par)
        except InvalidPartitionError as exc:
            raise ConsistencyError(f"level {lv}: {exc}") from exc
        if rebuilt != hg.levels[lv - 1]:
            raise ConsistencyError(f"level {lv} does not coarsen to level {lv - 1}")


def build_hg(g: LevelGraph, partition_stack: Sequence[Sequence[int]]) -> HierarchicalGraph:
    """Coarsen ``g`` bottom-up with ``partition_stack`` and canonicalise the result.

    ``partition_stack[0]`` clusters the leaf nodes, ``partition_stack[1]``
    clusters those clusters, and so on; the last coarsening must produce a
    single node.
    """
    raw = [g]
    for a in partition_stack:
        raw.append(coarsen(raw[-1], a))
    if raw[-1].node_count != 1:
        raise InvalidPartitionError(f"partition stack ends with {raw[-1].node_count} nodes, expected 1")
    raw.reverse()
    depth = len(raw) - 1
    raw_par = [np.asarray(partition_stack[depth - lv], dtype=np.int64) for lv in range(1, depth + 1)]

    # canonical relabelling, top-down
    perms = [np.array([0])]
    levels = [raw[0]]
    parents = []
    for lv in range(1, depth + 1):
        prev_perm = perms[-1]
        prev_inv = np.empty_like(prev_perm)
        prev_inv[prev_perm] = np.arange(prev_perm.size)
        gl = raw[lv]
        members: dict[int, list[int]] = defaultdict(list)
        for node, p in enumerate(raw_par[lv - 1]):
            members[int(p)].append(node)
        perm = []
        for p in prev_perm:
            perm.extend(bfs_order_community(gl, members[int(p)]))
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        levels.append(gl.relabel(inv))
        parents.append(tuple(int(prev_inv[raw_par[lv - 1][perm[i]]]) for i in range(perm.size)))
        perms.append(perm)
    hg = HierarchicalGraph(tuple(levels), tuple(parents), tuple(int(x) for x in perms[-1]))
    validate_hg(hg, leaf_simple=g.is_simple())
    return hg


# ---------------------------------------------------------------- text formats

def write_edge_lists(graphs: Sequence[LevelGraph], path) -> None:
    """One ``u v w`` triple per line, graphs separated by a blank line.

    A graph whose highest-numbered nodes are isolated gets a ``# n <count>``
    header so the node count survives the round trip.
    """
    chunks = []
    for g in graphs:
        lines = [f"# n {g.node_count}"]
        lines += [f"{u} {v} {w}" for u, v, w in g.triples()]
        chunks.append("\n".join(lines))
    with open(path, "w") as fh:
        fh.write("\n\n".join(chunks) + "\n")


def parse_edge_lists(text: str) -> list[LevelGraph]:
    graphs: list[LevelGraph] = []
    triples: list[tuple[int, int, int]] = []
    n_decl: int | None = None

    def flush():
        nonlocal triples, n_decl
        if triples or n_decl is not None:
            n = max([max(u, v) + 1 for u, v, _ in triples], default=0)
            if n_decl is not None:
                if n_decl < n:
                    raise GraphError(f"declared node count {n_decl} smaller than max id + 1 ({n})")
                n = n_decl
            graphs.append(LevelGraph.from_edges(n, triples))
        triples, n_decl = [], None

    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s:
            flush()
            continue
        if s.startswith("#"):
            parts = s[1:].split()
            if len(parts) == 2 and parts[0] == "n":
                try:
                    n_decl = int(parts[1])
                except ValueError:
                    raise GraphError(f"line {lineno}: bad node-count header {s!r}") from None
            continue
        parts = s.split()
        if len(parts) not in (2, 3):
            raise GraphError(f"line {lineno}: expected 'u v w', got {s!r}")
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise GraphError(f"line {lineno}: non-integer field in {s!r}") from None
        if vals[0] < 0 or vals[1] < 0 or (len(vals) == 3 and vals[2] < 1):
            raise GraphError(f"line {lineno}: negative id or non-positive weight in {s!r}")
        triples.append((vals[0], vals[1], vals[2] if len(vals) == 3 else 1))
    flush()
    return graphs


def read_edge_lists(path) -> list[LevelGraph]:
    with open(path) as fh:
        return parse_edge_lists(fh.read())


def write_hg_jsonl(hgs: Sequence[HierarchicalGraph], path) -> None:
    with open(path, "w") as fh:
        for hg in hgs:
            fh.write(json.dumps(hg.to_json()) + "\n")


def read_hg_jsonl(path) -> list[HierarchicalGraph]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(HierarchicalGraph.from_json(json.loads(line)))
                except (KeyError, json.JSONDecodeError) as exc:
                    raise GraphError(f"{path}:{lineno}: {exc}") from exc
    return out
