"""Two-stage heterogeneous graph edit distance.

Stage 1 matches control skeletons (block and function nodes, control-flow and
block-function affiliation edges) and produces a block mapping; stage 2 prices
the instruction level conditioned on that mapping: instructions may substitute
only into the block their block was mapped to, instructions of unmapped blocks
pay full delete or insert (plus their affiliation edge), and data-flow edges
crossing block pairs are priced under the composed instruction mapping.

Substitutions never cross node kinds, all costs are symmetric by default, and
the normalized distance divides by the delete-everything-plus-insert-
everything path so labels land in [0, 1].
"""
from __future__ import annotations

import heapq
import itertools
from collections import Counter
from dataclasses import dataclass, field

from .graphs import HetGraph, NodeKind, Relation

DEFAULT_BEAM_WIDTH = 32
EXACT_NODE_LIMIT = 24      # combined node count per ged_exact call
EXACT_SKELETON_LIMIT = 12  # blocks per graph in exact mode


class SizeError(Exception):
    pass


@dataclass
class EditCostModel:
    node_insert: dict[str, float] = field(
        default_factory=lambda: {"instr": 1.0, "block": 1.0, "func": 1.0})
    node_delete: dict[str, float] = field(
        default_factory=lambda: {"instr": 1.0, "block": 1.0, "func": 1.0})
    node_sub_mismatch: float = 1.0
    edge_insert: dict[str, float] = field(
        default_factory=lambda: {r.value: 1.0 for r in Relation})
    edge_delete: dict[str, float] = field(
        default_factory=lambda: {r.value: 1.0 for r in Relation})
    edge_sub_mismatch: float = 1.0
    w1: float = 1.0
    w2: float = 1.0

    def n_ins(self, kind: str) -> float:
        return self.node_insert.get(kind, 1.0)

    def n_del(self, kind: str) -> float:
        return self.node_delete.get(kind, 1.0)

    def n_sub(self, label1, label2) -> float:
        return 0.0 if label1 == label2 else self.node_sub_mismatch

    def e_ins(self, rel: str) -> float:
        return self.edge_insert.get(rel, 1.0)

    def e_del(self, rel: str) -> float:
        return self.edge_delete.get(rel, 1.0)

    def to_dict(self) -> dict:
        return {"node_insert": self.node_insert, "node_delete": self.node_delete,
                "node_sub_mismatch": self.node_sub_mismatch,
                "edge_insert": self.edge_insert, "edge_delete": self.edge_delete,
                "edge_sub_mismatch": self.edge_sub_mismatch,
                "w1": self.w1, "w2": self.w2}

    @staticmethod
    def from_dict(doc: dict) -> "EditCostModel":
        m = EditCostModel()
        for k, v in doc.items():
            setattr(m, k, v)
        return m


@dataclass(frozen=True)
class StageNode:
    nid: int
    kind: str
    label: tuple


@dataclass(frozen=True)
class StageEdge:
    src: int
    dst: int
    rel: str


@dataclass
class StageGraph:
    nodes: list[StageNode]
    edges: list[StageEdge]

    def __post_init__(self):
        self.between: dict[tuple[int, int], list[str]] = {}
        for e in self.edges:
            self.between.setdefault((e.src, e.dst), []).append(e.rel)
        for rels in self.between.values():
            rels.sort()


@dataclass
class HgedResult:
    stage1_cost: float
    stage2_cost: float
    total: float
    normalized: float
    block_mapping: dict[int, int]
    exact: bool


def _edge_pair_cost(rels1: list[str], rels2: list[str],
                    costs: EditCostModel) -> float:
    """Cost of reconciling parallel edge multisets between two node pairs."""
    if not rels1 and not rels2:
        return 0.0
    c1, c2 = Counter(rels1), Counter(rels2)
    common = sum((c1 & c2).values())
    extra1 = list((c1 - c2).elements())
    extra2 = list((c2 - c1).elements())
    cost = 0.0
    subs = min(len(extra1), len(extra2))
    cost += subs * costs.edge_sub_mismatch
    for rel in extra1[subs:]:
        cost += costs.e_del(rel)
    for rel in extra2[subs:]:
        cost += costs.e_ins(rel)
    return cost


def _delete_all_cost(g: StageGraph, costs: EditCostModel,
                     node_extra: float = 0.0) -> float:
    c = sum(costs.n_del(n.kind) + node_extra for n in g.nodes)
    c += sum(costs.e_del(e.rel) for e in g.edges)
    return c


def _insert_all_cost(g: StageGraph, costs: EditCostModel,
                     node_extra: float = 0.0) -> float:
    c = sum(costs.n_ins(n.kind) + node_extra for n in g.nodes)
    c += sum(costs.e_ins(e.rel) for e in g.edges)
    return c


class _Search:
    """Shared machinery for exact (A*) and beam searches over edit paths."""

    def __init__(self, g1: StageGraph, g2: StageGraph, costs: EditCostModel,
                 del_extra: float = 0.0, ins_extra: float = 0.0):
        self.g1, self.g2, self.costs = g1, g2, costs
        self.del_extra, self.ins_extra = del_extra, ins_extra
        self.n1 = len(g1.nodes)
        self.n2 = len(g2.nodes)
        # Remaining-label multiset tails for the heuristic, per level.
        self.tail_labels: list[Counter] = []
        acc = Counter()
        for node in reversed(g1.nodes):
            acc = acc.copy()
            acc[(node.kind, node.label)] += 1
            self.tail_labels.append(acc)
        self.tail_labels.append(Counter())
        self.tail_labels.reverse()
        # Remaining-to-remaining edge relation counts per level (G1 side).
        idx_of = {n.nid: i for i, n in enumerate(g1.nodes)}
        self.tail_edges: list[Counter] = [Counter() for _ in range(self.n1 + 1)]
        for level in range(self.n1, -1, -1):
            c = Counter()
            for e in g1.edges:
                if idx_of[e.src] >= level and idx_of[e.dst] >= level:
                    c[e.rel] += 1
            self.tail_edges[level] = c

    def assign_cost(self, mapping: tuple, i: int, target: int | None) -> float:
        """Incremental cost of mapping g1.nodes[i] to g2.nodes[target]
        (or deleting it when target is None)."""
        g1, g2, costs = self.g1, self.g2, self.costs
        u1 = g1.nodes[i]
        if target is None:
            cost = costs.n_del(u1.kind) + self.del_extra
            for j in range(i):
                v1 = g1.nodes[j]
                for rels in (g1.between.get((u1.nid, v1.nid), ()),
                             g1.between.get((v1.nid, u1.nid), ())):
                    for rel in rels:
                        cost += costs.e_del(rel)
            return cost
        u2 = g2.nodes[target]
        cost = costs.n_sub(u1.label, u2.label)
        for j in range(i):
            v1 = g1.nodes[j]
            t = mapping[j]
            v2 = g2.nodes[t] if t is not None else None
            for a, b in (((u1.nid, v1.nid), (u2.nid, v2.nid if v2 else None)),
                         ((v1.nid, u1.nid), (v2.nid if v2 else None, u2.nid))):
                rels1 = g1.between.get(a, [])
                rels2 = g2.between.get(b, []) if v2 is not None else []
                cost += _edge_pair_cost(rels1, rels2, self.costs)
        return cost

    def heuristic(self, i: int, used: frozenset) -> float:
        """Admissible: label-multiset mismatch over remaining nodes plus
        relation-count mismatch over remaining-to-remaining edges."""
        costs = self.costs
        rem1 = self.tail_labels[i]
        rem2 = Counter()
        for j, node in enumerate(self.g2.nodes):
            if j not in used:
                rem2[(node.kind, node.label)] += 1
        h = 0.0
        kinds = {k for k, _ in rem1} | {k for k, _ in rem2}
        for kind in kinds:
            c1 = Counter({lab: n for (k, lab), n in rem1.items() if k == kind})
            c2 = Counter({lab: n for (k, lab), n in rem2.items() if k == kind})
            t1, t2 = sum(c1.values()), sum(c2.values())
            common = sum((c1 & c2).values())
            h += max(t1, t2) - common
        e1 = self.tail_edges[i]
        e2 = Counter()
        for e in self.g2.edges:
            su = self._g2_index[e.src]
            du = self._g2_index[e.dst]
            if su not in used and du not in used:
                e2[e.rel] += 1
        surplus = sum((e1 - e2).values())
        deficit = sum((e2 - e1).values())
        h += max(surplus, deficit)
        return h

    @property
    def _g2_index(self) -> dict[int, int]:
        if not hasattr(self, "_g2_index_cache"):
            self._g2_index_cache = {n.nid: j for j, n in enumerate(self.g2.nodes)}
        return self._g2_index_cache

    def finish_cost(self, used: frozenset) -> float:
        """Insert every unused G2 node and all its incident edges."""
        g2, costs = self.g2, self.costs
        cost = 0.0
        unused = [j for j in range(self.n2) if j not in used]
        unused_ids = {g2.nodes[j].nid for j in unused}
        for j in unused:
            cost += costs.n_ins(g2.nodes[j].kind) + self.ins_extra
        for e in g2.edges:
            if e.src in unused_ids or e.dst in unused_ids:
                cost += costs.e_ins(e.rel)
        return cost

    def candidates(self, i: int, used: frozenset) -> list[int | None]:
        u1 = self.g1.nodes[i]
        out: list[int | None] = []
        for j, node in enumerate(self.g2.nodes):
            if j not in used and node.kind == u1.kind:
                out.append(j)
        out.append(None)
        # Identity-friendly tie order: same index first, then by index.
        out.sort(key=lambda j: (0 if j == i else 1, -1 if j is None else j))
        return out


#: Ceiling on best-first expansions; A*-GED is exponential in the worst case
#: and the exact mode's contract is small graphs only.
EXACT_EXPANSION_BUDGET = 400_000


def ged_exact(g1: StageGraph, g2: StageGraph, costs: EditCostModel,
              node_limit: int = EXACT_NODE_LIMIT, del_extra: float = 0.0,
              ins_extra: float = 0.0) -> tuple[float, dict[int, int]]:
    """Optimal edit distance via best-first search with an admissible bound."""
    if len(g1.nodes) + len(g2.nodes) > node_limit:
        raise SizeError(
            f"{len(g1.nodes)}+{len(g2.nodes)} nodes exceeds the exact-mode "
            f"limit of {node_limit}")
    search = _Search(g1, g2, costs, del_extra, ins_extra)
    counter = itertools.count()
    # Ties on f pop newest-first (depth-first), so a zero-cost identity path
    # dives straight to the goal instead of flooding the frontier.
    start = (search.heuristic(0, frozenset()), -next(counter), 0.0, (), frozenset())
    heap = [start]
    best_g: dict[tuple, float] = {}
    expansions = 0
    while heap:
        expansions += 1
        if expansions > EXACT_EXPANSION_BUDGET:
            raise SizeError(
                f"exact search exceeded {EXACT_EXPANSION_BUDGET} expansions")
        f, _, g, mapping, used = heapq.heappop(heap)
        i = len(mapping)
        if i == search.n1:
            total = g + search.finish_cost(used)
            # finish_cost is part of h at the last level, so this is optimal.
            out = {}
            for k, t in enumerate(mapping):
                if t is not None:
                    out[g1.nodes[k].nid] = g2.nodes[t].nid
            return total, out
        for cand in search.candidates(i, used):
            ng = g + search.assign_cost(mapping, i, cand)
            nmapping = mapping + (cand,)
            nused = used | {cand} if cand is not None else used
            key = (i + 1, nmapping)
            if best_g.get(key, float("inf")) <= ng:
                continue
            best_g[key] = ng
            if i + 1 == search.n1:
                nf = ng + search.finish_cost(nused)
            else:
                nf = ng + search.heuristic(i + 1, nused)
            heapq.heappush(heap, (nf, -next(counter), ng, nmapping, nused))
    raise RuntimeError("search exhausted without a complete edit path")


def ged_beam(g1: StageGraph, g2: StageGraph, costs: EditCostModel,
             width: int = DEFAULT_BEAM_WIDTH, del_extra: float = 0.0,
             ins_extra: float = 0.0) -> tuple[float, dict[int, int]]:
    """Beam search over the same state space; returns a valid (upper-bound)
    edit path cost and its mapping."""
    if width < 1:
        raise ValueError("beam width must be >= 1")
    search = _Search(g1, g2, costs, del_extra, ins_extra)
    level: list[tuple[float, float, tuple, frozenset]] = [
        (search.heuristic(0, frozenset()), 0.0, (), frozenset())]
    for i in range(search.n1):
        nxt: list[tuple[float, float, tuple, frozenset]] = []
        for _f, g, mapping, used in level:
            for cand in search.candidates(i, used):
                ng = g + search.assign_cost(mapping, i, cand)
                nused = used | {cand} if cand is not None else used
                if i + 1 == search.n1:
                    nf = ng + search.finish_cost(nused)
                else:
                    nf = ng + search.heuristic(i + 1, nused)
                nxt.append((nf, ng, mapping + (cand,), nused))
        nxt.sort(key=lambda s: s[0])
        level = nxt[:width]
    best = None
    for _f, g, mapping, used in level:
        total = g + search.finish_cost(used)
        if best is None or total < best[0]:
            best = (total, mapping, used)
    assert best is not None
    total, mapping, _ = best
    out = {}
    for k, t in enumerate(mapping):
        if t is not None:
            out[g1.nodes[k].nid] = g2.nodes[t].nid
    return total, out


# ---------------------------------------------------------------------------
# Stage extraction from HetGraphs
# ---------------------------------------------------------------------------

def _skeleton(g: HetGraph) -> StageGraph:
    keep = {n.node_id for n in g.nodes
            if n.kind in (NodeKind.BLOCK, NodeKind.FUNC)}
    nodes = [StageNode(n.node_id, n.kind.value, tuple(n.attr))
             for n in g.nodes if n.node_id in keep]
    edges = [StageEdge(e.src, e.dst, e.relation.value) for e in g.edges
             if e.relation in (Relation.CONTROL_FLOW, Relation.AFFIL_BLOCK_FUNC)
             and e.src in keep and e.dst in keep]
    return StageGraph(nodes, edges)


def _instr_info(g: HetGraph):
    """Per-block instruction node lists plus cross-references for stage 2."""
    block_of: dict[int, int] = {}
    for e in g.edges:
        if e.relation is Relation.AFFIL_INSTR_BLOCK:
            block_of[e.src] = e.dst
    per_block: dict[int, list[StageNode]] = {}
    for n in g.nodes:
        if n.kind is NodeKind.INSTR:
            per_block.setdefault(block_of[n.node_id], []).append(
                StageNode(n.node_id, n.kind.value, tuple(n.attr)))
    data_edges = [e for e in g.edges if e.relation is Relation.DATA_FLOW]
    return block_of, per_block, data_edges


def hged(g1: HetGraph, g2: HetGraph, costs: EditCostModel | None = None,
         mode: str = "exact", beam_width: int = DEFAULT_BEAM_WIDTH,
         exact_node_limit: int = EXACT_NODE_LIMIT,
         skeleton_limit: int = EXACT_SKELETON_LIMIT) -> HgedResult:
    """Two-stage edit distance between two program graphs.

    mode "exact" uses best-first search everywhere and enforces the skeleton
    and node-count limits; "beam" never errors and yields an upper bound."""
    costs = costs or EditCostModel()
    exact_mode = mode == "exact"
    if mode not in ("exact", "beam"):
        raise ValueError(f"unknown mode {mode!r}")

    sk1, sk2 = _skeleton(g1), _skeleton(g2)
    blocks1 = sum(1 for n in sk1.nodes if n.kind == "block")
    blocks2 = sum(1 for n in sk2.nodes if n.kind == "block")
    if exact_mode and max(blocks1, blocks2) > skeleton_limit:
        raise SizeError(
            f"skeletons have {blocks1}/{blocks2} blocks; exact mode allows "
            f"{skeleton_limit}")

    exact = True

    def run_stage(a: StageGraph, b: StageGraph, del_extra=0.0, ins_extra=0.0):
        nonlocal exact
        if exact_mode:
            # Inside the staged decomposition the per-pair searches are kept
            # honest by the expansion budget; the standalone node limit would
            # reject identity pairs of larger blocks that search instantly.
            limit = max(exact_node_limit, len(a.nodes) + len(b.nodes))
            return ged_exact(a, b, costs, limit, del_extra, ins_extra)
        exact = False
        return ged_beam(a, b, costs, beam_width, del_extra, ins_extra)

    stage1_cost, sk_mapping = run_stage(sk1, sk2)
    block_mapping = {
        src: dst for src, dst in sk_mapping.items()
        if any(n.node_id == src and n.kind is NodeKind.BLOCK for n in g1.nodes)}

    # Stage 2: instructions conditioned on the block mapping.
    _, per_block1, data1 = _instr_info(g1)
    block_of2, per_block2, data2 = _instr_info(g2)
    affil = Relation.AFFIL_INSTR_BLOCK.value
    stage2_cost = 0.0
    instr_mapping: dict[int, int] = {}
    mapped_blocks2 = set(block_mapping.values())

    for b1 in sorted(per_block1):
        instrs1 = per_block1[b1]
        b2 = block_mapping.get(b1)
        if b2 is None:
            for n in instrs1:
                stage2_cost += costs.n_del(n.kind) + costs.e_del(affil)
            continue
        instrs2 = per_block2.get(b2, [])
        sub1 = StageGraph(instrs1, _internal_edges(data1, instrs1))
        sub2 = StageGraph(instrs2, _internal_edges(data2, instrs2))
        cost, mapping = run_stage(sub1, sub2,
                                  del_extra=costs.e_del(affil),
                                  ins_extra=costs.e_ins(affil))
        stage2_cost += cost
        instr_mapping.update(mapping)

    for b2 in sorted(per_block2):
        if b2 not in mapped_blocks2:
            for n in per_block2[b2]:
                stage2_cost += costs.n_ins(n.kind) + costs.e_ins(affil)

    # Cross-block data edges under the composed mapping.
    paired1 = _cross_edges(data1, g1)
    paired2 = _cross_edges(data2, g2)
    matched2: set[tuple[int, int, str]] = set()
    for (src, dst, rel) in paired1:
        ms, md = instr_mapping.get(src), instr_mapping.get(dst)
        if ms is not None and md is not None and (ms, md, rel) in paired2 \
                and (ms, md, rel) not in matched2:
            matched2.add((ms, md, rel))
        else:
            stage2_cost += costs.e_del(rel)
    for (src, dst, rel) in paired2:
        if (src, dst, rel) not in matched2:
            stage2_cost += costs.e_ins(rel)

    total = costs.w1 * stage1_cost + costs.w2 * stage2_cost
    denom = (costs.w1 * (_delete_all_cost(sk1, costs) + _insert_all_cost(sk2, costs))
             + costs.w2 * (_stage2_denom(per_block1, data1, g1, costs, True)
                           + _stage2_denom(per_block2, data2, g2, costs, False)))
    normalized = 0.0 if denom == 0 else min(1.0, total / denom)
    return HgedResult(stage1_cost, stage2_cost, total, normalized,
                      block_mapping, exact)


def _internal_edges(data_edges, instrs: list[StageNode]) -> list[StageEdge]:
    ids = {n.nid for n in instrs}
    return [StageEdge(e.src, e.dst, e.relation.value) for e in data_edges
            if e.src in ids and e.dst in ids]


def _cross_edges(data_edges, g: HetGraph) -> set[tuple[int, int, str]]:
    block_of: dict[int, int] = {}
    for e in g.edges:
        if e.relation is Relation.AFFIL_INSTR_BLOCK:
            block_of[e.src] = e.dst
    out = set()
    for e in data_edges:
        if block_of.get(e.src) != block_of.get(e.dst):
            out.add((e.src, e.dst, e.relation.value))
    return out


def _stage2_denom(per_block, data_edges, g: HetGraph, costs: EditCostModel,
                  deleting: bool) -> float:
    affil = Relation.AFFIL_INSTR_BLOCK.value
    c = 0.0
    for instrs in per_block.values():
        for n in instrs:
            if deleting:
                c += costs.n_del(n.kind) + costs.e_del(affil)
            else:
                c += costs.n_ins(n.kind) + costs.e_ins(affil)
    for e in data_edges:
        c += costs.e_del(e.relation.value) if deleting else costs.e_ins(e.relation.value)
    return c
