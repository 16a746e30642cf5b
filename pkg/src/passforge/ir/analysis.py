"""CFG utilities shared by the verifier, transform passes, and the QoR model.

Everything here is derived from the block structure alone: predecessor and
successor maps, dominators (iterative Cooper-Harvey-Kennedy), and the natural
loop forest.  Loop identities come from the ``loop(id, ...)`` annotations on
header blocks; membership and nesting are always recomputed from back edges so
they stay correct as passes rewrite the CFG.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .types import IrBlock, IrFunction, LoopInfo


def successor_map(fn: IrFunction) -> dict[str, list[str]]:
    return {b.label: b.successors() for b in fn.blocks}


def predecessor_map(fn: IrFunction) -> dict[str, list[str]]:
    preds: dict[str, list[str]] = {b.label: [] for b in fn.blocks}
    for b in fn.blocks:
        for s in b.successors():
            if s in preds:
                preds[s].append(b.label)
    return preds


def reachable_blocks(fn: IrFunction) -> set[str]:
    succs = successor_map(fn)
    seen = {fn.entry.label}
    stack = [fn.entry.label]
    while stack:
        for s in succs.get(stack.pop(), []):
            if s in succs and s not in seen:
                seen.add(s)
                stack.append(s)
    return seen


def reverse_postorder(fn: IrFunction) -> list[str]:
    succs = successor_map(fn)
    seen: set[str] = set()
    order: list[str] = []

    def visit(label: str):
        stack = [(label, iter(succs.get(label, [])))]
        seen.add(label)
        while stack:
            lab, it = stack[-1]
            advanced = False
            for s in it:
                if s in succs and s not in seen:
                    seen.add(s)
                    stack.append((s, iter(succs.get(s, []))))
                    advanced = True
                    break
            if not advanced:
                order.append(lab)
                stack.pop()

    visit(fn.entry.label)
    order.reverse()
    return order


def dominators(fn: IrFunction) -> dict[str, str | None]:
    """Immediate-dominator map over reachable blocks; entry maps to None."""
    rpo = reverse_postorder(fn)
    index = {lab: i for i, lab in enumerate(rpo)}
    preds = predecessor_map(fn)
    entry = fn.entry.label
    idom: dict[str, str | None] = {entry: entry}

    def intersect(a: str, b: str) -> str:
        while a != b:
            while index[a] > index[b]:
                a = idom[a]  # type: ignore[assignment]
            while index[b] > index[a]:
                b = idom[b]  # type: ignore[assignment]
        return a

    changed = True
    while changed:
        changed = False
        for lab in rpo:
            if lab == entry:
                continue
            new_idom = None
            for p in preds[lab]:
                if p in idom:
                    new_idom = p if new_idom is None else intersect(p, new_idom)
            if new_idom is not None and idom.get(lab) != new_idom:
                idom[lab] = new_idom
                changed = True
    out: dict[str, str | None] = {}
    for lab in rpo:
        out[lab] = None if lab == entry else idom.get(lab)
    return out


class DomTree:
    """Dominator tree with O(depth) dominance queries."""

    def __init__(self, fn: IrFunction):
        self.idom = dominators(fn)
        self.depth: dict[str, int] = {}
        for lab in self.idom:
            self.depth[lab] = self._depth(lab)

    def _depth(self, lab: str) -> int:
        if lab in self.depth:
            return self.depth[lab]
        d = 0
        cur = lab
        chain = []
        while self.idom.get(cur) is not None and cur not in self.depth:
            chain.append(cur)
            cur = self.idom[cur]  # type: ignore[assignment]
        d = self.depth.get(cur, 0)
        for c in reversed(chain):
            d += 1
            self.depth[c] = d
        return self.depth.get(lab, d)

    def dominates(self, a: str, b: str) -> bool:
        """True when block a dominates block b (reflexive)."""
        if a not in self.depth or b not in self.depth:
            return False
        while self.depth[b] > self.depth[a]:
            b = self.idom[b]  # type: ignore[assignment]
        return a == b


@dataclass
class Loop:
    loop_id: int
    header: str
    blocks: set[str] = field(default_factory=set)
    latches: list[str] = field(default_factory=list)
    depth: int = 1
    parent: "Loop | None" = None
    children: list["Loop"] = field(default_factory=list)

    def exits(self, fn: IrFunction) -> list[tuple[str, str]]:
        """(from_block, to_block) edges leaving the loop."""
        out = []
        bmap = fn.block_map()
        for lab in sorted(self.blocks):
            for s in bmap[lab].successors():
                if s not in self.blocks:
                    out.append((lab, s))
        return out


@dataclass
class LoopForest:
    loops: list[Loop]
    by_header: dict[str, Loop]
    innermost: dict[str, Loop | None]

    def by_id(self, loop_id: int) -> Loop | None:
        for l in self.loops:
            if l.loop_id == loop_id:
                return l
        return None

    def block_depth(self, label: str) -> int:
        l = self.innermost.get(label)
        return 0 if l is None else l.depth


def natural_loops(fn: IrFunction) -> LoopForest:
    """Natural loops from back edges (edge u->h where h dominates u).

    Loop ids are taken from header annotations when present; unannotated
    headers get ids above any annotated one (deterministically, in RPO).
    """
    dom = DomTree(fn)
    preds = predecessor_map(fn)
    reach = reachable_blocks(fn)
    rpo = reverse_postorder(fn)
    bmap = fn.block_map()

    back_edges: dict[str, list[str]] = {}
    for b in fn.blocks:
        if b.label not in reach:
            continue
        for s in b.successors():
            if s in reach and dom.dominates(s, b.label):
                back_edges.setdefault(s, []).append(b.label)

    used_ids = set()
    for lab, latches in back_edges.items():
        blk = bmap[lab]
        if blk.loop_info is not None and blk.loop_info.is_header:
            used_ids.add(blk.loop_info.loop_id)
    next_id = max(used_ids, default=0) + 1

    loops: list[Loop] = []
    for header in rpo:
        if header not in back_edges:
            continue
        blk = bmap[header]
        if blk.loop_info is not None and blk.loop_info.is_header:
            lid = blk.loop_info.loop_id
        else:
            lid = next_id
            next_id += 1
        loop = Loop(lid, header, {header}, sorted(back_edges[header]))
        worklist = list(loop.latches)
        while worklist:
            lab = worklist.pop()
            if lab in loop.blocks:
                continue
            loop.blocks.add(lab)
            for p in preds[lab]:
                if p in reach and p != header:
                    worklist.append(p)
                elif p == header:
                    pass
        loops.append(loop)

    # Nesting: parent is the smallest strictly-containing loop.
    for l in loops:
        candidates = [o for o in loops
                      if o is not l and l.header in o.blocks
                      and l.blocks <= o.blocks]
        if candidates:
            l.parent = min(candidates, key=lambda o: len(o.blocks))
    for l in loops:
        if l.parent is not None:
            l.parent.children.append(l)
    for l in loops:
        d = 1
        p = l.parent
        while p is not None:
            d += 1
            p = p.parent
        l.depth = d

    innermost: dict[str, Loop | None] = {b.label: None for b in fn.blocks}
    for l in sorted(loops, key=lambda l: l.depth):
        for lab in l.blocks:
            innermost[lab] = l

    return LoopForest(loops, {l.header: l for l in loops}, innermost)


def preheader_of(fn: IrFunction, loop: Loop) -> str | None:
    """The unique out-of-loop predecessor of the header, if there is one."""
    preds = predecessor_map(fn)
    outside = [p for p in preds[loop.header] if p not in loop.blocks]
    if len(outside) == 1:
        return outside[0]
    return None


def refresh_loop_annotations(fn: IrFunction) -> None:
    """Recompute block loop annotations from the CFG.

    Header ids are preserved; depths and non-header memberships follow the
    derived forest.  Blocks no longer inside any loop lose their annotation.
    """
    forest = natural_loops(fn)
    for b in fn.blocks:
        l = forest.innermost.get(b.label)
        if l is None:
            b.loop_info = None
        else:
            b.loop_info = LoopInfo(l.loop_id, l.depth, b.label == l.header)
