"""Structural verifier.

Returns a list of violations (empty means ok) and never raises; passes and the
parser treat a non-empty result as fatal.
"""
from __future__ import annotations

from dataclasses import dataclass

from .analysis import DomTree, natural_loops, predecessor_map, reachable_blocks
from .types import (
    Const, GlobalRef, IrFunction, IrModule, LabelRef, Opcode, PragmaKind,
    ValueRef, OPCODE_CLASS,
)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    where: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.where}: {self.message}"


_ARITY = {
    Opcode.ADD: 2, Opcode.SUB: 2, Opcode.MUL: 2, Opcode.SDIV: 2,
    Opcode.SREM: 2, Opcode.AND: 2, Opcode.OR: 2, Opcode.XOR: 2,
    Opcode.SHL: 2, Opcode.ASHR: 2, Opcode.ICMP: 2, Opcode.SELECT: 3,
    Opcode.LOAD: 1, Opcode.STORE: 2, Opcode.GETELEMENTPTR: 2,
    Opcode.ZEXT: 1, Opcode.SEXT: 1, Opcode.TRUNC: 1,
    Opcode.BR: 1, Opcode.CONDBR: 3,
}


def _check_function(m: IrModule, fn: IrFunction, out: list[Violation]) -> None:
    where = fn.name
    labels = [b.label for b in fn.blocks]
    if len(set(labels)) != len(labels):
        out.append(Violation("dup-label", "duplicate block labels", where))
        return
    if not fn.blocks:
        out.append(Violation("empty-fn", "function has no blocks", where))
        return

    bmap = fn.block_map()

    # Terminators present and phi prefix.
    for b in fn.blocks:
        loc = f"{where}:{b.label}"
        if b.terminator is None:
            out.append(Violation("no-term", "block has no terminator", loc))
            return
        if not b.terminator.is_terminator:
            out.append(Violation("bad-term", "terminator is not br/condbr/ret", loc))
        seen_non_phi = False
        for ins in b.instructions:
            if ins.is_terminator:
                out.append(Violation("term-mid", "terminator before block end", loc))
            if ins.opcode is Opcode.PHI:
                if seen_non_phi:
                    out.append(Violation("phi-order", "phi after non-phi", loc))
            else:
                seen_non_phi = True

    # Branch targets exist.
    for b in fn.blocks:
        for s in b.successors():
            if s not in bmap:
                out.append(Violation("bad-target",
                                     f"branch to unknown block {s!r}",
                                     f"{where}:{b.label}"))
    if any(v.code == "bad-target" for v in out):
        return

    preds = predecessor_map(fn)
    if preds[fn.entry.label]:
        out.append(Violation("entry-preds", "entry block has predecessors", where))
    reach = reachable_blocks(fn)
    for b in fn.blocks:
        if b.label not in reach:
            out.append(Violation("unreachable",
                                 f"block {b.label!r} unreachable from entry", where))
    if any(v.code == "unreachable" for v in out):
        return

    # Definitions: unique; collect def site per value.
    defs: dict[str, tuple[str, int]] = {}
    params = fn.param_ids()
    if len(params) != len(fn.params):
        out.append(Violation("dup-param", "duplicate parameter ids", where))
    for b in fn.blocks:
        for i, ins in enumerate(b.all_instructions()):
            if ins.result is None:
                continue
            if ins.result in defs or ins.result in params:
                out.append(Violation("redef",
                                     f"value %{ins.result} defined twice",
                                     f"{where}:{b.label}"))
            defs[ins.result] = (b.label, i)

    # Operand arity / shape checks.
    gmap = m.global_map()
    fnames = {f.name for f in m.functions}
    for b in fn.blocks:
        loc = f"{where}:{b.label}"
        for ins in b.all_instructions():
            op = ins.opcode
            if op is Opcode.PHI:
                if len(ins.operands) < 2 or len(ins.operands) % 2 != 0:
                    out.append(Violation("phi-shape", "malformed phi operands", loc))
                    continue
                in_labels = [l for _, l in ins.phi_incoming()]
                if sorted(in_labels) != sorted(preds[b.label]):
                    out.append(Violation(
                        "phi-preds",
                        f"phi %{ins.result} incoming {sorted(in_labels)} != "
                        f"predecessors {sorted(preds[b.label])}", loc))
            elif op is Opcode.CALL:
                if ins.callee not in fnames:
                    out.append(Violation("bad-callee",
                                         f"call to unknown function @{ins.callee}", loc))
                else:
                    callee = m.function(ins.callee)
                    if len(ins.operands) != len(callee.params):
                        out.append(Violation("call-arity",
                                             f"call to @{ins.callee} has "
                                             f"{len(ins.operands)} args, expected "
                                             f"{len(callee.params)}", loc))
            elif op is Opcode.RET:
                if len(ins.operands) > 1:
                    out.append(Violation("ret-shape", "ret takes at most one value", loc))
            else:
                if len(ins.operands) != _ARITY[op]:
                    out.append(Violation("arity",
                                         f"{op.value} expects {_ARITY[op]} operands, "
                                         f"got {len(ins.operands)}", loc))
            if op is Opcode.GETELEMENTPTR and ins.operands:
                base = ins.operands[0]
                if isinstance(base, GlobalRef) and base.name not in gmap:
                    out.append(Violation("bad-array",
                                         f"gep of undeclared array @{base.name}", loc))
                if isinstance(base, ValueRef):
                    ty = dict(fn.params).get(base.id)
                    if ty is not None and not ty.is_array:
                        out.append(Violation("bad-array",
                                             f"gep base %{base.id} is not an array", loc))
            assert OPCODE_CLASS[op] is not None

    # SSA dominance.
    dom = DomTree(fn)
    order_in_block: dict[str, dict[str, int]] = {}
    for b in fn.blocks:
        order_in_block[b.label] = {ins.result: i
                                   for i, ins in enumerate(b.all_instructions())
                                   if ins.result is not None}

    def def_dominates_use(vid: str, use_block: str, use_index: int) -> bool:
        if vid in params:
            return True
        if vid not in defs:
            return False
        dblock, dindex = defs[vid]
        if dblock == use_block:
            return dindex < use_index
        return dom.dominates(dblock, use_block)

    for b in fn.blocks:
        loc = f"{where}:{b.label}"
        for i, ins in enumerate(b.all_instructions()):
            if ins.opcode is Opcode.PHI:
                for val, label in ins.phi_incoming():
                    if isinstance(val, ValueRef):
                        vid = val.id
                        if vid not in defs and vid not in params:
                            out.append(Violation("use-before-def",
                                                 f"use of undefined value %{vid}", loc))
                        elif not def_dominates_use(vid, label,
                                                   len(bmap[label].all_instructions())):
                            out.append(Violation("dominance",
                                                 f"phi incoming %{vid} does not dominate "
                                                 f"edge from {label}", loc))
            else:
                for vid in ins.value_uses():
                    if vid not in defs and vid not in params:
                        out.append(Violation("use-before-def",
                                             f"use of undefined value %{vid}", loc))
                    elif not def_dominates_use(vid, b.label, i):
                        out.append(Violation("dominance",
                                             f"use of %{vid} not dominated by its "
                                             f"definition", loc))

    # Loop annotations: annotated headers must be real headers with the right depth.
    forest = natural_loops(fn)
    ids_seen: dict[int, str] = {}
    for l in forest.loops:
        hdr = bmap[l.header]
        if hdr.loop_info is None or not hdr.loop_info.is_header:
            out.append(Violation("loop-header",
                                 f"natural loop header {l.header!r} lacks a header "
                                 f"annotation", where))
        elif hdr.loop_info.loop_id in ids_seen:
            out.append(Violation("loop-id",
                                 f"loop id {hdr.loop_info.loop_id} used by both "
                                 f"{ids_seen[hdr.loop_info.loop_id]!r} and {l.header!r}",
                                 where))
        else:
            ids_seen[hdr.loop_info.loop_id] = l.header
            if hdr.loop_info.depth != l.depth:
                out.append(Violation("loop-depth",
                                     f"header {l.header!r} annotated depth "
                                     f"{hdr.loop_info.depth}, derived {l.depth}", where))
    headers = {l.header for l in forest.loops}
    for b in fn.blocks:
        if b.loop_info is not None and b.loop_info.is_header and b.label not in headers:
            out.append(Violation("loop-header",
                                 f"block {b.label!r} annotated as header but has no "
                                 f"back edge", where))

    # Pragma targets.
    loop_ids = {l.loop_id for l in forest.loops}
    for p in fn.pragmas:
        if p.kind in (PragmaKind.UNROLL, PragmaKind.PIPELINE):
            if p.target not in loop_ids:
                out.append(Violation("pragma-target",
                                     f"{p.kind.value} pragma targets missing loop "
                                     f"{p.target}", where))
        elif p.kind is PragmaKind.ARRAY_PARTITION:
            if p.target not in gmap and not any(
                    ty.is_array and pid == p.target for pid, ty in fn.params):
                out.append(Violation("pragma-target",
                                     f"array_partition targets unknown array "
                                     f"@{p.target}", where))
        elif p.kind is PragmaKind.INLINE:
            if p.target not in fnames:
                out.append(Violation("pragma-target",
                                     f"inline pragma targets unknown function "
                                     f"@{p.target}", where))


def verify_module(m: IrModule) -> list[Violation]:
    out: list[Violation] = []
    names = [f.name for f in m.functions]
    if len(set(names)) != len(names):
        out.append(Violation("dup-fn", "duplicate function names", "module"))
    tops = [f.name for f in m.functions if f.is_top]
    if len(tops) != 1:
        out.append(Violation("top-fn",
                             f"expected exactly one top function, found {tops}",
                             "module"))
    gnames = [g.name for g in m.global_arrays]
    if len(set(gnames)) != len(gnames):
        out.append(Violation("dup-global", "duplicate global array names", "module"))
    for g in m.global_arrays:
        if g.length < 1:
            out.append(Violation("array-len",
                                 f"array @{g.name} has length {g.length}", "module"))
        if g.init is not None and len(g.init) != g.length:
            out.append(Violation("array-init",
                                 f"array @{g.name} initializer length mismatch",
                                 "module"))

    for fn in m.functions:
        _check_function(m, fn, out)

    # Call graph must be acyclic.
    if not any(v.code == "bad-callee" for v in out):
        edges: dict[str, set[str]] = {f.name: set() for f in m.functions}
        for fn in m.functions:
            for b in fn.blocks:
                for ins in b.all_instructions():
                    if ins.opcode is Opcode.CALL and ins.callee in edges:
                        edges[fn.name].add(ins.callee)
        state: dict[str, int] = {}

        def cyclic(n: str) -> bool:
            state[n] = 1
            for s in sorted(edges[n]):
                if state.get(s) == 1:
                    return True
                if state.get(s, 0) == 0 and cyclic(s):
                    return True
            state[n] = 2
            return False

        for f in m.functions:
            if state.get(f.name, 0) == 0 and cyclic(f.name):
                out.append(Violation("call-cycle",
                                     "call graph contains a cycle", "module"))
                break

    return out
