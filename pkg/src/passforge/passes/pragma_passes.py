"""Pragma-anchored passes: unroll expansion and function inlining.

These hold a fixed position in the compilation pipeline (they are applied
once, up front) and are excluded from the search agent's action space;
pipeline and array_partition pragmas stay as metadata for the estimator.
"""
from __future__ import annotations

from ..ir import (
    Const, IrBlock, IrFunction, IrInstruction, IrModule, LabelRef, Loop,
    Opcode, PragmaKind, ValueRef, natural_loops, predecessor_map,
    refresh_loop_annotations,
)
from ..ir.types import LoopInfo, Operand, VOID
from .loop_passes import (
    UnrollShape, _insert_preheader, _peel_iterations, unrollable_shape,
)
from .rewrite import (
    FreshNames, clone_with_map, collapse_trivial_phis, rename_phi_pred,
    replace_all_uses, retarget_terminator, subst_operand,
)

UNROLL_INSTRUCTION_BUDGET = 50_000


class PragmaError(Exception):
    pass


def _run_body_clone(target: IrBlock, source_insts: list[IrInstruction],
                    latch_incoming: dict[str, Operand],
                    state: dict[str, Operand],
                    fresh: FreshNames) -> dict[str, Operand]:
    """Append one body copy to ``target`` under the phi assignment ``state``;
    returns the state after the copy (the latch-incoming values, remapped)."""
    mapping = dict(state)
    for ins in source_insts:
        new, res = clone_with_map(ins, mapping, fresh)
        if new is not None:
            target.instructions.append(new)
        if ins.result is not None:
            mapping[ins.result] = res
    return {pid: subst_operand(v, mapping) for pid, v in latch_incoming.items()}


def _apply_unroll(m: IrModule, fn: IrFunction, shape: UnrollShape,
                  factor: int) -> None:
    header, body, pre = shape.header, shape.body, shape.pre
    trip = shape.trip
    fresh = FreshNames(fn)
    body_size = len(body.instructions)
    projected = body_size * (trip if factor >= trip else factor)
    if projected > UNROLL_INSTRUCTION_BUDGET:
        raise PragmaError(
            f"unrolling loop {shape.loop.loop_id} would create ~{projected} "
            f"instructions (budget {UNROLL_INSTRUCTION_BUDGET})")

    if factor >= trip:
        _full_unroll(m, fn, shape, fresh)
        return
    if trip % factor == 0:
        _clean_unroll(fn, shape, factor, fresh)
        return
    _checked_unroll(fn, shape, factor, fresh)


def _full_unroll(m: IrModule, fn: IrFunction, shape: UnrollShape,
                 fresh: FreshNames) -> None:
    """Replicate every iteration straight-line and delete the loop."""
    header, body, pre = shape.header, shape.body, shape.pre
    phis = header.phis()
    _peel_iterations(fn, shape, shape.trip, fresh)
    final: dict[str, Operand] = {}
    for phi in phis:
        inc = {lab: v for v, lab in phi.phi_incoming()}
        final[phi.result] = inc[pre.label]
    retarget_terminator(pre, header.label, shape.exit_label)
    exit_blk = fn.block_map()[shape.exit_label]
    rename_phi_pred(exit_blk, header.label, pre.label)
    fn.blocks = [b for b in fn.blocks
                 if b.label not in (header.label, body.label)]
    for phi_id, value in final.items():
        replace_all_uses(fn, phi_id, value)
    collapse_trivial_phis(fn)


def _clean_unroll(fn: IrFunction, shape: UnrollShape, factor: int,
                  fresh: FreshNames) -> None:
    """Divisible trip: body copies merge into the single body block."""
    header, body = shape.header, shape.body
    phis = header.phis()
    source = list(body.instructions)
    latch_incoming: dict[str, Operand] = {}
    for phi in phis:
        inc = {lab: v for v, lab in phi.phi_incoming()}
        latch_incoming[phi.result] = inc[body.label]
    state = dict(latch_incoming)
    for _ in range(factor - 1):
        state = _run_body_clone(body, source, latch_incoming, state, fresh)
    for phi in phis:
        ops = []
        for v, lab in phi.phi_incoming():
            if lab == body.label:
                v = state[phi.result]
            ops.extend([v, LabelRef(lab)])
        phi.operands = ops


def _checked_unroll(fn: IrFunction, shape: UnrollShape, factor: int,
                    fresh: FreshNames) -> None:
    """Non-divisible trip: replicate with an exit test between copies, the
    classic fragmented lowering with a termination-check block per replica."""
    header, body, pre = shape.header, shape.body, shape.pre
    phis = header.phis()
    exit_blk = fn.block_map()[shape.exit_label]
    preds = predecessor_map(fn)
    if exit_blk.phis() or preds[shape.exit_label] != [header.label]:
        raise PragmaError(
            f"loop {shape.loop.loop_id}: unsupported exit shape for a "
            f"remainder-checked unroll")

    # Values of header phis observable at each exit edge, for outside uses.
    outside_users: list[str] = []
    for phi in phis:
        for b in fn.blocks:
            if b.label in shape.loop.blocks:
                continue
            for ins in b.all_instructions():
                if phi.result in ins.value_uses():
                    outside_users.append(phi.result)
                    break
    outside_users = sorted(set(outside_users))

    source = list(body.instructions)
    latch_incoming: dict[str, Operand] = {
        phi.result: {lab: v for v, lab in phi.phi_incoming()}[body.label]
        for phi in phis}
    state = dict(latch_incoming)
    exit_states: list[tuple[str, dict[str, Operand]]] = []
    blocks: list[IrBlock] = [body]
    current = body
    for k in range(1, factor):
        exit_states.append((current.label, dict(state)))
        # Termination check between replica k-1 and replica k.
        chk_cmp, folded = clone_with_map(shape.cmp, state, fresh)
        nxt = IrBlock(fresh.label(f"{body.label}.r{k}"))
        cond: Operand
        if chk_cmp is None:
            cond = folded
        else:
            current.instructions.append(chk_cmp)
            cond = ValueRef(chk_cmp.result)
        t, f = ((nxt.label, shape.exit_label) if shape.body_first
                else (shape.exit_label, nxt.label))
        current.terminator = IrInstruction(
            None, Opcode.CONDBR, [cond, LabelRef(t), LabelRef(f)], VOID)
        state = _run_body_clone(nxt, source, latch_incoming, state, fresh)
        nxt.terminator = IrInstruction(None, Opcode.BR,
                                       [LabelRef(header.label)], VOID)
        if body.loop_info is not None:
            nxt.loop_info = LoopInfo(body.loop_info.loop_id,
                                     body.loop_info.depth, False)
        fn.blocks.insert(fn.blocks.index(current) + 1, nxt)
        blocks.append(nxt)
        current = nxt

    last = blocks[-1]
    for phi in phis:
        ops = []
        for v, lab in phi.phi_incoming():
            if lab == body.label:
                v = state[phi.result]
                lab = last.label
            ops.extend([v, LabelRef(lab)])
        phi.operands = ops

    # Exit phis merge per-edge values for anything used past the loop.
    for phi_id in outside_users:
        entries: list = [ValueRef(phi_id), LabelRef(header.label)]
        for blk_label, st in exit_states:
            entries.extend([st[phi_id], LabelRef(blk_label)])
        out_phi = IrInstruction(fresh.value(phi_id), Opcode.PHI, entries,
                                next(p for p in phis
                                     if p.result == phi_id).ir_type)
        for b in fn.blocks:
            if b.label in shape.loop.blocks or b.label in {x.label for x in blocks}:
                continue
            if b is exit_blk:
                continue
            for ins in b.all_instructions():
                for i, op in enumerate(ins.operands):
                    if isinstance(op, ValueRef) and op.id == phi_id:
                        ins.operands[i] = ValueRef(out_phi.result)
        for ins in exit_blk.all_instructions():
            if ins.opcode is Opcode.PHI:
                continue
            for i, op in enumerate(ins.operands):
                if isinstance(op, ValueRef) and op.id == phi_id:
                    ins.operands[i] = ValueRef(out_phi.result)
        exit_blk.instructions.insert(0, out_phi)


def apply_unroll_pragmas(m: IrModule) -> None:
    for fn in m.functions:
        for pragma in [p for p in fn.pragmas if p.kind is PragmaKind.UNROLL]:
            forest = natural_loops(fn)
            loop = forest.by_id(pragma.target)  # type: ignore[arg-type]
            if loop is None:
                raise PragmaError(f"unroll target loop {pragma.target} not found")
            if unrollable_shape(fn, loop, require_exact=False) is None \
                    and not loop.children and len(loop.blocks) == 2:
                _insert_preheader(fn, loop, FreshNames(fn))
            shape = unrollable_shape(fn, loop, require_exact=False)
            if shape is None:
                raise PragmaError(
                    f"loop {pragma.target} in @{fn.name} is not in canonical "
                    f"countable form; cannot expand its unroll pragma")
            _apply_unroll(m, fn, shape, pragma.factor)  # type: ignore[arg-type]
            fn.pragmas.remove(pragma)
        refresh_loop_annotations(fn)


# ---------------------------------------------------------------------------
# Inlining
# ---------------------------------------------------------------------------

def _inline_one_call(m: IrModule, caller: IrFunction, block: IrBlock,
                     call: IrInstruction) -> None:
    callee = m.function(call.callee)
    fresh = FreshNames(caller)
    arg_map: dict[str, Operand] = {}
    for (pid, _ty), arg in zip(callee.params, call.operands):
        arg_map[pid] = arg

    # Split the call block: instructions after the call move to a new block.
    at = block.instructions.index(call)
    cont = IrBlock(fresh.label(f"{block.label}.split"))
    cont.instructions = block.instructions[at + 1:]
    cont.terminator = block.terminator
    cont.loop_info = (LoopInfo(block.loop_info.loop_id, block.loop_info.depth,
                               False) if block.loop_info is not None else None)
    block.instructions = block.instructions[:at]
    for succ in cont.successors():
        rename_phi_pred(_must(caller, succ), block.label, cont.label)

    # Clone the callee body.
    label_map: dict[str, str] = {}
    value_map: dict[str, Operand] = dict(arg_map)
    loop_id_map: dict[int, int] = {}
    existing_ids = set()
    for f in (caller,):
        for b in f.blocks:
            if b.loop_info is not None:
                existing_ids.add(b.loop_info.loop_id)
    next_loop_id = max(existing_ids, default=0) + 1

    for b in callee.blocks:
        label_map[b.label] = fresh.label(f"{callee.name}.{b.label}")
        if b.loop_info is not None and b.loop_info.loop_id not in loop_id_map:
            loop_id_map[b.loop_info.loop_id] = next_loop_id
            next_loop_id += 1

    new_blocks: list[IrBlock] = []
    ret_edges: list[tuple[str, Operand | None]] = []
    for b in callee.blocks:
        nb = IrBlock(label_map[b.label])
        if b.loop_info is not None:
            nb.loop_info = LoopInfo(loop_id_map[b.loop_info.loop_id],
                                    b.loop_info.depth, b.loop_info.is_header)
        for ins in b.all_instructions():
            mapped_ops: list[Operand] = []
            for op in ins.operands:
                if isinstance(op, LabelRef):
                    mapped_ops.append(LabelRef(label_map[op.label]))
                else:
                    mapped_ops.append(subst_operand(op, value_map))
            new = IrInstruction(None, ins.opcode, mapped_ops, ins.ir_type,
                                ins.pred, ins.callee)
            if ins.result is not None:
                new.result = fresh.value(f"{ins.result}.i")
                value_map[ins.result] = ValueRef(new.result)
            if new.opcode is Opcode.RET:
                rv = new.operands[0] if new.operands else None
                ret_edges.append((nb.label, rv))
                nb.terminator = IrInstruction(None, Opcode.BR,
                                              [LabelRef(cont.label)], VOID)
            elif new.is_terminator:
                nb.terminator = new
            else:
                nb.instructions.append(new)
        new_blocks.append(nb)

    block.terminator = IrInstruction(
        None, Opcode.BR, [LabelRef(label_map[callee.entry.label])], VOID)

    idx = caller.blocks.index(block)
    caller.blocks[idx + 1:idx + 1] = new_blocks + [cont]

    # Wire up the return value (after the new blocks join the function so
    # every use is visible to the rewrite).
    if call.result is not None:
        if len(ret_edges) == 1:
            rv = ret_edges[0][1]
            assert rv is not None
            replace_all_uses(caller, call.result, rv)
        else:
            phi_ops: list = []
            for lab, rv in ret_edges:
                assert rv is not None
                phi_ops.extend([rv, LabelRef(lab)])
            ret_phi = IrInstruction(fresh.value(call.result), Opcode.PHI,
                                    phi_ops, call.ir_type)
            cont.instructions.insert(0, ret_phi)
            replace_all_uses(caller, call.result, ValueRef(ret_phi.result))

    # Callee loop pragmas follow their loops into the caller.
    for p in callee.pragmas:
        if p.kind in (PragmaKind.UNROLL, PragmaKind.PIPELINE) \
                and p.target in loop_id_map:
            np = p.clone()
            np.target = loop_id_map[p.target]  # type: ignore[assignment]
            caller.pragmas.append(np)


def _must(fn: IrFunction, label: str) -> IrBlock:
    for b in fn.blocks:
        if b.label == label:
            return b
    raise KeyError(label)


def apply_inline_pragmas(m: IrModule) -> None:
    targets = []
    for fn in m.functions:
        for p in list(fn.pragmas):
            if p.kind is PragmaKind.INLINE:
                targets.append(p.target)
                fn.pragmas.remove(p)
    for target in targets:
        for caller in m.functions:
            if caller.name == target:
                continue
            progress = True
            while progress:
                progress = False
                for b in caller.blocks:
                    for ins in b.instructions:
                        if ins.opcode is Opcode.CALL and ins.callee == target:
                            _inline_one_call(m, caller, b, ins)
                            progress = True
                            break
                    if progress:
                        break
        for fn in m.functions:
            refresh_loop_annotations(fn)
    # Fully-inlined callees with no remaining callers are dropped.
    for target in set(targets):
        still_called = any(
            ins.opcode is Opcode.CALL and ins.callee == target
            for f in m.functions for b in f.blocks
            for ins in b.all_instructions())
        fn = m.function(target)
        if not still_called and not fn.is_top:
            m.functions.remove(fn)


def apply_pragma_passes(m: IrModule) -> IrModule:
    """Expand inline and unroll pragmas at their fixed pipeline position;
    pipeline and array_partition pragmas remain as estimator metadata."""
    out = m.clone()
    apply_inline_pragmas(out)
    apply_unroll_pragmas(out)
    return out
