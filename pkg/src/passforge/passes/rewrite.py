"""Shared SSA rewriting helpers used by the transform passes."""
from __future__ import annotations

from ..ir import (
    Const, GlobalRef, IrBlock, IrFunction, IrInstruction, IrModule, LabelRef,
    Opcode, ValueRef, fold_constant,
)
from ..ir.types import Operand

_PURE_FOLDABLE = {
    Opcode.ADD, Opcode.SUB, Opcode.MUL, Opcode.SDIV, Opcode.SREM, Opcode.AND,
    Opcode.OR, Opcode.XOR, Opcode.SHL, Opcode.ASHR, Opcode.ICMP, Opcode.ZEXT,
    Opcode.SEXT, Opcode.TRUNC,
}

#: Pure, non-trapping opcodes: safe to clone, hoist, or skip on a path.
PURE_OPS = {
    Opcode.ADD, Opcode.SUB, Opcode.MUL, Opcode.AND, Opcode.OR, Opcode.XOR,
    Opcode.SHL, Opcode.ASHR, Opcode.ICMP, Opcode.SELECT, Opcode.ZEXT,
    Opcode.SEXT, Opcode.TRUNC, Opcode.GETELEMENTPTR,
}

#: Pure including the trapping divisions (removable when dead, not hoistable).
PURE_OR_DIV = PURE_OPS | {Opcode.SDIV, Opcode.SREM}


class FreshNames:
    """Fresh SSA value ids and block labels for one function."""

    def __init__(self, fn: IrFunction):
        self.taken = set(fn.param_ids())
        self.labels = {b.label for b in fn.blocks}
        for b in fn.blocks:
            for ins in b.all_instructions():
                if ins.result is not None:
                    self.taken.add(ins.result)
        self._counter = 0

    def value(self, base: str) -> str:
        base = base.split(".u")[0]
        while True:
            cand = f"{base}.u{self._counter}"
            self._counter += 1
            if cand not in self.taken:
                self.taken.add(cand)
                return cand

    def label(self, base: str) -> str:
        if base not in self.labels:
            self.labels.add(base)
            return base
        i = 0
        while True:
            cand = f"{base}.{i}"
            i += 1
            if cand not in self.labels:
                self.labels.add(cand)
                return cand


def subst_operand(op: Operand, mapping: dict[str, Operand]) -> Operand:
    if isinstance(op, ValueRef) and op.id in mapping:
        return mapping[op.id]
    return op


def substitute(ins: IrInstruction, mapping: dict[str, Operand]) -> None:
    ins.operands = [subst_operand(op, mapping) for op in ins.operands]


def replace_all_uses(fn: IrFunction, old_id: str, new_op: Operand) -> int:
    """Rewrite every use of %old_id to new_op; returns the number of uses."""
    n = 0
    for b in fn.blocks:
        for ins in b.all_instructions():
            for i, op in enumerate(ins.operands):
                if isinstance(op, ValueRef) and op.id == old_id:
                    ins.operands[i] = new_op
                    n += 1
    return n


def uses_of(fn: IrFunction) -> dict[str, list[IrInstruction]]:
    out: dict[str, list[IrInstruction]] = {}
    for b in fn.blocks:
        for ins in b.all_instructions():
            for vid in ins.value_uses():
                out.setdefault(vid, []).append(ins)
    return out


def clone_with_map(ins: IrInstruction, mapping: dict[str, Operand],
                   fresh: FreshNames) -> tuple[IrInstruction | None, Operand | None]:
    """Clone an instruction applying ``mapping`` to its operands.

    Constant-folds pure operations whose operands become constants; in that
    case no instruction is emitted and the folded operand is returned instead.
    Returns (new_instruction_or_None, result_operand_or_None).
    """
    ops = [subst_operand(op, mapping) for op in ins.operands]
    if (ins.opcode in _PURE_FOLDABLE
            and all(isinstance(o, Const) for o in ops)):
        folded = fold_constant(ins.opcode, [o.value for o in ops], ins.pred)
        if folded is not None:
            return None, Const(folded, ins.ir_type)
    if ins.opcode is Opcode.SELECT and isinstance(ops[0], Const):
        return None, ops[1] if ops[0].value else ops[2]
    new = IrInstruction(None, ins.opcode, ops, ins.ir_type, ins.pred, ins.callee)
    if ins.result is not None:
        new.result = fresh.value(ins.result)
    return new, (ValueRef(new.result) if new.result is not None else None)


def remove_phi_entries(block: IrBlock, pred_label: str) -> None:
    for ins in block.phis():
        ops = []
        for v, lab in ins.phi_incoming():
            if lab != pred_label:
                ops.extend([v, LabelRef(lab)])
        ins.operands = ops


def rename_phi_pred(block: IrBlock, old_label: str, new_label: str) -> None:
    for ins in block.phis():
        for i in range(1, len(ins.operands), 2):
            lab = ins.operands[i]
            if isinstance(lab, LabelRef) and lab.label == old_label:
                ins.operands[i] = LabelRef(new_label)


def retarget_terminator(block: IrBlock, old_label: str, new_label: str,
                        only_slot: int | None = None) -> int:
    """Point branch targets at a new label; returns number of edges changed."""
    term = block.terminator
    assert term is not None
    n = 0
    for i, op in enumerate(term.operands):
        if isinstance(op, LabelRef) and op.label == old_label:
            if only_slot is not None and i != only_slot:
                continue
            term.operands[i] = LabelRef(new_label)
            n += 1
    return n


def drop_unreachable_blocks(fn: IrFunction) -> int:
    """Remove blocks unreachable from entry, fixing phis in survivors."""
    from ..ir.analysis import reachable_blocks
    reach = reachable_blocks(fn)
    dead = [b for b in fn.blocks if b.label not in reach]
    if not dead:
        return 0
    dead_labels = {b.label for b in dead}
    fn.blocks = [b for b in fn.blocks if b.label in reach]
    for b in fn.blocks:
        for lab in dead_labels:
            remove_phi_entries(b, lab)
    # Phis left with one incoming collapse to that value.
    collapse_trivial_phis(fn)
    return len(dead)


def collapse_trivial_phis(fn: IrFunction) -> int:
    """Replace single-incoming phis (and all-same-value phis) with the value."""
    n = 0
    changed = True
    while changed:
        changed = False
        for b in fn.blocks:
            for ins in list(b.phis()):
                incoming = ins.phi_incoming()
                vals = {str(v) for v, _ in incoming
                        if not (isinstance(v, ValueRef) and v.id == ins.result)}
                if len(incoming) >= 1 and len(vals) == 1:
                    value = next(v for v, _ in incoming
                                 if not (isinstance(v, ValueRef)
                                         and v.id == ins.result))
                    replace_all_uses(fn, ins.result, value)
                    b.instructions.remove(ins)
                    n += 1
                    changed = True
    return n


def erase_dead_pure(fn: IrFunction) -> int:
    """Drop pure instructions with unused results (single sweep to fixpoint)."""
    n = 0
    while True:
        used: set[str] = set()
        for b in fn.blocks:
            for ins in b.all_instructions():
                used.update(ins.value_uses())
        removed = 0
        for b in fn.blocks:
            keep = []
            for ins in b.instructions:
                if (ins.result is not None and ins.result not in used
                        and ins.opcode in PURE_OR_DIV):
                    removed += 1
                else:
                    keep.append(ins)
            b.instructions = keep
        n += removed
        if removed == 0:
            return n


def instruction_count(m: IrModule) -> int:
    return sum(len(b.all_instructions()) for f in m.functions for b in f.blocks)


def block_count(m: IrModule) -> int:
    return sum(len(f.blocks) for f in m.functions)
