"""Instruction-level passes: instsimplify, instcombine, adce, early_cse,
reassociate, and gvn.

All of them are function-local and work on the mutable module in place; the
pass driver owns cloning, verification, and changed-detection.
"""
from __future__ import annotations

from ..ir import (
    Const, DomTree, IrFunction, IrInstruction, IrModule, Opcode, ValueRef,
    fold_constant,
)
from ..ir.types import GlobalRef, I1, Operand
from .rewrite import (
    FreshNames, PURE_OPS, PURE_OR_DIV, erase_dead_pure, replace_all_uses,
    uses_of,
)

_COMMUTATIVE = {Opcode.ADD, Opcode.MUL, Opcode.AND, Opcode.OR, Opcode.XOR}
_ICMP_SWAP = {"eq": "eq", "ne": "ne", "slt": "sgt", "sgt": "slt",
              "sle": "sge", "sge": "sle"}
_ICMP_SELF = {"eq": 1, "ne": 0, "slt": 0, "sle": 1, "sgt": 0, "sge": 1}


def _as_const(op: Operand) -> int | None:
    return op.value if isinstance(op, Const) else None


def _same_value(a: Operand, b: Operand) -> bool:
    return isinstance(a, ValueRef) and isinstance(b, ValueRef) and a.id == b.id


def simplify_instruction(ins: IrInstruction) -> Operand | None:
    """Value the instruction already has, if it reduces to an existing
    operand or a constant; None when no simplification applies."""
    op = ins.opcode
    a = ins.operands[0] if ins.operands else None
    b = ins.operands[1] if len(ins.operands) > 1 else None
    ca = _as_const(a) if a is not None else None
    cb = _as_const(b) if b is not None else None

    if op in (Opcode.ADD, Opcode.SUB, Opcode.MUL, Opcode.SDIV, Opcode.SREM,
              Opcode.AND, Opcode.OR, Opcode.XOR, Opcode.SHL, Opcode.ASHR,
              Opcode.ICMP, Opcode.ZEXT, Opcode.SEXT, Opcode.TRUNC):
        consts = [_as_const(o) for o in ins.operands]
        if all(c is not None for c in consts):
            folded = fold_constant(op, consts, ins.pred)  # type: ignore[arg-type]
            if folded is not None:
                return Const(folded, ins.ir_type)

    if op is Opcode.ADD:
        if cb == 0:
            return a
        if ca == 0:
            return b
    elif op is Opcode.SUB:
        if cb == 0:
            return a
        if _same_value(a, b):
            return Const(0, ins.ir_type)
    elif op is Opcode.MUL:
        if cb == 1:
            return a
        if ca == 1:
            return b
        if cb == 0 or ca == 0:
            return Const(0, ins.ir_type)
    elif op is Opcode.SDIV:
        if cb == 1:
            return a
    elif op is Opcode.SREM:
        if cb == 1:
            return Const(0, ins.ir_type)
    elif op is Opcode.AND:
        if _same_value(a, b):
            return a
        if cb == 0 or ca == 0:
            return Const(0, ins.ir_type)
        if cb == -1:
            return a
        if ca == -1:
            return b
    elif op is Opcode.OR:
        if _same_value(a, b):
            return a
        if cb == 0:
            return a
        if ca == 0:
            return b
        if cb == -1 or ca == -1:
            return Const(-1, ins.ir_type)
    elif op is Opcode.XOR:
        if _same_value(a, b):
            return Const(0, ins.ir_type)
        if cb == 0:
            return a
        if ca == 0:
            return b
    elif op in (Opcode.SHL, Opcode.ASHR):
        if cb == 0:
            return a
        if ca == 0:
            return Const(0, ins.ir_type)
    elif op is Opcode.ICMP:
        if _same_value(a, b):
            return Const(_ICMP_SELF[ins.pred], I1)  # type: ignore[index]
    elif op is Opcode.SELECT:
        c, t, f = ins.operands
        cc = _as_const(c)
        if cc is not None:
            return t if cc else f
        if _same_value(t, f) or str(t) == str(f):
            return t
    elif op is Opcode.PHI:
        incoming = ins.phi_incoming()
        distinct = {str(v) for v, _ in incoming
                    if not (isinstance(v, ValueRef) and v.id == ins.result)}
        if len(distinct) == 1:
            return next(v for v, _ in incoming
                        if not (isinstance(v, ValueRef) and v.id == ins.result))
    return None


def run_instsimplify(m: IrModule) -> None:
    for fn in m.functions:
        changed = True
        while changed:
            changed = False
            for b in fn.blocks:
                for ins in list(b.instructions):
                    if ins.result is None:
                        continue
                    repl = simplify_instruction(ins)
                    if repl is not None:
                        replace_all_uses(fn, ins.result, repl)
                        b.instructions.remove(ins)
                        changed = True


def _power_of_two(v: int) -> int | None:
    if v > 1 and (v & (v - 1)) == 0:
        return v.bit_length() - 1
    return None


def run_instcombine(m: IrModule) -> None:
    """instsimplify plus rewrites that may create new (cheaper) instructions."""
    for fn in m.functions:
        fresh = FreshNames(fn)
        changed = True
        while changed:
            changed = False
            for b in fn.blocks:
                for idx, ins in enumerate(list(b.instructions)):
                    if ins.result is None:
                        continue
                    repl = simplify_instruction(ins)
                    if repl is not None:
                        replace_all_uses(fn, ins.result, repl)
                        b.instructions.remove(ins)
                        changed = True
                        continue
                    op = ins.opcode
                    a = ins.operands[0] if ins.operands else None
                    bop = ins.operands[1] if len(ins.operands) > 1 else None
                    # Canonicalize constants to the right of commutative ops.
                    if (op in _COMMUTATIVE and isinstance(a, Const)
                            and not isinstance(bop, Const)):
                        ins.operands = [bop, a]
                        changed = True
                        continue
                    if (op is Opcode.ICMP and isinstance(a, Const)
                            and not isinstance(bop, Const)):
                        ins.operands = [bop, a]
                        ins.pred = _ICMP_SWAP[ins.pred]  # type: ignore[index]
                        changed = True
                        continue
                    # sub x, C -> add x, -C
                    if (op is Opcode.SUB and isinstance(bop, Const)
                            and bop.value != 0):
                        ins.opcode = Opcode.ADD
                        ins.operands = [a, Const(-bop.value, ins.ir_type)]
                        changed = True
                        continue
                    # mul x, 2^k -> shl x, k
                    if op is Opcode.MUL and isinstance(bop, Const):
                        k = _power_of_two(bop.value)
                        if k is not None:
                            ins.opcode = Opcode.SHL
                            ins.operands = [a, Const(k, ins.ir_type)]
                            changed = True
                            continue
                    # add x, x -> shl x, 1
                    if op is Opcode.ADD and _same_value(a, bop):
                        ins.opcode = Opcode.SHL
                        ins.operands = [a, Const(1, ins.ir_type)]
                        changed = True
                        continue
                    # add (add x, C1), C2 -> add x, C1+C2  (single-use chain)
                    if (op is Opcode.ADD and isinstance(bop, Const)
                            and isinstance(a, ValueRef)):
                        src = fn.defined_values().get(a.id)
                        if (src is not None and src.opcode is Opcode.ADD
                                and isinstance(src.operands[1], Const)):
                            ins.operands = [src.operands[0],
                                            Const(src.operands[1].value + bop.value,
                                                  ins.ir_type)]
                            changed = True
                            continue
                    # icmp of select-of-two-constants folds to the flag.
                    if (op is Opcode.ICMP and isinstance(a, ValueRef)
                            and isinstance(bop, Const)
                            and ins.pred in ("eq", "ne")):
                        src = fn.defined_values().get(a.id)
                        if (src is not None and src.opcode is Opcode.SELECT
                                and isinstance(src.operands[1], Const)
                                and isinstance(src.operands[2], Const)):
                            tv, fv = src.operands[1].value, src.operands[2].value
                            tm = fold_constant(Opcode.ICMP, [tv, bop.value], ins.pred)
                            fm = fold_constant(Opcode.ICMP, [fv, bop.value], ins.pred)
                            cond = src.operands[0]
                            if tm == 1 and fm == 0:
                                replace_all_uses(fn, ins.result, cond)
                                b.instructions.remove(ins)
                                changed = True
                                continue
                            if tm == 0 and fm == 1:
                                ins.opcode = Opcode.XOR
                                ins.pred = None
                                ins.ir_type = I1
                                ins.operands = [cond, Const(1, I1)]
                                changed = True
                                continue
                # condbr (xor c, 1), T, F -> condbr c, F, T
                term = b.terminator
                if term is not None and term.opcode is Opcode.CONDBR:
                    c = term.operands[0]
                    if isinstance(c, ValueRef):
                        src = fn.defined_values().get(c.id)
                        if (src is not None and src.opcode is Opcode.XOR
                                and isinstance(src.operands[1], Const)
                                and src.operands[1].value == 1):
                            term.operands = [src.operands[0],
                                             term.operands[2], term.operands[1]]
                            changed = True
        erase_dead_pure(fn)


def run_adce(m: IrModule) -> None:
    """Liveness from stores, calls, and terminators; everything else dies.

    Dead loads and divisions are removed too: the transformed program may trap
    strictly less often, never more (trap refinement).
    """
    for fn in m.functions:
        defs = fn.defined_values()
        live: set[str] = set()
        work: list[str] = []

        def mark(ins: IrInstruction):
            for vid in ins.value_uses():
                if vid not in live and vid in defs:
                    live.add(vid)
                    work.append(vid)

        for b in fn.blocks:
            for ins in b.all_instructions():
                if (ins.is_terminator or ins.opcode is Opcode.STORE
                        or ins.opcode is Opcode.CALL):
                    mark(ins)
        while work:
            vid = work.pop()
            mark(defs[vid])

        for b in fn.blocks:
            b.instructions = [
                ins for ins in b.instructions
                if ins.opcode in (Opcode.STORE, Opcode.CALL)
                or (ins.result is not None and ins.result in live)
            ]


def _expr_key(ins: IrInstruction, canon: dict[str, str],
              commutative_sort: bool) -> tuple | None:
    """Hashable key for pure instructions; None for non-CSE-able ones."""
    if ins.opcode not in PURE_OR_DIV:
        return None

    def rep(op: Operand) -> str:
        if isinstance(op, ValueRef):
            return "%" + canon.get(op.id, op.id)
        return str(op)

    ops = [rep(o) for o in ins.operands]
    pred = ins.pred
    if commutative_sort:
        if ins.opcode in _COMMUTATIVE:
            ops = sorted(ops)
        elif ins.opcode is Opcode.ICMP and pred in ("eq", "ne"):
            ops = sorted(ops)
    return (ins.opcode.value, pred, str(ins.ir_type), *ops)


def _scoped_value_numbering(fn: IrFunction, commutative_sort: bool) -> None:
    """Dominator-scoped redundancy elimination for pure instructions, plus
    block-local load reuse (killed by stores to the same array and by calls)."""
    dom = DomTree(fn)
    children: dict[str, list[str]] = {b.label: [] for b in fn.blocks}
    root = fn.entry.label
    for lab, parent in dom.idom.items():
        if parent is not None and lab != root:
            children[parent].append(lab)
    bmap = fn.block_map()
    canon: dict[str, str] = {}
    table: dict[tuple, str] = {}

    def gep_array(op: Operand) -> str | None:
        """Array a pointer refers to, or None when provenance is unknown."""
        if isinstance(op, ValueRef):
            src = defs.get(op.id)
            if src is not None and src.opcode is Opcode.GETELEMENTPTR:
                base = src.operands[0]
                return ("@" + base.name if isinstance(base, GlobalRef)
                        else "%" + base.id)
        return None

    defs = fn.defined_values()

    def visit(label: str):
        b = bmap[label]
        added: list[tuple] = []
        loads: dict[str, tuple[str, str | None]] = {}  # ptr rep -> (value, array)
        for ins in list(b.instructions):
            op = ins.opcode
            if op is Opcode.CALL:
                loads.clear()
                continue
            if op is Opcode.STORE:
                arr = gep_array(ins.operands[1])
                for prep in list(loads):
                    larr = loads[prep][1]
                    if arr is None or larr is None or larr == arr:
                        del loads[prep]
                continue
            if op is Opcode.LOAD:
                ptr = ins.operands[0]
                prep = ("%" + canon.get(ptr.id, ptr.id)
                        if isinstance(ptr, ValueRef) else str(ptr))
                if prep in loads:
                    leader = loads[prep][0]
                    canon[ins.result] = leader
                    replace_all_uses(fn, ins.result, ValueRef(leader))
                    b.instructions.remove(ins)
                else:
                    loads[prep] = (ins.result, gep_array(ptr))
                continue
            if op is Opcode.PHI or ins.result is None:
                continue
            key = _expr_key(ins, canon, commutative_sort)
            if key is None:
                continue
            if key in table:
                leader = table[key]
                canon[ins.result] = leader
                replace_all_uses(fn, ins.result, ValueRef(leader))
                b.instructions.remove(ins)
            else:
                table[key] = ins.result
                added.append(key)
        for child in sorted(children[label]):
            visit(child)
        for key in added:
            del table[key]

    visit(root)


def run_early_cse(m: IrModule) -> None:
    for fn in m.functions:
        _scoped_value_numbering(fn, commutative_sort=False)


def run_gvn(m: IrModule) -> None:
    """Dominator-scoped value numbering with commutative canonicalization
    (no partial redundancy elimination)."""
    for fn in m.functions:
        _scoped_value_numbering(fn, commutative_sort=True)


def run_reassociate(m: IrModule) -> None:
    """Rebalance single-use add/mul chains: constants folded together and
    operands put in a canonical order (exposes redundancies to gvn/cse)."""
    for fn in m.functions:
        fresh = FreshNames(fn)
        defs = fn.defined_values()
        use_counts: dict[str, int] = {}
        for b in fn.blocks:
            for ins in b.all_instructions():
                for vid in ins.value_uses():
                    use_counts[vid] = use_counts.get(vid, 0) + 1

        for b in fn.blocks:
            pos = {id(ins): i for i, ins in enumerate(b.instructions)}
            for ins in list(b.instructions):
                if ins.opcode not in (Opcode.ADD, Opcode.MUL):
                    continue
                if id(ins) not in pos:
                    continue
                opcode = ins.opcode
                # Is this a chain root? (no same-opcode single-use user in block)
                users = [u for bb in fn.blocks for u in bb.all_instructions()
                         if ins.result in u.value_uses()]
                if any(u.opcode is opcode for u in users):
                    continue
                # Collect leaves across single-use same-opcode links in this block.
                leaves: list[Operand] = []
                chain: list[IrInstruction] = []

                def collect(op: Operand):
                    if isinstance(op, ValueRef):
                        src = defs.get(op.id)
                        if (src is not None and src.opcode is opcode
                                and id(src) in pos
                                and use_counts.get(op.id, 0) == 1):
                            chain.append(src)
                            collect(src.operands[0])
                            collect(src.operands[1])
                            return
                    leaves.append(op)

                collect(ins.operands[0])
                collect(ins.operands[1])
                if len(leaves) < 3:
                    continue
                const_val = 0 if opcode is Opcode.ADD else 1
                rest: list[Operand] = []
                for leaf in leaves:
                    if isinstance(leaf, Const):
                        folded = fold_constant(opcode, [const_val, leaf.value])
                        const_val = folded  # add/mul never trap
                    else:
                        rest.append(leaf)
                rest.sort(key=str)
                identity = 0 if opcode is Opcode.ADD else 1
                target: list[Operand] = list(rest)
                if const_val != identity or not target:
                    target.append(Const(const_val, ins.ir_type))
                # Already canonical?
                current = [str(l) for l in leaves]
                if current == [str(t) for t in target]:
                    continue
                if len(target) == 1:
                    replace_all_uses(fn, ins.result, target[0])
                    b.instructions.remove(ins)
                    for c in chain:
                        if c in b.instructions:
                            b.instructions.remove(c)
                    continue
                # Rebuild a left-leaning chain ending in this instruction.
                insert_at = b.instructions.index(ins)
                acc = target[0]
                for t in target[1:-1]:
                    tmp = IrInstruction(fresh.value(ins.result or "t"), opcode,
                                        [acc, t], ins.ir_type)
                    b.instructions.insert(insert_at, tmp)
                    insert_at += 1
                    acc = ValueRef(tmp.result)
                ins.operands = [acc, target[-1]]
                for c in chain:
                    if c in b.instructions:
                        b.instructions.remove(c)
                defs = fn.defined_values()
                pos = {id(i2): i2i for i2i, i2 in enumerate(b.instructions)}
        erase_dead_pure(fn)
