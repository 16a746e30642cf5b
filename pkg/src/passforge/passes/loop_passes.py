"""Loop passes: loop_simplify, loop_rotate, licm, indvars, loop_deletion,
loop_unroll_partial — plus the induction-variable and trip-count analysis the
QoR estimator builds on.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..ir import (
    Const, IrBlock, IrFunction, IrInstruction, IrModule, LabelRef, Loop,
    Opcode, ValueRef, natural_loops, predecessor_map, preheader_of,
    refresh_loop_annotations,
)
from ..ir.types import Operand, VOID, I1
from .rewrite import (
    FreshNames, PURE_OPS, clone_with_map, collapse_trivial_phis,
    drop_unreachable_blocks, replace_all_uses, retarget_terminator,
    subst_operand,
)


# ---------------------------------------------------------------------------
# Induction variables and trip counts
# ---------------------------------------------------------------------------

@dataclass
class IvInfo:
    phi: IrInstruction
    start: Operand            # preheader incoming
    step: int                 # net constant step per iteration
    latch_value: Operand      # incoming value along the back edge


def find_basic_iv(fn: IrFunction, loop: Loop) -> IvInfo | None:
    """The unique header phi whose back-edge value is phi plus a constant."""
    if len(loop.latches) != 1:
        return None
    latch = loop.latches[0]
    header = fn.block_map()[loop.header]
    defs = fn.defined_values()
    found: IvInfo | None = None
    for phi in header.phis():
        inc = {lab: v for v, lab in phi.phi_incoming()}
        if latch not in inc:
            return None
        start_labels = [lab for _, lab in phi.phi_incoming() if lab != latch]
        if len(start_labels) != 1:
            continue
        start = inc[start_labels[0]]
        step = 0
        cur = inc[latch]
        hops = 0
        while isinstance(cur, ValueRef) and hops < 8:
            hops += 1
            if cur.id == phi.result:
                break
            src = defs.get(cur.id)
            if src is None or src.opcode is not Opcode.ADD:
                cur = None
                break
            a, b = src.operands
            if isinstance(b, Const) and isinstance(a, ValueRef):
                step += b.value
                cur = a
            elif isinstance(a, Const) and isinstance(b, ValueRef):
                step += a.value
                cur = b
            else:
                cur = None
                break
        if (isinstance(cur, ValueRef) and cur.id == phi.result and step != 0):
            if found is not None:
                return None  # ambiguous: two candidate IVs
            found = IvInfo(phi, start, step, inc[latch])
    return found


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def loop_trip_count(fn: IrFunction, loop: Loop):
    """Exact constant trip count, or None when not statically known.

    Handles the two canonical countable shapes: the test in the header on the
    phi value (while-style), and the test in the latch on the incremented
    value (rotated/do-while-style)."""
    iv = find_basic_iv(fn, loop)
    if iv is None or not isinstance(iv.start, Const):
        return None
    s, step = iv.start.value, iv.step
    bmap = fn.block_map()
    defs = fn.defined_values()

    def exit_compare(block: IrBlock):
        term = block.terminator
        if term is None or term.opcode is not Opcode.CONDBR:
            return None
        cond = term.operands[0]
        if not isinstance(cond, ValueRef):
            return None
        cmp = defs.get(cond.id)
        if (cmp is None or cmp.opcode is not Opcode.ICMP
                or not isinstance(cmp.operands[1], Const)
                or not isinstance(cmp.operands[0], ValueRef)):
            return None
        t_in = term.operands[1].label in loop.blocks
        f_in = term.operands[2].label in loop.blocks
        if t_in == f_in:
            return None
        pred = cmp.pred if t_in else _negate_pred(cmp.pred)
        return cmp.operands[0].id, pred, cmp.operands[1].value

    header_cmp = exit_compare(bmap[loop.header])
    if header_cmp is not None and header_cmp[0] == iv.phi.result:
        _, pred, k = header_cmp
        return _count_trips(s, step, pred, k, bottom_test=False)

    latch = loop.latches[0] if len(loop.latches) == 1 else None
    if latch is not None:
        latch_cmp = exit_compare(bmap[latch])
        if latch_cmp is not None:
            x, pred, k = latch_cmp
            if (isinstance(iv.latch_value, ValueRef)
                    and x == iv.latch_value.id):
                return _count_trips(s, step, pred, k, bottom_test=True)
    return None


def _negate_pred(pred: str) -> str:
    return {"eq": "ne", "ne": "eq", "slt": "sge", "sge": "slt",
            "sle": "sgt", "sgt": "sle"}[pred]


def _count_trips(s: int, step: int, pred: str, k: int, bottom_test: bool):
    """Iterations of a loop continuing while (value PRED k); the tested value
    is s + n*step with n starting at 0 (top test) or 1 (bottom test)."""
    if pred == "sle":
        pred, k = "slt", k + 1
    if pred == "sge":
        pred, k = "sgt", k - 1
    if pred == "slt":
        if step <= 0:
            return None
        n = _ceil_div(k - s, step)
    elif pred == "sgt":
        if step >= 0:
            return None
        n = _ceil_div(s - k, -step)
    elif pred == "ne":
        if step == 0 or (k - s) % step != 0:
            return None
        n = (k - s) // step
        if n < 0:
            return None
    else:
        return None
    if bottom_test:
        # The first test happens after one execution of the body; an `ne`
        # bound already passed on entry never terminates.
        if pred == "ne" and n < 1:
            return None
        return max(1, n)
    return max(0, n)


# ---------------------------------------------------------------------------
# loop_simplify
# ---------------------------------------------------------------------------

def _insert_preheader(fn: IrFunction, loop: Loop, fresh: FreshNames) -> bool:
    preds = predecessor_map(fn)
    header = fn.block_map()[loop.header]
    outside = [p for p in preds[loop.header] if p not in loop.blocks]
    if len(outside) == 1:
        p = fn.block_map()[outside[0]]
        if p.successors() == [loop.header]:
            return False
    pre = IrBlock(fresh.label(f"{loop.header}.pre"))
    pre.terminator = IrInstruction(None, Opcode.BR, [LabelRef(loop.header)], VOID)
    bmap = fn.block_map()
    for phi in header.phis():
        entries = phi.phi_incoming()
        outside_entries = [(v, lab) for v, lab in entries if lab in outside]
        inside_entries = [(v, lab) for v, lab in entries if lab not in outside]
        if len(outside_entries) == 1:
            merged: Operand = outside_entries[0][0]
        else:
            merged_phi = IrInstruction(
                fresh.value(phi.result), Opcode.PHI,
                [x for v, lab in outside_entries for x in (v, LabelRef(lab))],
                phi.ir_type)
            pre.instructions.insert(0, merged_phi)
            merged = ValueRef(merged_phi.result)
        phi.operands = [x for v, lab in inside_entries
                        for x in (v, LabelRef(lab))] + [merged, LabelRef(pre.label)]
    for p_label in outside:
        retarget_terminator(bmap[p_label], loop.header, pre.label)
    fn.blocks.insert(fn.blocks.index(header), pre)
    return True


def _merge_latches(fn: IrFunction, loop: Loop, fresh: FreshNames) -> bool:
    if len(loop.latches) <= 1:
        return False
    header = fn.block_map()[loop.header]
    bmap = fn.block_map()
    latch = IrBlock(fresh.label(f"{loop.header}.latch"))
    latch.terminator = IrInstruction(None, Opcode.BR, [LabelRef(loop.header)], VOID)
    for phi in header.phis():
        entries = phi.phi_incoming()
        latch_entries = [(v, lab) for v, lab in entries if lab in loop.latches]
        other = [(v, lab) for v, lab in entries if lab not in loop.latches]
        merged_phi = IrInstruction(
            fresh.value(phi.result), Opcode.PHI,
            [x for v, lab in latch_entries for x in (v, LabelRef(lab))],
            phi.ir_type)
        latch.instructions.insert(0, merged_phi)
        phi.operands = [x for v, lab in other for x in (v, LabelRef(lab))] + \
            [ValueRef(merged_phi.result), LabelRef(latch.label)]
    for l_label in loop.latches:
        retarget_terminator(bmap[l_label], loop.header, latch.label)
    last_idx = max(fn.blocks.index(bmap[lab]) for lab in sorted(loop.blocks))
    fn.blocks.insert(last_idx + 1, latch)
    return True


def run_loop_simplify(m: IrModule) -> None:
    """Give every loop a dedicated preheader and a single latch; idempotent."""
    for fn in m.functions:
        fresh = FreshNames(fn)
        for _ in range(64):
            forest = natural_loops(fn)
            changed = False
            for loop in sorted(forest.loops, key=lambda l: (l.depth, l.header)):
                if _insert_preheader(fn, loop, fresh):
                    changed = True
                    break
                if _merge_latches(fn, loop, fresh):
                    changed = True
                    break
            if not changed:
                break
        refresh_loop_annotations(fn)


# ---------------------------------------------------------------------------
# loop_rotate
# ---------------------------------------------------------------------------

def _rotatable(fn: IrFunction, loop: Loop):
    header = fn.block_map()[loop.header]
    if len(loop.latches) != 1:
        return None
    latch = fn.block_map()[loop.latches[0]]
    if latch.terminator is None or latch.terminator.opcode is not Opcode.BR:
        return None
    non_phis = header.non_phis()
    term = header.terminator
    if term is None or term.opcode is not Opcode.CONDBR:
        return None
    if len(non_phis) != 1 or non_phis[0].opcode is not Opcode.ICMP:
        return None
    cmp = non_phis[0]
    cond = term.operands[0]
    if not (isinstance(cond, ValueRef) and cond.id == cmp.result):
        return None
    # The compare result must have no other users.
    for b in fn.blocks:
        for ins in b.all_instructions():
            if ins is term or ins is cmp:
                continue
            if cmp.result in ins.value_uses():
                return None
    t_lab = term.operands[1].label
    f_lab = term.operands[2].label
    if (t_lab in loop.blocks) == (f_lab in loop.blocks):
        return None
    body_lab = t_lab if t_lab in loop.blocks else f_lab
    exit_lab = f_lab if t_lab in loop.blocks else t_lab
    body_first = t_lab in loop.blocks
    if body_lab == loop.header:
        return None  # already a self-looping bottom-test loop
    preds = predecessor_map(fn)
    if preds[body_lab] != [loop.header]:
        return None
    if fn.block_map()[body_lab].phis():
        return None
    outside = [p for p in preds[loop.header] if p not in loop.blocks]
    if len(outside) != 1:
        return None
    p_out = fn.block_map()[outside[0]]
    if p_out.successors() != [loop.header]:
        return None
    if any(p != loop.header for p in preds[exit_lab]):
        return None
    if loop.exits(fn) != [(loop.header, exit_lab)]:
        return None  # header must be the only exiting block
    # Compare operands must be loop-invariant or header phis.
    phi_ids = {phi.result for phi in header.phis()}
    def_block = {}
    for b in fn.blocks:
        for ins in b.all_instructions():
            if ins.result is not None:
                def_block[ins.result] = b.label
    for op in cmp.operands:
        if isinstance(op, ValueRef) and op.id not in phi_ids:
            if def_block.get(op.id) in loop.blocks:
                return None
    return header, latch, p_out, body_lab, exit_lab, cmp, body_first


def run_loop_rotate(m: IrModule) -> None:
    """Turn while-style loops (test in the header) into do-while form: the
    test is cloned into the preheader as an entry guard and onto the latch as
    the back-edge condition, and the old header dissolves into the body."""
    for fn in m.functions:
        changed = True
        rounds = 0
        while changed and rounds < 16:
            changed = False
            rounds += 1
            forest = natural_loops(fn)
            for loop in sorted(forest.loops, key=lambda l: (l.depth, l.header)):
                cand = _rotatable(fn, loop)
                if cand is None:
                    continue
                _rotate(fn, loop, *cand)
                changed = True
                break
        refresh_loop_annotations(fn)


def _rotate(fn: IrFunction, loop: Loop, header: IrBlock, latch: IrBlock,
            p_out: IrBlock, body_lab: str, exit_lab: str,
            cmp: IrInstruction, body_first: bool) -> None:
    fresh = FreshNames(fn)
    bmap = fn.block_map()
    body = bmap[body_lab]
    exit_blk = bmap[exit_lab]
    phis = header.phis()
    init_map: dict[str, Operand] = {}
    next_map: dict[str, Operand] = {}
    for phi in phis:
        inc = {lab: v for v, lab in phi.phi_incoming()}
        init_map[phi.result] = inc[p_out.label]
        next_map[phi.result] = inc[latch.label]

    def guard_operand(mapping: dict[str, Operand], block: IrBlock) -> Operand:
        ins, folded = clone_with_map(cmp, mapping, fresh)
        if ins is None:
            return folded  # constant guard; simplifycfg folds the branch
        block.instructions.append(ins)
        return ValueRef(ins.result)

    g_pre = guard_operand(init_map, p_out)
    t0, f0 = (body_lab, exit_lab) if body_first else (exit_lab, body_lab)
    p_out.terminator = IrInstruction(
        None, Opcode.CONDBR, [g_pre, LabelRef(t0), LabelRef(f0)], VOID)

    g_latch = guard_operand(next_map, latch)
    latch.terminator = IrInstruction(
        None, Opcode.CONDBR, [g_latch, LabelRef(t0), LabelRef(f0)], VOID)

    # Phis move into the body block, which becomes the new header.
    for phi in reversed(phis):
        phi.operands = [init_map[phi.result], LabelRef(p_out.label),
                        next_map[phi.result], LabelRef(latch.label)]
        header.instructions.remove(phi)
        body.instructions.insert(0, phi)

    # Loop values used past the exit flow through dedicated exit phis.
    outside_use_fix: list[tuple[str, IrInstruction]] = []
    for phi in phis:
        used_outside = False
        for b in fn.blocks:
            if b.label in loop.blocks or b is header:
                continue
            for ins in b.all_instructions():
                if phi.result in ins.value_uses():
                    used_outside = True
        if used_outside:
            exit_phi = IrInstruction(
                fresh.value(phi.result), Opcode.PHI,
                [init_map[phi.result], LabelRef(p_out.label),
                 next_map[phi.result], LabelRef(latch.label)],
                phi.ir_type)
            outside_use_fix.append((phi.result, exit_phi))
    for old_id, exit_phi in outside_use_fix:
        for b in fn.blocks:
            if b.label in loop.blocks or b is header or b is exit_blk:
                continue
            for ins in b.all_instructions():
                for i, op in enumerate(ins.operands):
                    if isinstance(op, ValueRef) and op.id == old_id:
                        ins.operands[i] = ValueRef(exit_phi.result)
        for ins in exit_blk.all_instructions():
            if ins.opcode is Opcode.PHI:
                continue
            for i, op in enumerate(ins.operands):
                if isinstance(op, ValueRef) and op.id == old_id:
                    ins.operands[i] = ValueRef(exit_phi.result)
        exit_blk.instructions.insert(0, exit_phi)

    # Pre-existing exit phis: the edge from the old header becomes two edges.
    for phi in exit_blk.phis():
        ops: list[Operand | LabelRef] = []
        for v, lab in phi.phi_incoming():
            if lab != header.label:
                ops.extend([v, LabelRef(lab)])
                continue
            v_init = init_map.get(v.id, v) if isinstance(v, ValueRef) else v
            v_next = next_map.get(v.id, v) if isinstance(v, ValueRef) else v
            ops.extend([v_init, LabelRef(p_out.label)])
            ops.extend([v_next, LabelRef(latch.label)])
        phi.operands = ops

    body.loop_info = None
    fn.blocks.remove(header)
    if header.loop_info is not None:
        from ..ir.types import LoopInfo
        body.loop_info = LoopInfo(header.loop_info.loop_id,
                                  header.loop_info.depth, True)
    refresh_loop_annotations(fn)


# ---------------------------------------------------------------------------
# licm
# ---------------------------------------------------------------------------

def run_licm(m: IrModule) -> None:
    """Hoist pure, non-trapping loop-invariant instructions to the preheader.

    Loads and divisions stay put: hoisting could introduce a trap or an
    out-of-bounds access on a path that never executed them."""
    for fn in m.functions:
        forest = natural_loops(fn)
        for loop in sorted(forest.loops, key=lambda l: (-l.depth, l.header)):
            pre_label = preheader_of(fn, loop)
            if pre_label is None:
                continue
            pre = fn.block_map()[pre_label]
            if pre.successors() != [loop.header]:
                continue
            def_block: dict[str, str] = {}
            for b in fn.blocks:
                for ins in b.all_instructions():
                    if ins.result is not None:
                        def_block[ins.result] = b.label
            moved = True
            while moved:
                moved = False
                for lab in sorted(loop.blocks):
                    b = fn.block_map()[lab]
                    for ins in list(b.instructions):
                        if ins.opcode not in PURE_OPS or ins.opcode is Opcode.PHI:
                            continue
                        if ins.result is None:
                            continue
                        invariant = all(
                            def_block.get(vid) not in loop.blocks
                            for vid in ins.value_uses())
                        if not invariant:
                            continue
                        b.instructions.remove(ins)
                        pre.instructions.append(ins)
                        def_block[ins.result] = pre.label
                        moved = True


# ---------------------------------------------------------------------------
# indvars
# ---------------------------------------------------------------------------

def run_indvars(m: IrModule) -> None:
    """Canonicalize loop exit compares toward slt form so trip counts and
    unrolling see a uniform shape."""
    for fn in m.functions:
        forest = natural_loops(fn)
        defs = fn.defined_values()
        for loop in forest.loops:
            iv = find_basic_iv(fn, loop)
            if iv is None:
                continue
            for lab in sorted(loop.blocks):
                b = fn.block_map()[lab]
                term = b.terminator
                if term is None or term.opcode is not Opcode.CONDBR:
                    continue
                cond = term.operands[0]
                if not isinstance(cond, ValueRef):
                    continue
                cmp = defs.get(cond.id)
                if (cmp is None or cmp.opcode is not Opcode.ICMP
                        or not isinstance(cmp.operands[0], ValueRef)
                        or not isinstance(cmp.operands[1], Const)):
                    continue
                x = cmp.operands[0].id
                on_phi = x == iv.phi.result
                on_next = (isinstance(iv.latch_value, ValueRef)
                           and x == iv.latch_value.id)
                if not (on_phi or on_next):
                    continue
                users = [u for bb in fn.blocks for u in bb.all_instructions()
                         if cmp.result in u.value_uses()]
                if len(users) != 1:
                    continue
                k = cmp.operands[1].value
                changed = False
                if cmp.pred == "sle" and k < 2**31 - 1:
                    cmp.pred, cmp.operands[1] = "slt", Const(k + 1)
                    changed = True
                elif cmp.pred == "sgt" and k < 2**31 - 1:
                    cmp.pred, cmp.operands[1] = "slt", Const(k + 1)
                    term.operands = [term.operands[0], term.operands[2],
                                     term.operands[1]]
                    changed = True
                elif cmp.pred == "sge":
                    cmp.pred = "slt"
                    term.operands = [term.operands[0], term.operands[2],
                                     term.operands[1]]
                    changed = True
                elif cmp.pred == "ne" and isinstance(iv.start, Const):
                    # Sound only for continue-while-ne polarity: the tested
                    # value then stays in [start, bound].
                    s = iv.start.value
                    step = iv.step
                    base = s + step if on_next else s
                    continue_on_true = term.operands[1].label in loop.blocks
                    if (continue_on_true and step > 0
                            and (k - s) % step == 0 and k >= base):
                        cmp.pred = "slt"


# ---------------------------------------------------------------------------
# loop_deletion
# ---------------------------------------------------------------------------

def run_loop_deletion(m: IrModule) -> None:
    """Delete side-effect-free loops with a known finite trip count whose
    values are unused outside."""
    for fn in m.functions:
        changed = True
        while changed:
            changed = False
            forest = natural_loops(fn)
            for loop in sorted(forest.loops, key=lambda l: (-l.depth, l.header)):
                if _delete_loop(fn, loop):
                    changed = True
                    break
        refresh_loop_annotations(fn)


def _delete_loop(fn: IrFunction, loop: Loop) -> bool:
    bmap = fn.block_map()
    for lab in loop.blocks:
        for ins in bmap[lab].all_instructions():
            if ins.opcode in (Opcode.STORE, Opcode.CALL):
                return False
    if loop_trip_count(fn, loop) is None:
        return False
    exits = loop.exits(fn)
    targets = {t for _, t in exits}
    if len(targets) != 1:
        return False
    exit_lab = targets.pop()
    if bmap[exit_lab].phis():
        return False
    preds = predecessor_map(fn)
    if any(p not in loop.blocks for p in preds[exit_lab]):
        return False
    defined = {ins.result for lab in loop.blocks
               for ins in bmap[lab].all_instructions() if ins.result is not None}
    for b in fn.blocks:
        if b.label in loop.blocks:
            continue
        for ins in b.all_instructions():
            if any(v in defined for v in ins.value_uses()):
                return False
    outside = [p for p in preds[loop.header] if p not in loop.blocks]
    if len(outside) != 1:
        return False
    retarget_terminator(bmap[outside[0]], loop.header, exit_lab)
    fn.blocks = [b for b in fn.blocks if b.label not in loop.blocks]
    return True


# ---------------------------------------------------------------------------
# loop_unroll_partial
# ---------------------------------------------------------------------------

@dataclass
class UnrollShape:
    """Canonical countable loop: top-test header plus one body block."""
    loop: Loop
    header: IrBlock
    body: IrBlock
    pre: IrBlock
    exit_label: str
    cmp: IrInstruction
    iv: IvInfo
    trip: int
    body_first: bool


def unrollable_shape(fn: IrFunction, loop: Loop,
                     require_exact: bool = True) -> UnrollShape | None:
    """Match the canonical countable shape.

    ``require_exact`` additionally demands the bound minus start divide the
    step, which header-test-per-group unrolling needs; the pragma expander's
    checked mode re-tests after every copy and can take any slt trip."""
    if loop.children:
        return None
    if len(loop.blocks) != 2 or len(loop.latches) != 1:
        return None
    header = fn.block_map()[loop.header]
    body_lab = loop.latches[0]
    body = fn.block_map()[body_lab]
    if body.phis() or body.terminator is None \
            or body.terminator.opcode is not Opcode.BR:
        return None
    preds = predecessor_map(fn)
    if preds[body_lab] != [loop.header]:
        return None
    non_phis = header.non_phis()
    term = header.terminator
    if term is None or term.opcode is not Opcode.CONDBR:
        return None
    if len(non_phis) != 1 or non_phis[0].opcode is not Opcode.ICMP:
        return None
    cmp = non_phis[0]
    cond = term.operands[0]
    if not (isinstance(cond, ValueRef) and cond.id == cmp.result):
        return None
    for b in fn.blocks:
        for ins in b.all_instructions():
            if ins is not term and ins is not cmp \
                    and cmp.result in ins.value_uses():
                return None
    t_lab = term.operands[1].label
    f_lab = term.operands[2].label
    if (t_lab in loop.blocks) == (f_lab in loop.blocks):
        return None
    body_first = t_lab == body_lab
    exit_label = f_lab if body_first else t_lab
    if (t_lab if body_first else f_lab) != body_lab:
        return None
    iv = find_basic_iv(fn, loop)
    if iv is None or not isinstance(iv.start, Const) or iv.step <= 0:
        return None
    if not (isinstance(cmp.operands[0], ValueRef)
            and cmp.operands[0].id == iv.phi.result
            and isinstance(cmp.operands[1], Const)):
        return None
    pred = cmp.pred if body_first else _negate_pred(cmp.pred)
    if pred not in ("slt", "ne"):
        return None
    k = cmp.operands[1].value
    s = iv.start.value
    if k < s:
        return None
    exact = (k - s) % iv.step == 0
    if not exact and (require_exact or pred == "ne"):
        return None
    trip = _count_trips(s, iv.step, pred, k, bottom_test=False)
    if trip is None:
        return None
    outside = [p for p in preds[loop.header] if p not in loop.blocks]
    if len(outside) != 1:
        return None
    pre = fn.block_map()[outside[0]]
    if pre.successors() != [loop.header]:
        return None
    return UnrollShape(loop, header, body, pre, exit_label, cmp, iv, trip,
                       body_first)


def _peel_iterations(fn: IrFunction, shape: UnrollShape, count: int,
                     fresh: FreshNames) -> None:
    """Copy the first ``count`` iterations straight-line into the preheader
    and advance the header phis' initial values."""
    header, body, pre = shape.header, shape.body, shape.pre
    state: dict[str, Operand] = {}
    for phi in header.phis():
        inc = {lab: v for v, lab in phi.phi_incoming()}
        state[phi.result] = inc[pre.label]
    for _ in range(count):
        mapping = dict(state)
        for ins in body.instructions:
            new, res = clone_with_map(ins, mapping, fresh)
            if new is not None:
                pre.instructions.append(new)
            if ins.result is not None:
                mapping[ins.result] = res if res is not None else ValueRef(ins.result)
        for phi in header.phis():
            inc = {lab: v for v, lab in phi.phi_incoming()}
            state[phi.result] = subst_operand(inc[body.label], mapping)
    for phi in header.phis():
        ops = []
        for v, lab in phi.phi_incoming():
            if lab == pre.label:
                v = state[phi.result]
            ops.extend([v, LabelRef(lab)])
        phi.operands = ops


def _append_replica(fn: IrFunction, shape: UnrollShape,
                    fresh: FreshNames) -> IrBlock:
    """Add one more body replica as a new chained block; the loop afterwards
    performs two original iterations per trip."""
    header, body = shape.header, shape.body
    mapping: dict[str, Operand] = {}
    for phi in header.phis():
        inc = {lab: v for v, lab in phi.phi_incoming()}
        mapping[phi.result] = inc[body.label]
    b2 = IrBlock(fresh.label(f"{body.label}.u"))
    for ins in body.instructions:
        new, res = clone_with_map(ins, mapping, fresh)
        if new is not None:
            b2.instructions.append(new)
        if ins.result is not None:
            mapping[ins.result] = res if res is not None else ValueRef(ins.result)
    b2.terminator = IrInstruction(None, Opcode.BR, [LabelRef(header.label)], VOID)
    body.terminator = IrInstruction(None, Opcode.BR, [LabelRef(b2.label)], VOID)
    for phi in header.phis():
        ops = []
        for v, lab in phi.phi_incoming():
            if lab == body.label:
                v = subst_operand(v, mapping)
                lab = b2.label
            ops.extend([v, LabelRef(lab)])
        phi.operands = ops
    fn.blocks.insert(fn.blocks.index(body) + 1, b2)
    if body.loop_info is not None:
        from ..ir.types import LoopInfo
        b2.loop_info = LoopInfo(body.loop_info.loop_id, body.loop_info.depth,
                                False)
    return b2


def run_loop_unroll_partial(m: IrModule) -> None:
    """Unroll canonical innermost countable loops by two.

    An odd trip count peels one leading iteration into the preheader first so
    the remaining count divides evenly; the two body copies are left as
    chained blocks for simplifycfg to merge."""
    for fn in m.functions:
        fresh = FreshNames(fn)
        forest = natural_loops(fn)
        for loop in sorted(forest.loops, key=lambda l: l.header):
            if unrollable_shape(fn, loop) is None and not loop.children \
                    and len(loop.blocks) == 2:
                # A missing dedicated preheader is repairable in place.
                _insert_preheader(fn, loop, fresh)
            shape = unrollable_shape(fn, loop)
            if shape is None or shape.trip < 2:
                continue
            r = shape.trip % 2
            if r:
                _peel_iterations(fn, shape, r, fresh)
            _append_replica(fn, shape, fresh)
        refresh_loop_annotations(fn)
