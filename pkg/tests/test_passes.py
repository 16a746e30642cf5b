"""Per-pass behavior, idempotence, and the catalog contract."""
import numpy as np
import pytest

from passforge.corpus import random_inputs
from passforge.ir import Opcode, interpret, parse_module, print_module
from passforge.passes import (
    PassId, TABLE_CATEGORIES, apply_pass, apply_pragma_passes, apply_sequence,
    general_passes, pass_catalog,
)
from passforge.qor import trip_count


def test_catalog_shape():
    catalog = pass_catalog()
    general = [e for e in catalog if not e.pragma_anchored]
    pragma = [e for e in catalog if e.pragma_anchored]
    # The catalog carries every enumerated general pass plus the two
    # pragma-anchored ones; all categories come from the six-way taxonomy.
    assert len(general) == 17
    assert len(pragma) == 2
    assert {e.pass_id for e in pragma} == {PassId.APPLY_UNROLL_PRAGMA,
                                           PassId.APPLY_INLINE_PRAGMA}
    for e in catalog:
        assert e.category in TABLE_CATEGORIES
    assert {e.category for e in catalog} == set(TABLE_CATEGORIES)


def test_catalog_index_stable():
    a = [e.pass_id for e in pass_catalog()]
    b = [e.pass_id for e in pass_catalog()]
    assert a == b
    assert a[0] is PassId.SIMPLIFYCFG


def test_adce_removes_unused_add():
    m = parse_module("""
top func @f(%a: i32) -> i32 {
block entry:
  %dead = add i32 %a, 5
  %live = add i32 %a, 1
  ret i32 %live
}
""")
    r = apply_pass(m, PassId.ADCE)
    assert r.changed
    assert r.instructions_removed == 1
    text = print_module(r.module)
    assert "%dead" not in text


def test_sccp_folds_constant_branch():
    m = parse_module("""
top func @f(%a: i32) -> i32 {
block entry:
  %c = icmp eq i32 1, 1
  condbr %c, yes, no
block yes:
  ret i32 %a
block no:
  ret i32 0
}
""")
    r = apply_pass(m, PassId.SCCP)
    assert r.changed
    out = print_module(r.module)
    assert "condbr" not in out
    assert "block no" not in out


def test_instcombine_mul_to_shift():
    m = parse_module("""
top func @f(%x: i32) -> i32 {
block entry:
  %y = mul i32 %x, 2
  ret i32 %y
}
""")
    r = apply_pass(m, PassId.INSTCOMBINE)
    ins = r.module.top.blocks[0].instructions[0]
    assert ins.opcode is Opcode.SHL
    assert interpret(r.module, [21]).return_value == 42


def test_instsimplify_identities():
    m = parse_module("""
top func @f(%x: i32) -> i32 {
block entry:
  %a = add i32 %x, 0
  %b = mul i32 %a, 1
  %c = sub i32 %b, %b
  %d = or i32 %c, %x
  ret i32 %d
}
""")
    r = apply_pass(m, PassId.INSTSIMPLIFY)
    assert r.changed
    assert len(r.module.top.blocks[0].instructions) == 0
    assert interpret(r.module, [7]).return_value == 7


def test_empty_sequence_is_identity(dot_module):
    out, results = apply_sequence(dot_module, [])
    assert results == []
    assert print_module(out) == print_module(dot_module)


def test_changed_false_means_structurally_equal(dot_module):
    r = apply_pass(dot_module, PassId.LOOP_SIMPLIFY)
    r2 = apply_pass(r.module, PassId.LOOP_SIMPLIFY)
    assert not r2.changed
    assert print_module(r2.module) == print_module(r.module)


@pytest.mark.parametrize("pass_id", [PassId.ADCE, PassId.DSE, PassId.MEM2REG,
                                     PassId.LOOP_SIMPLIFY])
def test_idempotent_passes(pass_id, small_corpus):
    for _name, m in small_corpus[:6]:
        once = apply_pass(m, pass_id).module
        twice = apply_pass(once, pass_id)
        assert not twice.changed, f"{pass_id.value} not idempotent on {_name}"


def test_cleanup_passes_monotone(small_corpus):
    from passforge.passes.rewrite import instruction_count
    for _name, m in small_corpus:
        for pass_id in (PassId.ADCE, PassId.DSE):
            r = apply_pass(m, pass_id)
            assert instruction_count(r.module) <= instruction_count(m)


def test_gvn_merges_commuted_mul():
    m = parse_module("""
top func @f(%a: i32, %b: i32) -> i32 {
block entry:
  %x = mul i32 %a, %b
  %y = mul i32 %b, %a
  %s = add i32 %x, %y
  ret i32 %s
}
""")
    r = apply_pass(m, PassId.GVN)
    assert r.changed
    muls = [i for i in r.module.top.blocks[0].instructions
            if i.opcode is Opcode.MUL]
    assert len(muls) == 1
    assert interpret(r.module, [3, 5]).return_value == 30


def test_early_cse_dominator_scope():
    m = parse_module("""
top func @f(%a: i32, %c: i1) -> i32 {
block entry:
  %x = add i32 %a, 7
  condbr %c, t, e
block t:
  %y = add i32 %a, 7
  ret i32 %y
block e:
  ret i32 %x
}
""")
    r = apply_pass(m, PassId.EARLY_CSE)
    assert r.changed
    assert "%y" not in print_module(r.module)


def test_dse_deletes_overwritten_store():
    m = parse_module("""
global @g : i32[4]
top func @f(%a: i32) -> i32 {
block entry:
  %p = getelementptr @g, 0
  store i32 %a, %p
  store i32 7, %p
  %v = load i32 %p
  ret i32 %v
}
""")
    r = apply_pass(m, PassId.DSE)
    stores = [i for i in r.module.top.blocks[0].instructions
              if i.opcode is Opcode.STORE]
    assert len(stores) == 1
    assert interpret(r.module, [3]).return_value == 7


def test_mem2reg_forwards_store_to_load():
    m = parse_module("""
global @g : i32[4]
top func @f(%a: i32) -> i32 {
block entry:
  %p = getelementptr @g, 1
  store i32 %a, %p
  %v = load i32 %p
  %r = add i32 %v, 1
  ret i32 %r
}
""")
    r = apply_pass(m, PassId.MEM2REG)
    assert r.changed
    assert not any(i.opcode is Opcode.LOAD
                   for i in r.module.top.blocks[0].instructions)
    assert interpret(r.module, [5]).return_value == 6


def test_licm_hoists_invariant_mul(dot_module):
    m = parse_module("""
top func @f(%a: i32[8], %k: i32) -> i32 {
block entry:
  br hd
block hd loop(1, depth=1, header):
  %i = phi i32 [0, entry], [%i.next, body]
  %s = phi i32 [0, entry], [%s.next, body]
  %c = icmp slt i32 %i, 8
  condbr %c, body, out
block body loop(1, depth=1):
  %k2 = mul i32 %k, %k
  %p = getelementptr %a, %i
  %v = load i32 %p
  %t = mul i32 %v, %k2
  %s.next = add i32 %s, %t
  %i.next = add i32 %i, 1
  br hd
block out:
  ret i32 %s
}
""")
    r = apply_pass(m, PassId.LICM)
    assert r.changed
    body = r.module.top.block_map()["body"]
    assert not any(i.result == "k2" for i in body.instructions)
    entry = r.module.top.block_map()["entry"]
    assert any(i.result == "k2" for i in entry.instructions)


def test_indvars_canonicalizes_sle():
    m = parse_module("""
top func @f(%a: i32[9]) -> i32 {
block entry:
  br hd
block hd loop(1, depth=1, header):
  %i = phi i32 [0, entry], [%i.next, body]
  %c = icmp sle i32 %i, 7
  condbr %c, body, out
block body loop(1, depth=1):
  %p = getelementptr %a, %i
  store i32 %i, %p
  %i.next = add i32 %i, 1
  br hd
block out:
  ret i32 0
}
""")
    r = apply_pass(m, PassId.INDVARS)
    assert r.changed
    cmp = r.module.top.block_map()["hd"].non_phis()[0]
    assert cmp.pred == "slt"
    assert cmp.operands[1].value == 8
    assert trip_count(r.module, "f", 1) == 8


def test_loop_deletion_removes_pure_loop():
    m = parse_module("""
top func @f(%a: i32) -> i32 {
block entry:
  br hd
block hd loop(1, depth=1, header):
  %i = phi i32 [0, entry], [%i.next, body]
  %c = icmp slt i32 %i, 10
  condbr %c, body, out
block body loop(1, depth=1):
  %w = mul i32 %i, %i
  %i.next = add i32 %i, 1
  br hd
block out:
  ret i32 %a
}
""")
    r = apply_pass(m, PassId.LOOP_DELETION)
    assert r.changed
    assert len(r.module.top.blocks) <= 2
    assert interpret(r.module, [9]).return_value == 9


def test_loop_rotate_moves_test_to_latch(dot_module):
    r = apply_pass(dot_module, PassId.LOOP_ROTATE)
    assert r.changed
    fn = r.module.top
    # The rotated loop tests the incremented counter at the latch.
    from passforge.ir import natural_loops
    forest = natural_loops(fn)
    loop = forest.loops[0]
    latch = fn.block_map()[loop.latches[0]]
    assert latch.terminator.opcode is Opcode.CONDBR
    assert interpret(r.module, [[1] * 8, [2] * 8]).return_value == \
        interpret(dot_module, [[1] * 8, [2] * 8]).return_value


def test_unroll_partial_even_trip(dot_module):
    r = apply_pass(dot_module, PassId.LOOP_UNROLL_PARTIAL)
    assert r.changed
    assert trip_count(r.module, "dot", 1) == 4
    out = interpret(r.module, [[2] * 8, [3] * 8])
    assert out.return_value == 48


def test_jump_threading_phi_of_constants():
    m = parse_module("""
top func @f(%c: i1, %a: i32) -> i32 {
block entry:
  condbr %c, set1, set0
block set1:
  br check
block set0:
  br check
block check:
  %flag = phi i32 [1, set1], [0, set0]
  %t = icmp ne i32 %flag, 0
  condbr %t, yes, no
block yes:
  %r1 = add i32 %a, 100
  br out
block no:
  %r0 = add i32 %a, 200
  br out
block out:
  %r = phi i32 [%r1, yes], [%r0, no]
  ret i32 %r
}
""")
    r = apply_pass(m, PassId.JUMP_THREADING)
    assert r.changed
    assert interpret(r.module, [1, 5]).return_value == 105
    assert interpret(r.module, [0, 5]).return_value == 205


def test_simplifycfg_merges_unrolled_body(dot_module):
    once = apply_pass(dot_module, PassId.LOOP_UNROLL_PARTIAL).module
    merged = apply_pass(once, PassId.SIMPLIFYCFG)
    assert merged.changed
    assert len(merged.module.top.blocks) < len(once.top.blocks)


def test_unroll_pragma_divisible_clean():
    m = parse_module("""
#pragma unroll(factor=4) loop=1
top func @f(%a: i32[8], %b: i32[8]) -> i32 {
block entry:
  br hd
block hd loop(1, depth=1, header):
  %i = phi i32 [0, entry], [%i.next, body]
  %c = icmp slt i32 %i, 8
  condbr %c, body, out
block body loop(1, depth=1):
  %p = getelementptr %a, %i
  %v = load i32 %p
  %q = getelementptr %b, %i
  store i32 %v, %q
  %i.next = add i32 %i, 1
  br hd
block out:
  ret i32 0
}
""")
    out = apply_pragma_passes(m)
    assert trip_count(out, "f", 1) == 2
    # one body block, replicated four times, no remainder loop
    from passforge.ir import natural_loops
    assert len(natural_loops(out.top).loops) == 1
    body = out.top.block_map()["body"]
    assert sum(1 for i in body.instructions if i.opcode is Opcode.STORE) == 4
    a = list(range(8))
    base = interpret(m, [a, [0] * 8])
    after = interpret(out, [a, [0] * 8])
    assert base.memory_digest == after.memory_digest


def test_unroll_pragma_nondivisible_checked(case1, rng):
    out = apply_pragma_passes(case1)
    inputs = random_inputs(case1, rng)
    base = interpret(case1, inputs)
    after = interpret(out, inputs)
    assert (base.return_value, base.memory_digest) == \
        (after.return_value, after.memory_digest)
    # 1482 = 4 * 370 + 2: the unrolled loop plus a remainder structure that
    # executes the last two iterations through the termination checks.
    assert 1482 == 4 * 370 + 2
    fn = out.top
    check_blocks = [b for b in fn.blocks if b.label.startswith("inner_body.r")]
    assert len(check_blocks) == 3  # factor - 1 replica blocks


def test_inline_pragma(rng):
    m = parse_module("""
#pragma inline
func @helper(%x: i32) -> i32 {
block entry:
  %y = mul i32 %x, 3
  ret i32 %y
}

top func @f(%a: i32) -> i32 {
block entry:
  %r = call i32 @helper(%a)
  %s = add i32 %r, 1
  ret i32 %s
}
""")
    out = apply_pragma_passes(m)
    assert len(out.functions) == 1  # helper fully inlined and dropped
    assert not any(i.opcode is Opcode.CALL
                   for b in out.top.blocks for i in b.all_instructions())
    assert interpret(out, [5]).return_value == 16


def test_pass_sequence_repeats_allowed(case1):
    seq = [PassId.LOOP_UNROLL_PARTIAL, PassId.SCCP, PassId.SIMPLIFYCFG,
           PassId.LOOP_UNROLL_PARTIAL]
    out, results = apply_sequence(case1, seq)
    assert len(results) == 4
    assert trip_count(out, "case1", 2) == 370
