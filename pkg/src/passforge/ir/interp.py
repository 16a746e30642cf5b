"""Reference interpreter: the semantic oracle for pass transformations.

Semantics are total and deterministic: 32-bit two's-complement arithmetic,
shift amounts masked to 5 bits, division by zero and the INT_MIN/-1 overflow
trap, and bounds-checked array access.  Execution is bounded by ``fuel``
(executed-instruction count) so differential tests terminate even when a buggy
pass introduces an infinite loop.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .types import (
    Const, GlobalRef, IrFunction, IrModule, LabelRef, Opcode, ValueRef,
)

DEFAULT_FUEL = 10**8

_MASK = 0xFFFFFFFF
_INT_MIN = -(2**31)


def wrap32(v: int) -> int:
    v &= _MASK
    return v - (1 << 32) if v >= (1 << 31) else v


class TrapError(Exception):
    """Defined runtime trap (division by zero, overflow, out of bounds)."""

    def __init__(self, kind: str, location: str):
        super().__init__(f"{kind} at {location}")
        self.kind = kind
        self.location = location


class FuelExhausted(Exception):
    pass


@dataclass
class ExecResult:
    return_value: int | None
    memory_digest: str
    dynamic_op_counts: dict[str, int]
    executed_instructions: int


@dataclass
class _Memory:
    arrays: dict[str, list[int]] = field(default_factory=dict)


def _icmp(pred: str, a: int, b: int) -> int:
    if pred == "eq":
        return int(a == b)
    if pred == "ne":
        return int(a != b)
    if pred == "slt":
        return int(a < b)
    if pred == "sle":
        return int(a <= b)
    if pred == "sgt":
        return int(a > b)
    return int(a >= b)  # sge


def fold_constant(opcode: Opcode, operands: list[int], pred: str | None = None):
    """Pure constant evaluation used by both the interpreter and sccp/instcombine.

    Returns the wrapped integer result, or None when the operation traps.
    """
    if opcode is Opcode.ADD:
        return wrap32(operands[0] + operands[1])
    if opcode is Opcode.SUB:
        return wrap32(operands[0] - operands[1])
    if opcode is Opcode.MUL:
        return wrap32(operands[0] * operands[1])
    if opcode is Opcode.SDIV:
        a, b = operands
        if b == 0 or (a == _INT_MIN and b == -1):
            return None
        q = abs(a) // abs(b)
        return wrap32(-q if (a < 0) != (b < 0) else q)
    if opcode is Opcode.SREM:
        a, b = operands
        if b == 0 or (a == _INT_MIN and b == -1):
            return None
        q = abs(a) // abs(b)
        q = -q if (a < 0) != (b < 0) else q
        return wrap32(a - b * q)
    if opcode is Opcode.AND:
        return wrap32(operands[0] & operands[1])
    if opcode is Opcode.OR:
        return wrap32(operands[0] | operands[1])
    if opcode is Opcode.XOR:
        return wrap32(operands[0] ^ operands[1])
    if opcode is Opcode.SHL:
        return wrap32(operands[0] << (operands[1] & 31))
    if opcode is Opcode.ASHR:
        return wrap32(operands[0] >> (operands[1] & 31))
    if opcode is Opcode.ICMP:
        return _icmp(pred or "eq", operands[0], operands[1])
    if opcode is Opcode.ZEXT:
        return operands[0] & 1
    if opcode is Opcode.SEXT:
        return -1 if (operands[0] & 1) else 0
    if opcode is Opcode.TRUNC:
        return operands[0] & 1
    raise ValueError(f"not a foldable opcode: {opcode}")


class _Machine:
    def __init__(self, module: IrModule, memory: _Memory, fuel: int):
        self.module = module
        self.memory = memory
        self.fuel = fuel
        self.op_counts: dict[str, int] = {}
        self.executed = 0

    def charge(self, opcode: Opcode):
        if self.executed >= self.fuel:
            raise FuelExhausted(f"fuel limit {self.fuel} reached")
        self.executed += 1
        name = opcode.value
        self.op_counts[name] = self.op_counts.get(name, 0) + 1

    def run_function(self, fn: IrFunction, args: list) -> int | None:
        env: dict[str, object] = {}
        for (pid, ty), arg in zip(fn.params, args):
            env[pid] = arg

        def value(op):
            if isinstance(op, Const):
                return op.value
            if isinstance(op, ValueRef):
                return env[op.id]
            if isinstance(op, GlobalRef):
                return ("array", op.name)
            raise TypeError(op)

        bmap = fn.block_map()
        block = fn.entry
        prev_label: str | None = None
        loc = fn.name

        while True:
            loc = f"{fn.name}:{block.label}"
            # Phis read their inputs atomically against the incoming edge.
            phi_updates = []
            for ins in block.instructions:
                if ins.opcode is not Opcode.PHI:
                    break
                self.charge(Opcode.PHI)
                chosen = None
                for val, label in ins.phi_incoming():
                    if label == prev_label:
                        chosen = value(val)
                        break
                if chosen is None:
                    raise TrapError("phi-missing-incoming", loc)
                phi_updates.append((ins.result, chosen))
            for rid, v in phi_updates:
                env[rid] = v

            for ins in block.non_phis():
                op = ins.opcode
                self.charge(op)
                if op is Opcode.GETELEMENTPTR:
                    base = ins.operands[0]
                    idx = value(ins.operands[1])
                    if isinstance(base, GlobalRef):
                        name = base.name
                    else:
                        ref = env[base.id]
                        name = ref[1]  # type: ignore[index]
                    env[ins.result] = ("elem", name, idx)
                elif op is Opcode.LOAD:
                    _, name, idx = value(ins.operands[0])  # type: ignore[misc]
                    arr = self.memory.arrays[name]
                    if not (0 <= idx < len(arr)):
                        raise TrapError("out-of-bounds", loc)
                    env[ins.result] = arr[idx]
                elif op is Opcode.STORE:
                    v = value(ins.operands[0])
                    _, name, idx = value(ins.operands[1])  # type: ignore[misc]
                    arr = self.memory.arrays[name]
                    if not (0 <= idx < len(arr)):
                        raise TrapError("out-of-bounds", loc)
                    arr[idx] = wrap32(v)  # type: ignore[arg-type]
                elif op is Opcode.SELECT:
                    c = value(ins.operands[0])
                    env[ins.result] = value(ins.operands[1]) if c else value(
                        ins.operands[2])
                elif op is Opcode.CALL:
                    callee = self.module.function(ins.callee)
                    call_args = []
                    for a in ins.operands:
                        v = value(a)
                        call_args.append(v)
                    rv = self.run_function(callee, call_args)
                    if ins.result is not None:
                        env[ins.result] = rv
                else:
                    vals = [value(o) for o in ins.operands]
                    folded = fold_constant(op, vals, ins.pred)  # type: ignore[arg-type]
                    if folded is None:
                        raise TrapError("division", loc)
                    env[ins.result] = folded

            term = block.terminator
            assert term is not None
            self.charge(term.opcode)
            if term.opcode is Opcode.RET:
                if not term.operands:
                    return None
                return value(term.operands[0])  # type: ignore[return-value]
            if term.opcode is Opcode.BR:
                target = term.operands[0].label  # type: ignore[union-attr]
            else:
                c = value(term.operands[0])
                target = (term.operands[1] if c else term.operands[2]).label  # type: ignore[union-attr]
            prev_label = block.label
            block = bmap[target]


def interpret(module: IrModule, inputs: list, fuel: int = DEFAULT_FUEL) -> ExecResult:
    """Run the top function on ``inputs`` (ints for scalars, int lists for arrays)."""
    if fuel <= 0:
        raise ValueError("fuel must be positive")
    top = module.top
    if len(inputs) != len(top.params):
        raise ValueError(f"expected {len(top.params)} inputs, got {len(inputs)}")

    memory = _Memory()
    for g in module.global_arrays:
        init = list(g.init) if g.init is not None else [0] * g.length
        memory.arrays[g.name] = [wrap32(v) for v in init]

    args: list = []
    arg_arrays: list[str] = []
    for i, ((pid, ty), val) in enumerate(zip(top.params, inputs)):
        if ty.is_array:
            data = [wrap32(int(v)) for v in val]
            if len(data) != ty.length:
                raise ValueError(f"input {i} length {len(data)} != {ty.length}")
            name = f"%{pid}"
            memory.arrays[name] = data
            args.append(("array", name))
            arg_arrays.append(name)
        else:
            args.append(wrap32(int(val)))

    machine = _Machine(module, memory, fuel)
    rv = machine.run_function(top, args)

    h = hashlib.sha256()
    for g in module.global_arrays:
        h.update(g.name.encode())
        h.update(b"".join((v & _MASK).to_bytes(4, "little")
                          for v in memory.arrays[g.name]))
    for name in arg_arrays:
        h.update(name.encode())
        h.update(b"".join((v & _MASK).to_bytes(4, "little")
                          for v in memory.arrays[name]))

    return ExecResult(rv, h.hexdigest(), dict(machine.op_counts),
                      machine.executed)
