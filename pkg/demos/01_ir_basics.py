"""Parse a kernel, verify it, run it, and print its canonical form.

Run:  python3 demos/01_ir_basics.py
"""
import numpy as np

from passforge.corpus import case1_text, random_inputs
from passforge.ir import interpret, parse_module, print_module, verify_module

module = parse_module(case1_text())
print("verifier says:", verify_module(module) or "ok")
print()
print(print_module(module))

rng = np.random.default_rng(0)
inputs = random_inputs(module, rng)
result = interpret(module, inputs)
print(f"return value     : {result.return_value}")
print(f"executed         : {result.executed_instructions} instructions")
print(f"memory digest    : {result.memory_digest[:16]}...")
top_ops = sorted(result.dynamic_op_counts.items(), key=lambda kv: -kv[1])[:5]
print("hottest opcodes  :", ", ".join(f"{k}={v}" for k, v in top_ops))
