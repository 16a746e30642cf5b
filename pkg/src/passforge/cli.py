"""passforge command-line interface.

Subcommands: parse, verify, graph, run, estimate, interp, hged, corpus-gen,
dataset-gen, pretrain, rl-train, search, infer, report.  Every subcommand
honors --seed and writes byte-identical primary outputs across repeated runs;
generative stages stamp their outputs with an input digest and re-running a
completed stage is a no-op.

Exit codes: 0 ok, 1 user error (bad input, failed verification), 2 internal
error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import traceback

import numpy as np

from . import __version__
from .corpus import corpus_gen, random_inputs
from .dataset import dataset_gen, load_dataset, save_dataset
from .graphs import build_het_graph, to_dot, to_json
from .hged import DEFAULT_BEAM_WIDTH, EditCostModel, hged
from .ir import (
    FuelExhausted, IrSyntaxError, TrapError, VerifyError, interpret,
    parse_module, print_module, verify_module,
)
from .passes import (
    PassError, PassId, PragmaError, apply_pragma_passes, apply_sequence,
    pass_catalog,
)
from .qor import EstimateError, OpCostTable, dynamic_cycle_oracle, estimate
from .reporting import MethodResult, geomean, make_folds, report


class UserError(Exception):
    pass


def _read_module(path: str):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise UserError(f"cannot read {path}: {e}")
    try:
        return parse_module(text)
    except (IrSyntaxError, VerifyError) as e:
        raise UserError(f"{path}: {e}")


def _load_costs(path: str | None) -> OpCostTable:
    if path is None:
        return OpCostTable()
    try:
        with open(path) as f:
            return OpCostTable.from_dict(json.load(f))
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise UserError(f"bad cost table {path}: {e}")


def _say(args, *message):
    if not args.quiet:
        print(*message)


def _stamp_path(primary_out: str) -> str:
    return primary_out + ".stamp"


def _up_to_date(args, primary_out: str, digest: str, extra_outputs=()) -> bool:
    stamp = _stamp_path(primary_out)
    outputs = [primary_out, *extra_outputs]
    if os.path.exists(stamp) and all(os.path.exists(o) for o in outputs):
        with open(stamp) as f:
            if f.read().strip() == digest:
                _say(args, f"{primary_out}: up to date (digest {digest})")
                return True
    return False


def _write_stamp(primary_out: str, digest: str) -> None:
    with open(_stamp_path(primary_out), "w") as f:
        f.write(digest + "\n")


def _input_digest(*items) -> str:
    h = hashlib.sha256()
    h.update(__version__.encode())
    for item in items:
        h.update(b"\x00")
        h.update(str(item).encode())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Simple IR-level commands
# ---------------------------------------------------------------------------

def cmd_parse(args) -> int:
    m = _read_module(args.file)
    text = print_module(m)
    if args.emit:
        with open(args.emit, "w") as f:
            f.write(text)
        _say(args, f"wrote {args.emit}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_verify(args) -> int:
    try:
        with open(args.file) as f:
            text = f.read()
    except OSError as e:
        raise UserError(f"cannot read {args.file}: {e}")
    try:
        m = parse_module(text, verify=False)
    except IrSyntaxError as e:
        raise UserError(f"{args.file}: {e}")
    violations = verify_module(m)
    if not violations:
        _say(args, "ok")
        return 0
    for v in violations:
        print(str(v), file=sys.stderr)
    return 1


def cmd_graph(args) -> int:
    m = _read_module(args.file)
    g = build_het_graph(m, args.fn)
    if args.dot:
        with open(args.dot, "w") as f:
            f.write(to_dot(g))
        _say(args, f"wrote {args.dot}")
    if args.json_out:
        with open(args.json_out, "w") as f:
            f.write(to_json(g) + "\n")
        _say(args, f"wrote {args.json_out}")
    if args.json or (not args.dot and not args.json_out):
        print(to_json(g))
    return 0


def cmd_run(args) -> int:
    m = _read_module(args.file)
    try:
        seq = [PassId(name.strip()) for name in args.passes.split(",") if name.strip()]
    except ValueError as e:
        raise UserError(f"unknown pass: {e}")
    try:
        out, results = apply_sequence(m, seq)
    except (PassError, PragmaError) as e:
        print(f"pass failure: {e}", file=sys.stderr)
        return 2
    if args.emit:
        with open(args.emit, "w") as f:
            f.write(print_module(out))
        _say(args, f"wrote {args.emit}")
    else:
        sys.stdout.write(print_module(out))
    if args.stats:
        stats = [{"pass": r.pass_id.value, "changed": r.changed,
                  "instructions_removed": r.instructions_removed,
                  "instructions_added": r.instructions_added,
                  "blocks_removed": r.blocks_removed} for r in results]
        with open(args.stats, "w") as f:
            json.dump(stats, f, indent=1, sort_keys=True)
            f.write("\n")
    return 0


def cmd_estimate(args) -> int:
    m = _read_module(args.file)
    costs = _load_costs(args.costs)
    try:
        if not args.raw:
            m = apply_pragma_passes(m)
        rep = estimate(m, costs)
    except (PragmaError, EstimateError) as e:
        raise UserError(str(e))
    doc = rep.to_dict()
    if args.json_out:
        with open(args.json_out, "w") as f:
            json.dump(doc, f, indent=1, sort_keys=True)
            f.write("\n")
        _say(args, f"wrote {args.json_out}")
    if args.json or not args.json_out:
        print(json.dumps(doc, sort_keys=True))
    return 0


def cmd_interp(args) -> int:
    m = _read_module(args.file)
    if args.inputs:
        try:
            with open(args.inputs) as f:
                inputs = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise UserError(f"bad inputs file: {e}")
    else:
        rng = np.random.default_rng(args.seed)
        inputs = random_inputs(m, rng)
    try:
        res = interpret(m, inputs, fuel=args.fuel)
    except (TrapError, FuelExhausted) as e:
        raise UserError(f"execution failed: {e}")
    doc = {"return_value": res.return_value,
           "memory_digest": res.memory_digest,
           "executed_instructions": res.executed_instructions,
           "dynamic_op_counts": res.dynamic_op_counts}
    if args.oracle:
        doc["dynamic_cycles"] = dynamic_cycle_oracle(
            m, inputs, _load_costs(args.costs), fuel=args.fuel)
    print(json.dumps(doc, sort_keys=True))
    return 0


def cmd_hged(args) -> int:
    m1 = _read_module(args.file_a)
    m2 = _read_module(args.file_b)
    g1 = build_het_graph(m1, args.fn)
    g2 = build_het_graph(m2, args.fn)
    mode, width = args.mode, DEFAULT_BEAM_WIDTH
    if mode.startswith("beam:"):
        mode, width = "beam", int(mode.split(":", 1)[1])
    costs = EditCostModel()
    if args.costs:
        with open(args.costs) as f:
            costs = EditCostModel.from_dict(json.load(f))
    result = hged(g1, g2, costs, mode=mode, beam_width=width)
    doc = {"stage1_cost": result.stage1_cost, "stage2_cost": result.stage2_cost,
           "total": result.total, "normalized": result.normalized,
           "exact": result.exact,
           "block_mapping": {str(k): v for k, v in
                             sorted(result.block_mapping.items())}}
    print(json.dumps(doc, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# Generative stages
# ---------------------------------------------------------------------------

def cmd_corpus_gen(args) -> int:
    digest = _input_digest("corpus", args.n, args.seed)
    manifest_path = os.path.join(args.out, "manifest.json")
    if _up_to_date(args, manifest_path, digest):
        return 0
    os.makedirs(args.out, exist_ok=True)
    designs = corpus_gen(args.n, args.seed)
    index = []
    for name, text in designs:
        path = os.path.join(args.out, name + ".ir")
        with open(path, "w") as f:
            f.write(text)
        index.append({"name": name, "file": name + ".ir",
                      "digest": parse_module(text).digest()})
    with open(manifest_path, "w") as f:
        json.dump({"seed": args.seed, "n": args.n, "designs": index},
                  f, indent=1, sort_keys=True)
        f.write("\n")
    _write_stamp(manifest_path, digest)
    _say(args, f"wrote {len(designs)} designs to {args.out}")
    return 0


def _load_corpus_dir(path: str) -> list[tuple[str, str]]:
    manifest = os.path.join(path, "manifest.json")
    out = []
    if os.path.exists(manifest):
        with open(manifest) as f:
            doc = json.load(f)
        for rec in doc["designs"]:
            with open(os.path.join(path, rec["file"])) as f:
                out.append((rec["name"], f.read()))
        return out
    for fname in sorted(os.listdir(path)):
        if fname.endswith(".ir"):
            with open(os.path.join(path, fname)) as f:
                out.append((fname[:-3], f.read()))
    if not out:
        raise UserError(f"no .ir designs found in {path}")
    return out


def cmd_dataset_gen(args) -> int:
    designs = _load_corpus_dir(args.corpus)
    digest = _input_digest("dataset", args.seqs, args.max_len, args.seed,
                           *(d for d, _ in designs))
    pairs_path = os.path.join(args.out, "pairs.json")
    if _up_to_date(args, pairs_path, digest):
        return 0
    log = (lambda msg: print(msg, file=sys.stderr)) if not args.quiet else None
    ds = dataset_gen(designs, args.seqs, args.max_len, args.seed,
                     intra_pair_cap=args.intra_cap,
                     cross_pairs=args.cross_pairs, log_fn=log)
    os.makedirs(args.out, exist_ok=True)
    save_dataset(ds, args.out)
    _write_stamp(pairs_path, digest)
    _say(args, f"dataset: {len(ds.variants)} variants, {len(ds.pairs)} pairs "
               f"({ds.meta.get('skipped', 0)} skipped sequences)")
    return 0


def cmd_pretrain(args) -> int:
    from .embedder import (
        PretrainConfig, RgcnConfig, graph_data, pretrain, save_checkpoint,
    )
    from .graphs import homogenize

    digest = _input_digest("pretrain", args.corpus, args.pairs or "",
                           args.seed, args.epochs, args.hidden,
                           args.embed_dim, args.homogenize)
    if _up_to_date(args, args.out, digest):
        return 0
    ds = load_dataset(args.corpus)
    if args.pairs:
        from .embedder import TrainPair
        with open(args.pairs) as f:
            doc = json.load(f)
        ds.pairs = [TrainPair(p["i"], p["j"], p["label"], p["split"])
                    for p in doc["pairs"]]
    graphs = ds.graphs()
    if args.homogenize:
        graphs = [homogenize(g) for g in graphs]
        relations = ("data:fwd", "data:rev")
    else:
        from .embedder import DEFAULT_RELATIONS
        relations = DEFAULT_RELATIONS
    model_cfg = RgcnConfig(hidden_dim=args.hidden, embed_dim=args.embed_dim,
                           relations=relations)
    train_cfg = PretrainConfig(seed=args.seed, max_epochs=args.epochs,
                               patience=args.patience)
    log = None
    if not args.quiet:
        log = lambda e: print(f"epoch {e.epoch}: train {e.train_loss:.5f} "
                              f"val {e.val_loss:.5f}", file=sys.stderr)
    params, history = pretrain(graphs, ds.pairs, model_cfg, train_cfg, log_fn=log)
    save_checkpoint(args.out, params, model_cfg.to_dict(), args.seed,
                    extra={"epochs_run": len(history),
                           "final_val": history[-1].val_loss if history else None,
                           "homogenized": bool(args.homogenize)})
    _write_stamp(args.out, digest)
    _say(args, f"wrote {args.out} ({len(history)} epochs)")
    return 0


def _obs_fn_from(args, obs_dim_holder: dict):
    """Observation function per --obs / --embed; sets obs_dim_holder['dim']."""
    from .embedder import RgcnConfig, embed as embed_fn, featurize_baseline, load_checkpoint

    if args.obs == "rgcn":
        if not args.embed:
            raise UserError("--obs rgcn requires --embed CKPT")
        params, cfg_doc, _ = load_checkpoint(args.embed)
        cfg = RgcnConfig.from_dict(cfg_doc)
        obs_dim_holder["dim"] = cfg.embed_dim
        return lambda g: embed_fn(g, params, cfg)
    if args.obs == "histogram":
        obs_dim_holder["dim"] = args.obs_dim
        return lambda g: featurize_baseline(g, "opcode_histogram", args.obs_dim)
    if args.obs == "zero":
        obs_dim_holder["dim"] = args.obs_dim
        return lambda g: featurize_baseline(g, "all_zero", args.obs_dim)
    raise UserError(f"unknown observation mode {args.obs!r}")


def cmd_rl_train(args) -> int:
    from .agent import N_ACTIONS, PpoConfig, train
    from .embedder import save_checkpoint

    ppo_doc = {}
    if args.config:
        with open(args.config) as f:
            ppo_doc = json.load(f)
    digest = _input_digest("rl", args.corpus, args.seed, args.obs,
                           args.embed or "", json.dumps(ppo_doc, sort_keys=True))
    if _up_to_date(args, args.out, digest, extra_outputs=[args.log] if args.log else ()):
        return 0
    designs_text = _load_corpus_dir(args.corpus)
    designs = [(n, parse_module(t)) for n, t in designs_text]
    holder: dict = {}
    obs_fn = _obs_fn_from(args, holder)
    config = PpoConfig(seed=args.seed, **ppo_doc)
    log = None
    if not args.quiet:
        log = lambda p: print(f"iter {p.iteration}: return {p.mean_return:.4f} "
                              f"ratio {p.mean_cycles_ratio:.4f}", file=sys.stderr)
    params, curve = train(designs, obs_fn, config, args.seed, holder["dim"],
                          log_fn=log)
    save_checkpoint(args.out, params,
                    {"kind": "policy", "obs_dim": holder["dim"],
                     "n_actions": N_ACTIONS, "obs": args.obs,
                     "ppo": {"hidden": list(config.hidden)}},
                    args.seed)
    if args.log:
        with open(args.log, "w") as f:
            f.write("iteration,mean_return,mean_cycles_ratio\n")
            for p in curve:
                f.write(f"{p.iteration},{p.mean_return:.6f},"
                        f"{p.mean_cycles_ratio:.6f}\n")
    _write_stamp(args.out, digest)
    _say(args, f"wrote {args.out}")
    return 0


def cmd_search(args) -> int:
    from .agent import infer as rl_infer, search_baseline
    from .embedder import load_checkpoint

    m = _read_module(args.design)
    costs = _load_costs(args.costs)
    t0 = time.time()
    if args.method == "rl":
        if not (args.policy and (args.embed or args.obs != "rgcn")):
            raise UserError("--method rl requires --policy (and --embed for rgcn)")
        holder: dict = {}
        obs_fn = _obs_fn_from(args, holder)
        policy_params, _, _ = load_checkpoint(args.policy)
        seq, cycles, best_idx = rl_infer(m, policy_params, obs_fn, costs)
        result = {"method": "rl", "sequence": [p.value for p in seq],
                  "cycles": cycles[best_idx], "baseline_cycles": cycles[0],
                  "trace": cycles}
    else:
        sr = search_baseline(m, args.method, seed=args.seed, costs=costs,
                             budget=args.budget)
        result = {"method": sr.method,
                  "sequence": [p.value for p in sr.sequence],
                  "cycles": sr.cycles, "baseline_cycles": sr.baseline_cycles,
                  "evaluations": sr.evaluations}
    result["wall_time_s"] = round(time.time() - t0, 3)
    text = json.dumps(result, sort_keys=True)
    if args.out:
        with open(args.out, "w") as f:
            deterministic = dict(result)
            deterministic.pop("wall_time_s", None)
            json.dump(deterministic, f, sort_keys=True, indent=1)
            f.write("\n")
    print(text)
    return 0


def cmd_infer(args) -> int:
    from .agent import infer as rl_infer
    from .embedder import load_checkpoint

    m = _read_module(args.design)
    holder: dict = {}
    obs_fn = _obs_fn_from(args, holder)
    policy_params, _, _ = load_checkpoint(args.policy)
    seq, cycles, best_idx = rl_infer(m, policy_params, obs_fn,
                                     _load_costs(args.costs))
    doc = {"sequence": [p.value for p in seq], "cycles": cycles[best_idx],
           "baseline_cycles": cycles[0], "trace": cycles}
    print(json.dumps(doc, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    results = []
    for path in args.results:
        with open(path) as f:
            doc = json.load(f)
        records = doc if isinstance(doc, list) else [doc]
        for rec in records:
            results.append(MethodResult.from_dict(rec))
    csv_text, summary = report(results)
    if args.out_csv:
        with open(args.out_csv, "w") as f:
            f.write(csv_text)
        _say(args, f"wrote {args.out_csv}")
    else:
        sys.stdout.write(csv_text)
    if not args.quiet:
        print(summary)
    return 0


def cmd_catalog(args) -> int:
    rows = []
    for i, entry in enumerate(pass_catalog()):
        rows.append({"index": i, "pass": entry.pass_id.value,
                     "category": entry.category,
                     "pragma_anchored": entry.pragma_anchored,
                     "description": entry.description})
    print(json.dumps(rows, indent=1, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="passforge",
        description="Structure-aware compiler pass ordering on a mini SSA IR.")
    parser.add_argument("--version", action="version", version=__version__)

    def common(sub):
        sub.add_argument("--seed", type=int, default=0)
        sub.add_argument("--costs", default=None,
                         help="cost-table JSON overriding the defaults")
        sub.add_argument("--json", action="store_true",
                         help="prefer JSON on stdout")
        sub.add_argument("--quiet", action="store_true")
        return sub

    subs = parser.add_subparsers(dest="command", required=True)

    p = common(subs.add_parser("parse", help="parse, verify, and reprint"))
    p.add_argument("file")
    p.add_argument("--emit")
    p.set_defaults(handler=cmd_parse)

    p = common(subs.add_parser("verify", help="report structural violations"))
    p.add_argument("file")
    p.set_defaults(handler=cmd_verify)

    p = common(subs.add_parser("graph", help="emit the heterogeneous graph"))
    p.add_argument("file")
    p.add_argument("--fn", default=None)
    p.add_argument("--dot")
    p.add_argument("--json-out", dest="json_out")
    p.set_defaults(handler=cmd_graph)

    p = common(subs.add_parser("run", help="apply a pass sequence"))
    p.add_argument("file")
    p.add_argument("-p", "--passes", required=True,
                   help='comma-separated, e.g. "sccp,simplifycfg,adce"')
    p.add_argument("--emit")
    p.add_argument("--stats")
    p.set_defaults(handler=cmd_run)

    p = common(subs.add_parser("estimate", help="latency/resource estimate"))
    p.add_argument("file")
    p.add_argument("--raw", action="store_true",
                   help="skip pragma expansion before estimating")
    p.add_argument("--json-out", dest="json_out")
    p.set_defaults(handler=cmd_estimate)

    p = common(subs.add_parser("interp", help="run the reference interpreter"))
    p.add_argument("file")
    p.add_argument("--inputs", help="JSON list matching the top signature")
    p.add_argument("--fuel", type=int, default=10**8)
    p.add_argument("--oracle", action="store_true",
                   help="also report latency-weighted dynamic cycles")
    p.set_defaults(handler=cmd_interp)

    p = common(subs.add_parser("hged", help="heterogeneous graph edit distance"))
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--fn", default=None)
    p.add_argument("--mode", default="beam:32", help="exact | beam:WIDTH")
    p.set_defaults(handler=cmd_hged)

    p = common(subs.add_parser("corpus-gen", help="generate synthetic kernels"))
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=24)
    p.set_defaults(handler=cmd_corpus_gen)

    p = common(subs.add_parser("dataset-gen",
                               help="pass-sequence variants + pair labels"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seqs", type=int, default=20)
    p.add_argument("--max-len", type=int, default=8)
    p.add_argument("--intra-cap", type=int, default=40)
    p.add_argument("--cross-pairs", type=int, default=300)
    p.set_defaults(handler=cmd_dataset_gen)

    p = common(subs.add_parser("pretrain", help="contrastive embedder training"))
    p.add_argument("--corpus", required=True,
                   help="dataset directory from dataset-gen")
    p.add_argument("--pairs", default=None,
                   help="pairs file (default: <corpus>/pairs.json)")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--patience", type=int, default=15)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--homogenize", action="store_true",
                   help="single-relation ablation model")
    p.set_defaults(handler=cmd_pretrain)

    p = common(subs.add_parser("rl-train", help="train the PPO policy"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--embed", default=None)
    p.add_argument("--obs", default="rgcn", choices=["rgcn", "histogram", "zero"])
    p.add_argument("--obs-dim", type=int, default=32)
    p.add_argument("--config", default=None, help="PPO config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="reward curve CSV")
    p.set_defaults(handler=cmd_rl_train)

    p = common(subs.add_parser("search", help="search for a pass sequence"))
    p.add_argument("--method", required=True,
                   choices=["rl", "greedy", "genetic", "random"])
    p.add_argument("--design", required=True)
    p.add_argument("--budget", type=int, default=64)
    p.add_argument("--embed", default=None)
    p.add_argument("--policy", default=None)
    p.add_argument("--obs", default="rgcn", choices=["rgcn", "histogram", "zero"])
    p.add_argument("--obs-dim", type=int, default=32)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_search)

    p = common(subs.add_parser("infer", help="policy inference on one design"))
    p.add_argument("--design", required=True)
    p.add_argument("--embed", default=None)
    p.add_argument("--policy", required=True)
    p.add_argument("--obs", default="rgcn", choices=["rgcn", "histogram", "zero"])
    p.add_argument("--obs-dim", type=int, default=32)
    p.set_defaults(handler=cmd_infer)

    p = common(subs.add_parser("report", help="tabulate method results"))
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--out-csv")
    p.set_defaults(handler=cmd_report)

    p = common(subs.add_parser("catalog", help="list the pass catalog"))
    p.set_defaults(handler=cmd_catalog)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except UserError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception:  # noqa: BLE001 - internal error boundary
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
