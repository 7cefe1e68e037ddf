"""Command-line entry point: ``higen <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

log = logging.getLogger("higen")


def _threads():
    env = os.environ.get("HIGEN_THREADS")
    if env:
        import torch
        torch.set_num_threads(max(1, int(env)))


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


# ------------------------------------------------------------------ commands

def cmd_synth_sbm(args) -> int:
    from .datasets import SbmSpec, save_dataset, synth_sbm
    spec = SbmSpec(args.num, tuple(args.communities), tuple(args.sizes), args.p_intra, args.p_inter, args.seed)
    graphs, blocks = synth_sbm(spec, return_blocks=True)
    save_dataset(graphs, args.out)
    if args.blocks:
        Path(args.blocks).write_text(json.dumps([b.tolist() for b in blocks]))
    print(f"wrote {len(graphs)} graphs to {args.out} "
          f"(nodes {min(g.node_count for g in graphs)}-{max(g.node_count for g in graphs)})")
    return 0


def cmd_split(args) -> int:
    from .datasets import load_dataset, save_dataset, split
    graphs = load_dataset(args.input)
    parts = split(graphs, args.ratios, args.seed)
    names = args.names or (["train", "test"] if len(parts) == 2 else
                           ["train", "val", "test"] if len(parts) == 3 else [f"part{i}" for i in range(len(parts))])
    if len(names) != len(parts):
        raise ValueError("--names must match the number of ratios")
    out = _out_dir(args.out)
    for name, part in zip(names, parts):
        save_dataset(part, out / f"{name}.txt")
        print(f"{name}\t{len(part)}")
    return 0


def cmd_build_hg(args) -> int:
    from .datasets import load_dataset
    from .graph import build_hg, validate_hg, write_hg_jsonl
    from .partition import build_partition_stack
    graphs = load_dataset(args.input)
    external = None
    if args.assignments:
        with open(args.assignments) as fh:
            external = [json.loads(line) for line in fh if line.strip()]
        if len(external) != len(graphs):
            raise ValueError(f"{len(external)} assignment records for {len(graphs)} graphs")
    hgs = []
    for i, g in enumerate(graphs):
        if external is not None:
            stack = [np.asarray(a, dtype=np.int64) for a in external[i]]
            if len(stack) != args.depth:
                raise ValueError(f"graph {i}: {len(stack)} assignments for depth {args.depth}")
        else:
            stack = build_partition_stack(g, args.depth, seed=args.seed + i)
        hg = build_hg(g, stack)
        validate_hg(hg)
        hgs.append(hg)
    write_hg_jsonl(hgs, args.out)
    print(f"wrote {len(hgs)} hierarchies of depth {args.depth} to {args.out}")
    return 0


def _load_config(path) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    unknown = set(doc) - {"model", "train"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    return doc


def cmd_train(args) -> int:
    from .graph import read_hg_jsonl
    from .model import ModelConfig
    from .plotting import loss_curve
    from .training import TrainConfig, config_dict, train
    doc = _load_config(args.config)
    hgs = read_hg_jsonl(args.hg)
    if not hgs:
        raise ValueError("no hierarchies in input")
    model_doc = dict(doc.get("model", {}))
    model_doc.setdefault("depth", hgs[0].depth)
    train_doc = dict(doc.get("train", {}))
    if args.seed is not None:
        train_doc["seed"] = args.seed
    if args.steps is not None:
        train_doc["steps"] = args.steps
    mcfg, tcfg = ModelConfig.from_dict(model_doc), TrainConfig.from_dict(train_doc)
    if any(hg.depth != mcfg.depth for hg in hgs):
        raise ValueError(f"hierarchy depth differs from model depth {mcfg.depth}")
    out = _out_dir(args.out)
    (out / "config.json").write_text(_dump(config_dict(mcfg, tcfg)))

    def progress(row):
        if row["step"] % max(1, tcfg.steps // 20) == 0:
            log.info("step %d nll %.4f (%.1fs)", row["step"], row["nll"], row["seconds"])

    model, rows = train(hgs, mcfg, tcfg, out / "train_log.csv", progress=progress)
    ckpt = model.save(out)
    loss_curve(rows, out / "loss.png")
    print(f"checkpoint {ckpt}; final nll {rows[-1]['nll']:.4f}")
    return 0


def cmd_generate(args) -> int:
    from .datasets import save_dataset
    from .generation import GenConfig, generate_graph
    from .graph import write_hg_jsonl
    from .model import HiGenModel
    model = HiGenModel.load(args.ckpt)
    cfg = GenConfig(args.variant, args.bipartite, args.max_nodes, args.seed)
    rng = np.random.default_rng(args.seed)
    leaves, traces = [], []
    capped = non_simple = 0
    t0 = time.time()
    for _ in range(args.num):
        leaf, hg = generate_graph(model, cfg, rng)
        leaves.append(leaf)
        traces.append(hg)
        capped += hg.meta["capped"]
        non_simple += hg.meta["non_simple"]
    save_dataset(leaves, args.out)
    if args.trace:
        write_hg_jsonl(traces, args.trace)
    print(f"wrote {len(leaves)} graphs to {args.out} in {time.time() - t0:.1f}s "
          f"(capped communities {capped}, non-simple rows {non_simple})")
    return 0


def cmd_eval(args) -> int:
    from .datasets import load_dataset
    from .evaluation import METRICS, evaluate, worker_count, write_stats_csv
    from .plotting import modularity_boxes, stat_comparison
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    bad = set(metrics) - set(METRICS)
    if bad:
        raise ValueError(f"unknown metrics {sorted(bad)}")
    sigmas = {}
    for item in args.sigma or []:
        name, _, val = item.partition("=")
        sigmas[name] = float(val)
    samples, reference = load_dataset(args.samples), load_dataset(args.reference)
    report, sa, sb = evaluate(samples, reference, metrics, args.kernel, sigmas, args.seed, worker_count())
    out = _out_dir(args.out)
    (out / "report.json").write_text(_dump(report))
    write_stats_csv(out / "stats.csv", {"samples": (samples, sa), "reference": (reference, sb)})
    stat_comparison(sa, sb, out / "stats.png", metrics)
    modularity_boxes(report["modularity"]["samples"]["values"],
                     report["modularity"]["reference"]["values"], out / "modularity.png")
    summary = {m: r["value"] for m, r in report["mmd"].items()}
    summary.update({f"modularity_{k}": round(v["mean"], 4) for k, v in report["modularity"].items()})
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_oracle_check(args) -> int:
    from .distributions import MultinomialParams, ordered_groupings
    from .oracles import conditional_rows, exactness_rows, random_theta, sampler_tv
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for row in exactness_rows(args.max_dims, args.max_total, args.trials, rng):
        worst = max(worst, row["max_abs_err"], row["stick_break_max_abs_err"])
        print(json.dumps(row))
    for row in conditional_rows(args.max_dims, args.max_total, max(1, args.trials // 5), rng):
        worst = max(worst, row["max_abs_err"])
        print(json.dumps(row))
    dim = min(args.max_dims, 3)
    grouping = ordered_groupings(dim)[-1]
    params = MultinomialParams(args.max_total, tuple(random_theta(dim, rng, 0.0)))
    tv = sampler_tv(params, grouping, args.draws, rng)
    print(json.dumps({"check": "sampler", "dim": dim, "total": args.max_total, "grouping": grouping,
                      "draws": args.draws, "tv": tv}))
    ok = worst <= args.tol and tv <= args.tv_tol
    print(json.dumps({"check": "summary", "max_abs_err": worst, "tv": tv, "pass": ok}))
    return 0 if ok else 1


def cmd_grad_check(args) -> int:
    import torch
    from .datasets import toy_graph
    from .graph import build_hg, read_hg_jsonl
    from .model import ModelConfig, prepare_hg
    from .partition import build_partition_stack
    from .training import batch_nll, grad_check_table, init_model
    if args.hg:
        hg = read_hg_jsonl(args.hg)[args.index]
    else:
        g = toy_graph()
        hg = build_hg(g, build_partition_stack(g, 2, seed=args.seed))
    cfg = ModelConfig(depth=hg.depth, hidden_dim=args.hidden, layers=2, k_eig=4, k_rw=4,
                      mixtures=3, variant=args.variant)
    model = init_model(cfg, [hg], args.seed)
    data = prepare_hg(hg, cfg)
    params = dict(model.named_parameters())

    def loss(_params):
        return batch_nll(model, [data], include_root=False)[0].tensor

    with torch.enable_grad():
        table = grad_check_table(loss, params, np.random.default_rng(args.seed), coords=args.coords)
    w = csv.writer(sys.stdout, delimiter="\t")
    w.writerow(["tensor", "max_rel_err"])
    for name, err in table.items():
        w.writerow([name, f"{err:.3e}"])
    worst = max(table.values())
    print(f"max relative error {worst:.3e} (tolerance {args.tol:g})")
    return 0 if worst <= args.tol else 1


def level_rows(hgs) -> list[dict]:
    """Per-level dataset summary: node counts, community counts, sizes, modularity."""
    from .partition import modularity
    depth = hgs[0].depth
    rows = []
    for l in range(0, depth + 1):
        nodes = [hg.levels[l].node_count for hg in hgs]
        row = {"level": l, "mean_nodes": float(np.mean(nodes)), "w0": sorted({hg.levels[l].total_weight for hg in hgs})}
        if l >= 1:
            sizes = [b - a for hg in hgs for _, a, b in hg.community_slices(l)]
            qs = [modularity(hg.levels[l], hg.parent_of(l)) for hg in hgs if hg.levels[l].total_weight > 0]
            row.update(communities=float(np.mean([hg.levels[l - 1].node_count for hg in hgs])),
                       max_community=int(max(sizes)), mean_community=float(np.mean(sizes)),
                       modularity=float(np.mean(qs)) if qs else 0.0)
        rows.append(row)
    return rows


def cmd_inspect(args) -> int:
    from .graph import read_hg_jsonl, validate_hg
    from .plotting import hierarchy_summary
    hgs = read_hg_jsonl(args.hg)
    if not hgs:
        raise ValueError("no hierarchies in input")
    for hg in hgs:
        validate_hg(hg, leaf_simple=False)
    w = csv.writer(sys.stdout, delimiter="\t")
    w.writerow(["graph", "level", "nodes", "w0", "communities", "max_community", "modularity"])
    from .partition import modularity
    for gi, hg in enumerate(hgs[: args.limit]):
        for l, g in enumerate(hg.levels):
            if l == 0:
                w.writerow([gi, l, g.node_count, g.total_weight, "", "", ""])
                continue
            sizes = [b - a for _, a, b in hg.community_slices(l)]
            q = modularity(g, hg.parent_of(l)) if g.total_weight > 0 else 0.0
            w.writerow([gi, l, g.node_count, g.total_weight, len(sizes), max(sizes), f"{q:.4f}"])
    rows = level_rows(hgs)
    print()
    print(_dump({"graphs": len(hgs), "levels": rows}))
    if args.out:
        out = _out_dir(args.out)
        (out / "levels.json").write_text(_dump(rows))
        hierarchy_summary(rows, out / "levels.png")
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="higen", description="Hierarchical coarse-to-fine graph generation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    s = sub.add_parser("synth-sbm", help="write planted-partition graphs as edge lists")
    s.add_argument("--out", required=True)
    s.add_argument("--num", type=int, default=200)
    s.add_argument("--communities", type=int, nargs=2, default=(2, 5), metavar=("LO", "HI"))
    s.add_argument("--sizes", type=int, nargs=2, default=(20, 40), metavar=("LO", "HI"))
    s.add_argument("--p-intra", type=float, default=0.3)
    s.add_argument("--p-inter", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--blocks", help="optional JSON file for planted block labels")
    s.set_defaults(func=cmd_synth_sbm)

    s = sub.add_parser("split", help="seeded split of an edge-list corpus")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--ratios", type=float, nargs="+", default=(0.8, 0.2))
    s.add_argument("--names", nargs="+")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("build-hg", help="partition graphs and write hierarchies (JSON lines)")
    s.add_argument("--input", required=True)
    s.add_argument("--depth", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--assignments", help="JSON lines, one list of bottom-up assignments per graph")
    s.set_defaults(func=cmd_build_hg)

    s = sub.add_parser("train", help="fit a model to hierarchies")
    s.add_argument("--hg", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--steps", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", help="sample graphs from a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--num", type=int, default=10)
    s.add_argument("--variant", choices=("higen-m", "higen"))
    s.add_argument("--bipartite", choices=("joint", "sequential"))
    s.add_argument("--max-nodes", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--trace", help="optional JSON lines file for the sampled hierarchies")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("eval", help="MMD and modularity report of samples against a reference set")
    s.add_argument("--samples", required=True)
    s.add_argument("--reference", required=True)
    s.add_argument("--metrics", default="degree,clustering,orbit,spectral")
    s.add_argument("--kernel", choices=("tv", "gaussian-emd"), default="tv")
    s.add_argument("--sigma", action="append", metavar="METRIC=VALUE")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="eval_out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("oracle-check", help="brute-force checks of the multinomial factorisation")
    s.add_argument("--max-dims", type=int, default=4)
    s.add_argument("--max-total", type=int, default=5)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--draws", type=int, default=200_000)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--tv-tol", type=float, default=0.01)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_oracle_check)

    s = sub.add_parser("grad-check", help="autograd gradient against central differences")
    s.add_argument("--hg", help="JSON lines file; defaults to a 6-node toy hierarchy")
    s.add_argument("--index", type=int, default=0)
    s.add_argument("--hidden", type=int, default=8)
    s.add_argument("--variant", choices=("higen-m", "higen"), default="higen-m")
    s.add_argument("--coords", type=int, default=10)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_grad_check)

    s = sub.add_parser("inspect", help="per-level statistics of hierarchies")
    s.add_argument("--hg", required=True)
    s.add_argument("--limit", type=int, default=20, help="graphs listed individually")
    s.add_argument("--out", help="directory for levels.json and levels.png")
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _threads()
    try:
        return args.func(args)
    except (ValueError, OSError, AssertionError) as exc:
        print(f"higen {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
