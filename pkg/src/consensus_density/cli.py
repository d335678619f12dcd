"""Command-line entry point: ``bench <verb> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import DEFAULT_ALGORITHMS, DatasetSpec, ProtocolConfig, load_dataset, run_and_report
from .consensus import ALGORITHMS, LINKAGES, MATRICES, ConsensusRequest, run_consensus
from .core import ValidationError, build_incidence, read_ensemble, read_labels, write_ensemble, write_labels
from .density import partition_score
from .graph import partition_graph, read_edge_list
from .kmeans import KMeansConfig, generate_base_clusterings
from .metrics import nmi

DISPLAY = {a.name: a for a in DEFAULT_ALGORITHMS}


def _cmd_run(args) -> int:
    overrides = {"master_seed": args.seed, "output": args.out, "workers": args.workers,
                 "repetitions": args.repetitions}
    cfg = ProtocolConfig.from_file(args.config, **overrides)
    records, code = run_and_report(cfg)
    failed = sum(r.status == "failed" for r in records)
    print(f"{len(records)} records written to {cfg.output}" + (f" ({failed} failed runs)" if failed else ""))
    return code


def _resolve_algorithm(name: str, linkage, matrix) -> tuple[str, dict]:
    if name in DISPLAY:
        spec = DISPLAY[name]
        options = dict(spec.options)
        algo = spec.algorithm
    elif name in ALGORITHMS:
        algo, options = name, {}
    else:
        choices = ", ".join(list(ALGORITHMS) + list(DISPLAY))
        raise ValidationError(f"unknown algorithm {name!r}; choose from {choices}")
    if linkage:
        options["linkage"] = linkage
    if matrix:
        options["matrix"] = matrix
    return algo, options


def _cmd_consensus(args) -> int:
    ensemble = read_ensemble(args.ensemble)
    algo, options = _resolve_algorithm(args.algo, args.linkage, args.matrix)
    fit = run_consensus(ConsensusRequest(ensemble, args.k, algo, args.seed, options))
    if args.out:
        write_labels(args.out, fit.partitioning)
        side = fit.sidecar()
        side.update({"algorithm": algo, "options": options})
        Path(str(args.out) + ".json").write_text(json.dumps(side, indent=2) + "\n")
    else:
        sys.stdout.write("".join(f"{x}\n" for x in fit.labels))
    return 0


def _cmd_density(args) -> int:
    ensemble = read_ensemble(args.ensemble)
    pi = read_labels(args.labels)
    report = partition_score(build_incidence(ensemble), pi)
    if args.csv:
        report.to_csv(args.csv)
    print("cluster,size,weight,density")
    for c in report.per_cluster:
        print(f"{c.cluster},{c.size},{c.weight:.6f},{c.density:.6f}")
    print(f"score,{report.score:.6f}")
    return 0


def _cmd_nmi(args) -> int:
    print(f"{nmi(read_labels(args.a), read_labels(args.b)):.6f}")
    return 0


def _cmd_partition_graph(args) -> int:
    g = read_edge_list(args.edgelist)
    res = partition_graph(g, args.k, args.balance, seed=args.seed)
    if args.out:
        write_labels(args.out, res.labels)
    else:
        sys.stdout.write("".join(f"{x}\n" for x in res.labels))
    print(f"edge_cut={res.edge_cut:g} balance={res.balance:.4f}", file=sys.stderr)
    return 0


def _cmd_ensemble(args) -> int:
    spec = DatasetSpec.from_file(args.spec)
    data = load_dataset(spec.path, spec)
    ens = generate_base_clusterings(data, args.p, args.seed, KMeansConfig(k=2, restarts=args.restarts))
    write_ensemble(args.out, ens)
    print(f"wrote {ens.p} partitionings of {ens.n} items to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bench", description="Consensus clustering density toolkit.")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run the repeated-ensemble protocol from a JSON config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes (env BENCH_WORKERS wins)")
    p.add_argument("--repetitions", type=int)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("consensus", help="run one consensus algorithm on an ensemble directory")
    p.add_argument("ensemble")
    p.add_argument("--algo", required=True, help="algorithm name (eac_km, hier, ...) or table name (KM, R-AL, ...)")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--linkage", choices=LINKAGES)
    p.add_argument("--matrix", choices=MATRICES)
    p.add_argument("--out", help="label file to write; a JSON sidecar goes next to it")
    p.set_defaults(func=_cmd_consensus)

    p = sub.add_parser("density", help="per-cluster weights and densities of a labeling")
    p.add_argument("ensemble")
    p.add_argument("labels")
    p.add_argument("--csv", help="also write the report as CSV")
    p.set_defaults(func=_cmd_density)

    p = sub.add_parser("nmi", help="NMI between two label files")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=_cmd_nmi)

    p = sub.add_parser("partition-graph", help="balanced k-way partition of an edge list")
    p.add_argument("edgelist")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--balance", type=float, default=1.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_partition_graph)

    p = sub.add_parser("ensemble", help="generate base clusterings for a dataset spec")
    p.add_argument("spec")
    p.add_argument("--p", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ensemble)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
