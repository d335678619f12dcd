"""Dataset loading, the repeated-ensemble protocol, and result tables."""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .consensus import ConsensusRequest, run_consensus
from .core import Dataset, ValidationError, build_incidence, partition_from_labels
from .density import DEFAULT_ORACLE_CAP, density_score
from .kmeans import KMeansConfig, generate_base_clusterings
from .metrics import baselines, density_baselines, ensemble_nmi

MISSING_TOKENS = {"", "na", "nan", "?"}
WORKERS_ENV = "BENCH_WORKERS"


@dataclass(frozen=True)
class DatasetSpec:
    """How to read one dataset file.

    ``missing`` is ``"error"`` (default), ``"mean"`` (impute the column mean)
    or ``"drop"`` (drop incomplete rows).  ``k0`` overrides the class count.
    """

    name: str
    path: str
    label: Optional[str] = None
    discard: tuple[str, ...] = ()
    k0: Optional[int] = None
    missing: str = "error"

    @classmethod
    def from_dict(cls, d: dict, base: Optional[Path] = None) -> "DatasetSpec":
        if "name" not in d or "path" not in d:
            raise ValidationError(f"dataset spec needs 'name' and 'path', got keys {sorted(d)}")
        path = Path(d["path"])
        if base is not None and not path.is_absolute():
            path = base / path
        return cls(
            name=d["name"],
            path=str(path),
            label=d.get("label"),
            discard=tuple(d.get("discard", ())),
            k0=d.get("k0"),
            missing=d.get("missing", "error"),
        )

    @classmethod
    def from_file(cls, path) -> "DatasetSpec":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base=path.parent)


def _parse_cell(text: str, line: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValidationError(f"line {line}, column {column!r}: cannot parse {text!r} as a number") from None


def zscore(X: np.ndarray, names: Sequence[str] = ()) -> tuple[np.ndarray, list[int]]:
    """Column-wise (x - mean) / population std; constant columns are dropped
    with a warning.  Returns the normalized matrix and the kept column indices."""
    X = np.asarray(X, dtype=np.float64)
    std = X.std(axis=0)
    keep = [j for j in range(X.shape[1]) if std[j] > 0]
    dropped = [names[j] if j < len(names) else str(j) for j in range(X.shape[1]) if not std[j] > 0]
    if dropped:
        warnings.warn(f"dropping constant columns: {', '.join(dropped)}", UserWarning, stacklevel=2)
    if not keep:
        raise ValidationError("every feature column is constant")
    Z = (X[:, keep] - X[:, keep].mean(axis=0)) / std[keep]
    return Z, keep


def load_dataset(path, spec: Optional[DatasetSpec] = None) -> Dataset:
    """Read a comma-separated file with a header row into a normalized Dataset."""
    path = Path(path)
    spec = spec or DatasetSpec(name=path.stem, path=str(path))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    for col in ([spec.label] if spec.label else []) + list(spec.discard):
        if col not in header:
            raise ValidationError(f"{path}: no column named {col!r}")
    label_idx = header.index(spec.label) if spec.label else None
    kept = [j for j, h in enumerate(header) if j != label_idx and h not in spec.discard]
    if not kept:
        raise ValidationError(f"{path}: no feature columns left")
    if spec.missing not in ("error", "mean", "drop"):
        raise ValidationError(f"unknown missing-value policy {spec.missing!r}")

    values, labels = [], []
    for line, row in enumerate(rows[1:], start=2):
        if not any(c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ValidationError(f"{path}: line {line} has {len(row)} fields, header has {len(header)}")
        out = []
        for j in kept:
            cell = row[j].strip()
            if cell.lower() in MISSING_TOKENS:
                if spec.missing == "error":
                    raise ValidationError(f"{path}: line {line}, column {header[j]!r}: missing value")
                out.append(math.nan)
            else:
                out.append(_parse_cell(cell, line, header[j]))
        values.append(out)
        if label_idx is not None:
            labels.append(row[label_idx].strip())
    X = np.array(values, dtype=np.float64).reshape(len(values), len(kept))
    if spec.missing == "drop":
        ok = ~np.isnan(X).any(axis=1)
        X = X[ok]
        labels = [lab for lab, keep in zip(labels, ok) if keep]
    elif spec.missing == "mean":
        holes = np.isnan(X)
        if holes.all(axis=0).any():
            raise ValidationError(f"{path}: a column has no values to impute from")
        means = np.nanmean(X, axis=0)
        X[holes] = np.broadcast_to(means, X.shape)[holes]
    if X.shape[0] < 2:
        raise ValidationError(f"{path}: need at least 2 rows, found {X.shape[0]}")

    names = [header[j] for j in kept]
    Z, keep = zscore(X, names)
    truth = partition_from_labels(labels) if labels else None
    if spec.k0 is not None:
        k0 = int(spec.k0)
    elif truth is not None:
        k0 = truth.k
    else:
        k0 = 2
    return Dataset(Z, spec.name, truth, k0, tuple(names[j] for j in keep))


# --- protocol --------------------------------------------------------------------

@dataclass(frozen=True)
class AlgorithmSpec:
    """A named consensus request template."""

    name: str
    algorithm: str
    options: dict = field(default_factory=dict)
    group: str = "all"


DEFAULT_ALGORITHMS = (
    AlgorithmSpec("KM", "eac_km"),
    AlgorithmSpec("H-KM", "h_km"),
    AlgorithmSpec("SEC", "sec"),
    AlgorithmSpec("MCLA", "mcla"),
    AlgorithmSpec("ECC", "ecc"),
    AlgorithmSpec("CSPA", "cspa", group="small"),
    AlgorithmSpec("R-SL", "hier", {"linkage": "SL", "matrix": "raw"}, "small"),
    AlgorithmSpec("R-AL", "hier", {"linkage": "AL", "matrix": "raw"}, "small"),
    AlgorithmSpec("R-ML", "hier", {"linkage": "ML", "matrix": "raw"}, "small"),
    AlgorithmSpec("E-SL", "hier", {"linkage": "SL", "matrix": "enhanced"}, "small"),
    AlgorithmSpec("E-AL", "hier", {"linkage": "AL", "matrix": "enhanced"}, "small"),
    AlgorithmSpec("E-ML", "hier", {"linkage": "ML", "matrix": "enhanced"}, "small"),
)

BASELINES = ("Mean", "Max")
QUADRATIC = {"cspa", "hier"}


@dataclass(frozen=True)
class ProtocolConfig:
    datasets: tuple[DatasetSpec, ...]
    repetitions: int = 20
    ensemble_size: int = 20
    k_out: int = 20
    algorithms: tuple[AlgorithmSpec, ...] = DEFAULT_ALGORITHMS
    master_seed: int = 0
    oracle_cap: int = DEFAULT_ORACLE_CAP
    output: str = "results"
    workers: int = 1
    base_restarts: int = 10

    def __post_init__(self):
        if self.repetitions < 1 or self.ensemble_size < 2 or self.k_out < 2:
            raise ValidationError("need repetitions >= 1, ensemble_size >= 2, k_out >= 2")
        if self.base_restarts < 1:
            raise ValidationError("base_restarts must be >= 1")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names) or set(names) & set(BASELINES):
            raise ValidationError("algorithm names must be unique and not clash with Mean/Max")
        if len({d.name for d in self.datasets}) != len(self.datasets):
            raise ValidationError("dataset names must be unique")

    @classmethod
    def from_file(cls, path, **overrides) -> "ProtocolConfig":
        """Read a JSON config; dataset entries are spec dicts or spec file paths.

        Relative paths resolve against the config file's directory.
        """
        path = Path(path)
        raw = json.loads(path.read_text())
        base = path.parent
        datasets = []
        for entry in raw.get("datasets", []):
            if isinstance(entry, str):
                p = Path(entry)
                datasets.append(DatasetSpec.from_file(p if p.is_absolute() else base / p))
            else:
                datasets.append(DatasetSpec.from_dict(entry, base))
        algorithms = DEFAULT_ALGORITHMS
        if "algorithms" in raw:
            algorithms = tuple(
                AlgorithmSpec(a["name"], a["algorithm"], dict(a.get("options", {})), a.get("group", "all"))
                for a in raw["algorithms"]
            )
        output = raw.get("output", "results")
        if not Path(output).is_absolute():
            output = os.path.normpath(base / output)
        values = dict(
            datasets=tuple(datasets),
            repetitions=int(raw.get("repetitions", 20)),
            ensemble_size=int(raw.get("ensemble_size", 20)),
            k_out=int(raw.get("k_out", 20)),
            algorithms=algorithms,
            master_seed=int(raw.get("master_seed", 0)),
            oracle_cap=int(raw.get("oracle_cap", DEFAULT_ORACLE_CAP)),
            output=output,
            workers=int(raw.get("workers", 1)),
            base_restarts=int(raw.get("base_restarts", 10)),
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class RunRecord:
    dataset: str
    repetition: int
    algorithm: str
    ensemble_nmi: float
    density: float
    wall_time: float
    seed: int
    status: str = "ok"  # ok, NA (skipped) or failed
    k_found: int = 0
    message: str = ""


RECORD_FIELDS = ("dataset", "repetition", "algorithm", "seed", "status", "k_found", "ensemble_nmi", "density", "message")


def stable_hash(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def repetition_seed(master_seed: int, dataset: str, repetition: int) -> int:
    ss = np.random.SeedSequence([master_seed, stable_hash(dataset), repetition])
    return int(ss.generate_state(1)[0])


def algorithm_seed(rep_seed: int, name: str) -> int:
    return int(np.random.SeedSequence([rep_seed, stable_hash(name)]).generate_state(1)[0])


def run_cell(data: Dataset, repetition: int, cfg: ProtocolConfig) -> list[RunRecord]:
    """One (dataset, repetition) cell: build an ensemble, run every algorithm."""
    seed = repetition_seed(cfg.master_seed, data.name, repetition)
    t0 = time.perf_counter()
    template = KMeansConfig(k=2, restarts=cfg.base_restarts)
    ensemble = generate_base_clusterings(data, cfg.ensemble_size, seed, template)
    build_time = time.perf_counter() - t0
    H = build_incidence(ensemble)
    nmi_mean, nmi_best = baselines(ensemble)
    dens_mean, dens_best = density_baselines(ensemble)
    records = [
        RunRecord(data.name, repetition, "Mean", nmi_mean, dens_mean, build_time, seed, k_found=0),
        RunRecord(data.name, repetition, "Max", nmi_best, dens_best, build_time, seed, k_found=0),
    ]
    for algo in cfg.algorithms:
        a_seed = algorithm_seed(seed, algo.name)
        if algo.algorithm in QUADRATIC and data.n > cfg.oracle_cap:
            records.append(RunRecord(data.name, repetition, algo.name, math.nan, math.nan, 0.0, a_seed,
                                     "NA", message=f"n={data.n} above oracle cap {cfg.oracle_cap}"))
            continue
        options = dict(algo.options)
        if algo.algorithm in QUADRATIC:
            options.setdefault("oracle_cap", cfg.oracle_cap)
        t0 = time.perf_counter()
        try:
            fit = run_consensus(ConsensusRequest(ensemble, cfg.k_out, algo.algorithm, a_seed, options))
            star = fit.partitioning
            records.append(RunRecord(data.name, repetition, algo.name, ensemble_nmi(star, ensemble),
                                     density_score(H, star), time.perf_counter() - t0, a_seed,
                                     k_found=star.k))
        except Exception as exc:  # a single failure must not stop the protocol
            records.append(RunRecord(data.name, repetition, algo.name, math.nan, math.nan,
                                     time.perf_counter() - t0, a_seed, "failed",
                                     message=f"{type(exc).__name__}: {exc}"))
    return records


def worker_count(cfg: ProtocolConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return max(1, cfg.workers)


def run_protocol(cfg: ProtocolConfig, datasets: Optional[Sequence[Dataset]] = None) -> list[RunRecord]:
    """Run every (dataset, repetition) cell and return records in canonical order.

    ``datasets`` may supply already loaded data (matched to the config by
    name); otherwise each spec is loaded from disk.
    """
    loaded = {d.name: d for d in (datasets or ())}
    specs = {s.name: s for s in cfg.datasets}
    names = sorted(set(specs) | set(loaded))
    if not names:
        raise ValidationError("no datasets configured")
    # load once up front so bad files fail fast, with a clear message
    for name in names:
        if name not in loaded:
            loaded[name] = load_dataset(specs[name].path, specs[name])
    cells = [(name, r) for name in names for r in range(cfg.repetitions)]
    workers = worker_count(cfg)
    results: list[list[RunRecord]]
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, loaded[name], r, cfg) for name, r in cells]
            results = [f.result() for f in futures]
    else:
        results = [run_cell(loaded[name], r, cfg) for name, r in cells]
    order = {name: i for i, name in enumerate(BASELINES + tuple(a.name for a in cfg.algorithms))}
    records = [rec for cell in results for rec in cell]
    records.sort(key=lambda rec: (rec.dataset, rec.repetition, order[rec.algorithm]))
    return records


# --- output -----------------------------------------------------------------------

def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def write_records(records: Sequence[RunRecord], out_dir) -> None:
    """records.csv (deterministic) and timings.csv (wall clock, varies run to run)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "records.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([r.dataset, r.repetition, r.algorithm, r.seed, r.status, r.k_found,
                        _fmt(r.ensemble_nmi), _fmt(r.density), r.message])
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("dataset", "repetition", "algorithm", "wall_time"))
        for r in records:
            w.writerow([r.dataset, r.repetition, r.algorithm, f"{r.wall_time:.6f}"])


def read_records(path) -> list[RunRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(RunRecord(row["dataset"], int(row["repetition"]), row["algorithm"],
                                 float(row["ensemble_nmi"]), float(row["density"]), 0.0,
                                 int(row["seed"]), row["status"], int(row["k_found"]), row["message"]))
    return out


@dataclass(frozen=True)
class SummaryRow:
    dataset: str
    algorithm: str
    runs_ok: int
    runs_total: int
    ensemble_nmi: float
    density: float


def summarize(records: Sequence[RunRecord]) -> list[SummaryRow]:
    """Mean over successful repetitions per (dataset, algorithm)."""
    if not records:
        raise ValidationError("no records to summarize")
    groups: dict[tuple[str, str], list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.dataset, r.algorithm), []).append(r)
    rows = []
    for (ds, algo), recs in groups.items():
        ok = [r for r in recs if r.status == "ok"]
        nmi_ = float(np.mean([r.ensemble_nmi for r in ok])) if ok else math.nan
        den = float(np.mean([r.density for r in ok])) if ok else math.nan
        rows.append(SummaryRow(ds, algo, len(ok), len(recs), nmi_, den))
    return rows


def _groups(algorithms: Sequence[AlgorithmSpec]) -> dict[str, list[str]]:
    """Column sets of the emitted tables.

    The ``all`` group leads with the two baselines; every other group is
    compared against the plain k-means column when one is configured.
    """
    groups: dict[str, list[str]] = {}
    for a in algorithms:
        groups.setdefault(a.group, []).append(a.name)
    out = {}
    for g, names in groups.items():
        if g == "all":
            out[g] = list(BASELINES) + names
        else:
            lead = [a.name for a in algorithms if a.algorithm == "eac_km" and a.group == "all"][:1]
            out[g] = lead + [n for n in names if n not in lead]
    return out


def _cell(x: float) -> str:
    return "NA" if math.isnan(x) else f"{100 * x:.2f}"


def table_rows(summary: Sequence[SummaryRow], metric: str, columns: Sequence[str]):
    """Yield (dataset, [cells], best-columns) with values as percentage strings."""
    by = {(s.dataset, s.algorithm): getattr(s, metric) for s in summary}
    for ds in sorted({s.dataset for s in summary}):
        cells = [_cell(by.get((ds, c), math.nan)) for c in columns]
        # baselines are references, not contenders
        scored = [(float(v), c) for v, c in zip(cells, columns) if v != "NA" and c not in BASELINES]
        top = max((v for v, _ in scored), default=None)
        best = [c for v, c in scored if v == top]
        yield ds, cells, best


def emit_report(records: Sequence[RunRecord], out_dir, formats=("csv", "md"),
                algorithms: Sequence[AlgorithmSpec] = DEFAULT_ALGORITHMS) -> list[Path]:
    """Write nmi_table and density_table files plus summary.csv.

    Each table holds one block per algorithm group (datasets as rows,
    algorithms as columns, values x100 with two decimals, NA for skipped
    runs); the best contender per row is flagged.
    """
    if not records:
        raise ValidationError("no records to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(records)
    present = {r.algorithm for r in records}
    groups = {g: [c for c in cols if c in present] for g, cols in _groups(algorithms).items()}
    groups = {g: cols for g, cols in groups.items() if cols}
    written = []

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("dataset", "algorithm", "runs_ok", "runs_total", "ensemble_nmi", "density"))
        for s in sorted(summary, key=lambda s: (s.dataset, s.algorithm)):
            w.writerow([s.dataset, s.algorithm, s.runs_ok, s.runs_total, _fmt(s.ensemble_nmi), _fmt(s.density)])
    written.append(out / "summary.csv")

    for metric, stem in (("ensemble_nmi", "nmi_table"), ("density", "density_table")):
        if "csv" in formats:
            path = out / f"{stem}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                for g, cols in groups.items():
                    w.writerow(["group", "dataset"] + cols + ["best"])
                    for ds, cells, best in table_rows(summary, metric, cols):
                        w.writerow([g, ds] + cells + [";".join(best)])
            written.append(path)
        if "md" in formats or "markdown" in formats:
            path = out / f"{stem}.md"
            title = "Ensemble NMI" if metric == "ensemble_nmi" else "Density S"
            lines = []
            for g, cols in groups.items():
                lines += [f"## {title} ({g})", "", "| dataset | " + " | ".join(cols) + " |",
                          "|---|" + "---:|" * len(cols)]
                for ds, cells, best in table_rows(summary, metric, cols):
                    shown = [f"**{v}**" if c in best else v for v, c in zip(cells, cols)]
                    lines.append(f"| {ds} | " + " | ".join(shown) + " |")
                lines.append("")
            path.write_text("\n".join(lines))
            written.append(path)
    return written


def parse_markdown_table(path) -> dict[tuple[str, str, str], str]:
    """(group, dataset, algorithm) -> cell text with the best-value markup removed."""
    cells = {}
    group = cols = None
    for line in Path(path).read_text().splitlines():
        if line.startswith("## "):
            group = line[line.index("(") + 1:line.rindex(")")]
            cols = None
        elif line.startswith("| dataset |"):
            cols = [c.strip() for c in line.strip("|").split("|")][1:]
        elif line.startswith("| ") and cols:
            parts = [c.strip() for c in line.strip("|").split("|")]
            for c, v in zip(cols, parts[1:]):
                cells[(group, parts[0], c)] = v.strip("*")
    return cells


def run_and_report(cfg: ProtocolConfig) -> tuple[list[RunRecord], int]:
    """Run the protocol, write every output file and return the exit status."""
    records = run_protocol(cfg)
    write_records(records, cfg.output)
    emit_report(records, cfg.output, algorithms=cfg.algorithms)
    failed = any(r.status == "failed" for r in records)
    return records, 2 if failed else 0
