"""Command-line surface and experiment orchestration.

Subcommands: gen-data, train, eval, solve, project, report. Experiments
are driven by a TOML config with an explicit schema version; unknown keys
are rejected so typos cannot silently change a run. Every artifact embeds
the producing seed and a hash of the config.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .baselines import EvalReport, diag_solve, geodesic_so3, pure_infer
from .bits import bits_to_str, str_to_bits
from .mlp import MlpParams, forward, load_checkpoint, save_checkpoint
from .problems import PROBLEM_TYPES, topology_for
from .problems.datasets import (
    ROT3D_STAGES,
    build_psr2d_dataset,
    build_randgraph_dataset,
    build_rot3d_dataset,
    load_dataset,
    save_dataset,
)
from .problems.geometry import decode_angle2d, decode_euler, decode_stage_angle, euler_zyx
from .problems.permutation import project_to_permutation
from .qubo import QuboMatrix, Topology, assemble_qubo, diagonal_topology, load_qubo
from .solvers import SaParams, exhaustive_solve, hamming_histogram, simulated_anneal
from .training import TrainConfig, train, train_pure

SCHEMA_VERSION = 1
METHODS = ("ours", "diag", "pure")


class ConfigError(ValueError):
    """Malformed configuration or usage; maps to exit code 2."""


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

_SECTION_KEYS = {
    "problem": {
        "type",
        "k",
        "train_count",
        "test_count",
        "noise_pct",
        "corrupt_fraction",
        "penalty",
        "train_path",
        "test_path",
    },
    "model": {"layers", "hidden"},
    "train": {
        "method",
        "lr",
        "batch_size",
        "epochs",
        "solver",
        "reads",
        "sweeps",
        "lambda_unique",
        "lambda_mlp",
    },
    "eval": {"solver", "reads", "sweeps", "project"},
}
_TOP_KEYS = {"schema_version", "seed", "output_dir", "problem", "model", "train", "eval"}


@dataclass
class ExperimentConfig:
    seed: int
    output_dir: Path
    problem: dict
    model: dict
    train: dict
    eval: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return hash_config(self.raw)


def hash_config(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def load_experiment_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"config schema_version must be {SCHEMA_VERSION}")
    if "seed" not in raw:
        raise ConfigError("config must set a seed")
    if "output_dir" not in raw:
        raise ConfigError("config must set output_dir")
    for section, allowed in _SECTION_KEYS.items():
        got = raw.get(section, {})
        bad = set(got) - allowed
        if bad:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(bad)}")
    problem = raw.get("problem", {})
    if problem.get("type") not in PROBLEM_TYPES:
        raise ConfigError(f"problem.type must be one of {PROBLEM_TYPES}")
    for path_key in ("train_path", "test_path"):
        if path_key in problem and not Path(problem[path_key]).exists():
            raise ConfigError(f"problem.{path_key} does not exist: {problem[path_key]}")
    return ExperimentConfig(
        seed=int(raw["seed"]),
        output_dir=Path(raw["output_dir"]),
        problem=problem,
        model=raw.get("model", {}),
        train=raw.get("train", {}),
        eval=raw.get("eval", {}),
        raw=raw,
    )


def _train_config(config: ExperimentConfig) -> TrainConfig:
    t = config.train
    return TrainConfig(
        problem_type=config.problem["type"],
        L=int(config.model.get("layers", 5)),
        H=int(config.model.get("hidden", 78)),
        lr=float(t.get("lr", 1e-3)),
        batch_size=int(t.get("batch_size", 32)),
        epochs=int(t.get("epochs", 20)),
        solver=t.get("solver", "auto"),
        sa_params=SaParams(num_reads=int(t.get("reads", 100)), sweeps=int(t.get("sweeps", 1000))),
        lambda_unique=float(t.get("lambda_unique", 1e-3)),
        lambda_mlp=float(t.get("lambda_mlp", 1e-4)),
        seed=config.seed,
    )


# ---------------------------------------------------------------------------
# Dataset plumbing
# ---------------------------------------------------------------------------


def build_dataset(problem: dict, count: int, seed: int):
    ptype = problem["type"]
    if ptype == "randgraph":
        return build_randgraph_dataset(
            int(problem.get("k", 4)), count, seed, float(problem.get("penalty", 1.0))
        )
    if ptype == "psr2d":
        return build_psr2d_dataset(count, seed, noise_pct=float(problem.get("noise_pct", 0.0)))
    if ptype == "rot3d":
        return build_rot3d_dataset(
            count, seed, stage=None, corrupt_fraction=float(problem.get("corrupt_fraction", 0.0))
        )
    if ptype in ROT3D_STAGES:
        return build_rot3d_dataset(
            count,
            seed,
            stage=ROT3D_STAGES[ptype],
            corrupt_fraction=float(problem.get("corrupt_fraction", 0.0)),
        )
    raise ConfigError(f"gen-data cannot synthesise problem type {ptype!r}")


def _load_or_build(config: ExperimentConfig, which: str):
    problem = config.problem
    path = problem.get(f"{which}_path")
    if path:
        instances, _ = load_dataset(path)
        return instances
    count = int(problem.get(f"{which}_count", 0))
    if count <= 0:
        return []
    # Distinct substream roots keep train/test draws independent.
    offset = {"train": 0, "test": 1}[which]
    return build_dataset(problem, count, config.seed * 2 + offset)


# ---------------------------------------------------------------------------
# Prediction and evaluation
# ---------------------------------------------------------------------------


def _eval_solver(config_eval: dict):
    kind = config_eval.get("solver", "exhaustive")
    if kind == "exhaustive":
        return exhaustive_solve
    if kind == "sa":
        params = SaParams(
            num_reads=int(config_eval.get("reads", 100)),
            sweeps=int(config_eval.get("sweeps", 1000)),
            seed=int(config_eval.get("seed", 0)),
        )
        return lambda A: simulated_anneal(A, params)
    raise ConfigError(f"unknown eval solver {kind!r}")


def predict_bits(method: str, params: MlpParams, topo: Topology, p, solve) -> np.ndarray:
    if method == "pure":
        return pure_infer(params, p)
    trace = forward(params, p)
    A = assemble_qubo(trace.output, topo)
    if method == "diag":
        return diag_solve(A)
    return solve(A).best


def _instance_error(ptype: str, bits: np.ndarray, inst, project: bool) -> float:
    """Exact-match indicator for matching problems, degrees otherwise."""
    if ptype in ("randgraph", "willow"):
        pred = bits
        if project:
            pred = project_to_permutation(pred, int(inst.meta["k"])).bits
        return float((pred == inst.x_hat).all())
    if ptype == "psr2d":
        return abs(math.degrees(decode_angle2d(bits) - inst.meta["angle"]))
    if ptype == "rot3d":
        R_pred = euler_zyx(*decode_euler(bits))
        R_true = euler_zyx(*inst.meta["euler"])
        return geodesic_so3(R_pred, R_true)
    if ptype in ROT3D_STAGES:
        stage = ROT3D_STAGES[ptype]
        truth = inst.meta["euler"][stage]
        return abs(math.degrees(decode_stage_angle(bits, stage) - truth))
    raise ConfigError(f"no metric for problem type {ptype!r}")


def evaluate(method: str, params: MlpParams, dataset, eval_cfg: dict, ptype: str):
    """Per-instance metric values plus the Hamming histogram of predictions."""
    if not dataset:
        raise ConfigError("evaluation dataset is empty")
    n = dataset[0].x_hat.shape[0]
    topo = diagonal_topology(n) if method == "diag" else topology_for(ptype, n)
    solve = _eval_solver(eval_cfg)
    project = bool(eval_cfg.get("project", False))
    values = []
    predictions = []
    for inst in dataset:
        bits = predict_bits(method, params, topo, inst.p, solve)
        predictions.append(bits)
        values.append(_instance_error(ptype, bits, inst, project))
    hist = hamming_histogram(predictions, [inst.x_hat for inst in dataset])
    return EvalReport(np.array(values)), hist


def _metric_value(ptype: str, report: EvalReport) -> float:
    """Accuracy %% for matching problems, mean error (degrees) otherwise."""
    if ptype in ("randgraph", "willow"):
        return report.accuracy_pct
    return report.mean


def _train_method(method: str, dataset, tconfig: TrainConfig, test_dataset):
    if method == "pure":
        return train_pure(dataset, tconfig, test_dataset=test_dataset)
    topology = None
    if method == "diag":
        topology = diagonal_topology(dataset[0].x_hat.shape[0])
    return train(dataset, tconfig, topology=topology, test_dataset=test_dataset)


# ---------------------------------------------------------------------------
# Grid runs and reports
# ---------------------------------------------------------------------------


def run_experiment_grid(config: ExperimentConfig, grid: list[tuple[int, int]]):
    """Train and evaluate every method for every (layers, hidden) cell.

    Returns rows [L, H, metric_ours, metric_diag, metric_pure]; the metric
    follows the problem type (accuracy %% or mean error in degrees).
    """
    train_set = _load_or_build(config, "train")
    test_set = _load_or_build(config, "test")
    if not train_set or not test_set:
        raise ConfigError("grid runs need non-empty train and test sets")
    ptype = config.problem["type"]
    rows = []
    for L, H in grid:
        row = [L, H]
        for method in METHODS:
            tconfig = _train_config(config)
            tconfig.L, tconfig.H = int(L), int(H)
            params, _ = _train_method(method, train_set, tconfig, None)
            report, _ = evaluate(method, params, test_set, config.eval, ptype)
            row.append(_metric_value(ptype, report))
        rows.append(row)
    return rows


def _write_csv(path, header_comment: str, fieldnames, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        writer.writerows(rows)


def _read_result_csv(path):
    header = {}
    rows = []
    fieldnames = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        key, val = tok.split("=", 1)
                        header[key] = val
                continue
            cells = next(csv.reader([line]))
            if fieldnames is None:
                fieldnames = cells
            else:
                rows.append(cells)
    if fieldnames is None:
        raise ConfigError(f"no CSV content in {path}")
    return header, fieldnames, rows


def results_report(paths, force: bool = False):
    """Cell-wise mean and population std across runs of one experiment.

    All inputs must share the config hash unless `force` is set.
    """
    if not paths:
        raise ConfigError("need at least one result file")
    parsed = [_read_result_csv(p) for p in paths]
    hashes = {h.get("config") for h, _, _ in parsed}
    if len(hashes) > 1 and not force:
        raise ConfigError(f"mixed config hashes {sorted(hashes)}; pass --force to combine")
    fieldnames = parsed[0][1]
    shape = (len(parsed[0][2]), len(fieldnames))
    stacks = []
    for _, names, rows in parsed:
        if names != fieldnames or len(rows) != shape[0]:
            raise ConfigError("result files have mismatching layouts")
        stacks.append(np.array(rows, dtype=object))
    mean_rows, std_rows = [], []
    for r in range(shape[0]):
        mean_row, std_row = [], []
        for c in range(shape[1]):
            cells = [stack[r, c] for stack in stacks]
            try:
                vals = np.array([float(v) for v in cells])
            except ValueError:
                if len(set(cells)) != 1:
                    raise ConfigError(f"non-numeric cells differ across runs: {cells}")
                mean_row.append(cells[0])
                std_row.append(cells[0])
                continue
            mean_row.append(f"{vals.mean():.6g}")
            # Sample std over runs (ddof=1); a single run reports 0.
            std = vals.std(ddof=1) if len(vals) > 1 else 0.0
            std_row.append(f"{std:.6g}")
        mean_rows.append(mean_row)
        std_rows.append(std_row)
    return fieldnames, mean_rows, std_rows


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    problem = {"type": args.problem, "k": args.k, "noise_pct": args.noise}
    if args.problem not in PROBLEM_TYPES:
        raise ConfigError(f"unknown problem {args.problem!r}")
    instances = build_dataset(problem, args.count, args.seed)
    header = {"seed": args.seed, "config": hash_config(problem)}
    save_dataset(instances, args.out, header)
    print(f"wrote {len(instances)} instances to {args.out}")
    return 0


def cmd_solve(args) -> int:
    A = load_qubo(args.qubo)
    if args.solver == "exhaustive":
        result = exhaustive_solve(A)
    else:
        result = simulated_anneal(
            A, SaParams(num_reads=args.reads, sweeps=args.sweeps, seed=args.seed)
        )
    print("bitstring,energy,count")
    for bits, e, count in result.samples:
        print(f"{bits_to_str(bits)},{e!r},{count}")
    return 0


def cmd_train(args) -> int:
    config = load_experiment_config(args.config)
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    train_set = _load_or_build(config, "train")
    if not train_set:
        raise ConfigError("training set is empty; set problem.train_count or train_path")
    test_set = _load_or_build(config, "test")
    method = config.train.get("method", "ours")
    if method not in METHODS:
        raise ConfigError(f"train.method must be one of {METHODS}")
    tconfig = _train_config(config)
    params, report = _train_method(method, train_set, tconfig, test_set)
    meta = {
        "seed": config.seed,
        "config": config.config_hash,
        "problem_type": config.problem["type"],
        "method": method,
        "epochs": tconfig.epochs,
    }
    save_checkpoint(params, out / "model.ckpt", meta)
    _write_csv(
        out / "report.csv",
        f"seed={config.seed} config={config.config_hash}",
        [
            "epoch",
            "loss_total",
            "loss_gap",
            "loss_unique",
            "loss_mlp",
            "train_accuracy",
            "test_accuracy",
            "wall_time",
        ],
        [[row[k] for k in (
            "epoch",
            "loss_total",
            "loss_gap",
            "loss_unique",
            "loss_mlp",
            "train_accuracy",
            "test_accuracy",
            "wall_time",
        )] for row in report.rows()],
    )
    print(f"trained {method} for {tconfig.epochs} epochs; checkpoint at {out / 'model.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    dataset, _ = load_dataset(args.dataset)
    if not dataset:
        raise ConfigError(f"dataset {args.dataset} is empty")
    params = load_checkpoint(args.checkpoint)
    eval_cfg = {
        "solver": args.solver,
        "reads": args.reads,
        "sweeps": args.sweeps,
        "project": args.project,
    }
    ptype = dataset[0].problem_type
    report, hist = evaluate(args.baseline, params, dataset, eval_cfg, ptype)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stamp = f"seed={args.seed} config=eval"
    _write_csv(
        out / "eval.csv",
        stamp,
        ["instance", "value"],
        [[i, f"{v!r}"] for i, v in enumerate(report.per_instance)],
    )
    _write_csv(
        out / "hamming.csv",
        stamp,
        ["distance", "count"],
        [[d, int(c)] for d, c in enumerate(hist)],
    )
    label = "accuracy%" if ptype in ("randgraph", "willow") else "mean_error_deg"
    print(f"{label}={_metric_value(ptype, report):.4f} median={report.median:.4f} n={len(dataset)}")
    return 0


def cmd_project(args) -> int:
    lines = Path(args.bits).read_text(encoding="utf-8").splitlines()
    out_lines = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        proj = project_to_permutation(str_to_bits(line), args.k)
        out_lines.append(bits_to_str(proj.bits))
    text = "\n".join(out_lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_report(args) -> int:
    fieldnames, mean_rows, std_rows = results_report(args.results, force=args.force)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# runs={len(args.results)}\n")
        writer = csv.writer(fh)
        writer.writerow(fieldnames + [f"{name}_std" for name in fieldnames[2:]])
        for mean_row, std_row in zip(mean_rows, std_rows):
            writer.writerow(mean_row + std_row[2:])
    print(f"aggregated {len(args.results)} runs into {out}")
    return 0


def cmd_grid(args) -> int:
    config = load_experiment_config(args.config)
    grid = []
    for cell in args.cells.split(";"):
        L, H = cell.split(",")
        grid.append((int(L), int(H)))
    rows = run_experiment_grid(config, grid)
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "grid.csv",
        f"seed={config.seed} config={config.config_hash}",
        ["L", "H", "ours", "diag", "pure"],
        rows,
    )
    print(f"grid results written to {out / 'grid.csv'}")
    return 0


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qubolearn",
        description="Learn QUBO matrices from data; solve and evaluate them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesise a dataset file")
    p.add_argument("--problem", required=True, help=f"one of {PROBLEM_TYPES}")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--k", type=int, default=4, help="matching size (randgraph)")
    p.add_argument("--noise", type=float, default=0.0, help="uniform noise %% (psr2d)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("solve", help="solve a QUBO text file")
    p.add_argument("--qubo", required=True)
    p.add_argument("--solver", choices=("exhaustive", "sa"), default="exhaustive")
    p.add_argument("--reads", type=int, default=100)
    p.add_argument("--sweeps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train from a TOML experiment config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--baseline", choices=METHODS, default="ours")
    p.add_argument("--solver", choices=("exhaustive", "sa"), default="exhaustive")
    p.add_argument("--reads", type=int, default=100)
    p.add_argument("--sweeps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--project", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("project", help="project bitstrings to valid permutations")
    p.add_argument("--bits", required=True, help="file with one bitstring per line")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("report", help="aggregate result CSVs over seeds")
    p.add_argument("results", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="allow mixed config hashes")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("grid", help="run the (layers, hidden) experiment grid")
    p.add_argument("--config", required=True)
    p.add_argument("--cells", default="3,32;3,78;5,32;5,78", help="semicolon-separated L,H pairs")
    p.set_defaults(func=cmd_grid)

    return parser


def cli_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))
