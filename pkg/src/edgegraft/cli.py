"""Command-line front end: generate, learn, evaluate, simulate-reservoir.

Every subcommand reads an optional ``--config`` file (TOML or JSON) and any
number of ``--set section.key=value`` overrides. Exit codes: 0 success,
1 usage or configuration error, 2 runtime or numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from .data import DataError, SufficientStatsStore, load_csv, split
from .inference import InferenceEngine, InferenceError, nlpl
from .learners import LearnerConfig, TraceWriter, learn
from .model import load_model, n_candidate_edges, parameter_count, read_edge_list, save_model, write_edge_list
from .objective import OptimizerConfig, RegularizationParams, full_objective
from .synthetic import generate_ground_truth, gibbs_sample, recall, reservoir_rank_simulation

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

logger = logging.getLogger("edgegraft")

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "synthetic": {
        "n": 20, "states": 5, "count": 5000, "train_fraction": 0.8, "mean": 0.0,
        "sigma_v": 0.5, "sigma_e": 1.0, "burn_in": 200, "thinning": 5, "chains": 10, "seed": 0,
    },
    "data": {"train": None, "test": None, "true_edges": None, "cardinalities": None, "rules": {}},
    "learner": {
        "method": "bceg", "lambda": 1e-3, "lambda2": 0.0, "alpha": 1.0, "edge_budget": None,
        "structure_heuristics": True, "penalize_nodes": True, "seed": 0, "lambda_grid": None,
        "engine": "bp",
    },
    "search": {"rho0": 0.0, "reservoir_size": None, "t_max": None, "c_hat": None, "eager_pq": False},
    "bp": {"max_iters": 500, "tol": 1e-8, "damping": 0.5},
    "opt": {"tol": 1e-6, "max_inner": 250, "backtrack_beta": 0.5, "init_step": 1.0},
    "simulate": {"n": 400, "sizes": "1:500:10", "trials": 100, "seed": 0},
    "output": {
        "dir": ".", "model": "model.json", "edges": "edges.txt", "trace": "trace.csv",
        "trace_format": "csv", "report": "report.json", "true_model": "true_model.json",
        "true_edges": "true_edges.txt", "train": "train.csv", "test": "test.csv",
        "ranks": "reservoir_ranks.csv", "record_wall_time": True,
    },
}


class ConfigError(Exception):
    """Invalid configuration or command line (exit code 1)."""


# -- configuration --------------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: Optional[str], overrides: List[str]) -> Dict[str, Dict[str, Any]]:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        p = Path(path)
        try:
            raw = p.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            user = json.loads(raw) if p.suffix.lower() == ".json" else tomllib.loads(raw.decode())
        except (ValueError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        for section, values in user.items():
            if section == "engine" and isinstance(values, str):
                cfg["learner"]["engine"] = values
                continue
            if section not in cfg or not isinstance(values, dict):
                raise ConfigError(f"unknown config section {section!r}")
            for key, value in values.items():
                _assign(cfg, section, key, value)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        dotted, value = item.split("=", 1)
        section, key = dotted.split(".", 1)
        _assign(cfg, section, key, _parse_value(value))
    return cfg


def _assign(cfg, section, key, value):
    if section not in cfg:
        raise ConfigError(f"unknown config section {section!r}")
    if key not in cfg[section]:
        raise ConfigError(f"unknown config key {section}.{key}")
    cfg[section][key] = value


def _out(cfg, key) -> Path:
    return Path(cfg["output"]["dir"]) / cfg["output"][key]


def _engine(cfg) -> InferenceEngine:
    b = cfg["bp"]
    return InferenceEngine(cfg["learner"]["engine"], int(b["max_iters"]), float(b["tol"]), float(b["damping"]))


def _optimizer(cfg) -> OptimizerConfig:
    o = cfg["opt"]
    return OptimizerConfig(tol=float(o["tol"]), max_inner=int(o["max_inner"]),
                           backtrack_beta=float(o["backtrack_beta"]), init_step=float(o["init_step"]))


def learner_config(cfg, lam: Optional[float] = None) -> LearnerConfig:
    L, S = cfg["learner"], cfg["search"]
    return LearnerConfig(
        method=L["method"], lam=float(L["lambda"] if lam is None else lam), lam2=float(L["lambda2"]),
        alpha=float(L["alpha"]), reservoir_size=S["reservoir_size"], t_max=S["t_max"],
        edge_budget=L["edge_budget"], c_hat=S["c_hat"],
        structure_heuristics=bool(L["structure_heuristics"]), eager_pq=bool(S["eager_pq"]),
        rho0=float(S["rho0"]), penalize_nodes=bool(L["penalize_nodes"]), seed=L["seed"],
        engine=_engine(cfg), opt=_optimizer(cfg),
    )


def parse_sizes(spec) -> List[int]:
    """``"a:b:step"`` -> ``[a, step, 2*step, ..., b]``; a list is taken as is.

    The grid always starts at ``a`` and then continues on multiples of
    ``step``, so ``1:500:10`` gives 1, 10, 20, ..., 500 (51 values).
    """
    if isinstance(spec, list):
        return [int(s) for s in spec]
    parts = str(spec).split(":")
    if len(parts) != 3:
        raise ConfigError(f"sizes must be a list or 'start:stop:step', got {spec!r}")
    a, b, step = (int(p) for p in parts)
    if step < 1 or a < 1 or b < a:
        raise ConfigError(f"invalid size range {spec!r}")
    first_multiple = -(-a // step) * step
    if first_multiple == a:
        first_multiple += step
    return [a] + list(range(first_multiple, b + 1, step))


def _load_data(cfg, key, spec=None):
    path = cfg["data"][key]
    if not path:
        raise ConfigError(f"data.{key} is required")
    if not Path(path).exists():
        raise ConfigError(f"{key} file not found: {path}")
    card = list(spec.cardinalities) if spec is not None else cfg["data"]["cardinalities"]
    return load_csv(path, card, cfg["data"]["rules"])


def _fmt(x: float) -> float:
    return float(format(x, ".12g"))


# -- subcommands ------------------------------------------------------------------


def cmd_generate(cfg) -> int:
    s = cfg["synthetic"]
    gt = generate_ground_truth(int(s["n"]), int(s["states"]), float(s["mean"]), float(s["sigma_v"]),
                               float(s["sigma_e"]), seed=s["seed"])
    data = gibbs_sample(gt.model, int(s["count"]), int(s["burn_in"]), int(s["thinning"]),
                        seed=s["seed"], chains=int(s["chains"]))
    train, test = split(data, float(s["train_fraction"]), s["seed"])
    Path(cfg["output"]["dir"]).mkdir(parents=True, exist_ok=True)
    save_model(gt.model, _out(cfg, "true_model"))
    write_edge_list(gt.true_edges, _out(cfg, "true_edges"))
    train.to_csv(_out(cfg, "train"))
    test.to_csv(_out(cfg, "test"))
    logger.info("wrote %d train / %d test rows, %d true edges", train.N, test.N, len(gt.true_edges))
    return 0


def _suffixed(path: Path, lam: float) -> Path:
    return path.with_name(f"{path.stem}_lambda{format(lam, '.12g')}{path.suffix}")


def cmd_learn(cfg) -> int:
    train = _load_data(cfg, "train")
    test = _load_data(cfg, "test", train.spec) if cfg["data"]["test"] else None
    true_edges = read_edge_list(cfg["data"]["true_edges"]) if cfg["data"]["true_edges"] else None
    grid = cfg["learner"]["lambda_grid"]
    lams = [float(v) for v in grid] if grid else [None]
    Path(cfg["output"]["dir"]).mkdir(parents=True, exist_ok=True)
    for lam in lams:
        lc = learner_config(cfg, lam)
        paths = {k: _out(cfg, k) for k in ("model", "edges", "trace")}
        if lam is not None:
            paths = {k: _suffixed(p, lam) for k, p in paths.items()}
        with TraceWriter(paths["trace"], cfg["output"]["trace_format"]) as writer:
            timed = bool(cfg["output"]["record_wall_time"])

            def on_round(rec, writer=writer, timed=timed):
                if not timed:
                    rec.wall_ms = 0.0
                writer(rec)

            model, trace = learn(train, lc, eval_data=test, true_edges=true_edges, on_round=on_round)
        save_model(model, paths["model"])
        write_edge_list(model.active_edges, paths["edges"])
        logger.info("lambda=%g: %d edges, stop=%s", lc.lam, len(model.edge_weights), trace.stop_reason)
    return 0


def cmd_evaluate(cfg) -> int:
    model_path = _out(cfg, "model")
    if not model_path.exists():
        raise ConfigError(f"model file not found: {model_path}")
    model = load_model(model_path)
    test = _load_data(cfg, "test", model.spec)
    if test.spec.names != model.spec.names:
        raise DataError("test columns do not match the model variables")
    L = cfg["learner"]
    params = RegularizationParams(float(L["lambda"]), float(L["lambda2"]), float(L["alpha"]), bool(L["penalize_nodes"]))
    report = {
        "objective": _fmt(full_objective(model, SufficientStatsStore(test), _engine(cfg), params)),
        "nlpl": _fmt(nlpl(model, test)),
        "parameter_count": parameter_count(model.spec),
        "active_edges": len(model.edge_weights),
    }
    if cfg["data"]["true_edges"]:
        report["recall"] = _fmt(recall(read_edge_list(cfg["data"]["true_edges"]), model.active_edges))
    path = _out(cfg, "report")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_simulate_reservoir(cfg) -> int:
    s = cfg["simulate"]
    n = int(s["n"])
    sizes = [r for r in parse_sizes(s["sizes"]) if r <= n_candidate_edges(n)]
    rows = reservoir_rank_simulation(n, sizes, int(s["trials"]), seed=s["seed"])
    path = _out(cfg, "ranks")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["reservoir_size", "mean_rank", "min_rank", "max_rank", "expected_rank"])
        for r in rows:
            w.writerow([r.reservoir_size, format(r.mean_rank, ".12g"), r.min_rank, r.max_rank,
                        format(r.expected_rank, ".12g")])
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "learn": cmd_learn,
    "evaluate": cmd_evaluate,
    "simulate-reservoir": cmd_simulate_reservoir,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgegraft", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML or JSON run configuration")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value (JSON literal or bare string)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DataError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # bad parameter values surface as ValueError from the library constructors
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InferenceError, ArithmeticError, OSError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
