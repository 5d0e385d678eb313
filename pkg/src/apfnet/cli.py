"""Command-line front end: generate, train, heatmap, plan, evaluate.

Configuration comes from an optional JSON file (``--config``) with flag
overrides; the effective merged config is echoed into the output directory
so a run can be reproduced exactly.  Exit codes: 0 success, 1 usage error,
2 input error, 3 numeric failure.  Errors print a single diagnostic line to
stderr; successful commands write only into ``--out``.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from .apf import ApfParams, build_ideal_frame
from .errors import NumericError
from .evaluation import evaluate_suite, write_report
from .generate import DIFFICULTIES, generate_suite
from .network import load_checkpoint, model_forward, save_checkpoint
from .planner import AnalyticField, LearnedField, plan_trajectory, write_trajectory_csv
from .scenario import GridSpec, load_scenarios, rasterize, save_suite
from .training import TrainConfig, fit, make_training_sequences, write_loss_csv


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad usage; route through UsageError so
    # usage problems exit 1 and input problems keep 2.
    def error(self, message):
        raise UsageError(message)


DEFAULT_CONFIG = {
    "seed": 0,
    "apf": {"xi": 0.05, "eta": 2.0, "d0": 8.0, "u_cap": 10.0},
    "generate": {"count": 100, "difficulty": "mixed", "horizon_steps": 5, "dt": 0.1},
    "train": {
        "epochs": 20,
        "learning_rate": 1e-3,
        "train_fraction": 0.8,
        "optimizer": "adam",
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "hidden": 128,
    },
    "planner": {"budget": 200},
    "heatmap": {"t": 0, "source": "analytic"},
    "plan": {"source": "analytic"},
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ValueError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ValueError(f"config key {where!r} must be an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _load_config(args) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            config = _merge(config, json.load(fh))
    # Flags override file values.
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    if getattr(args, "count", None) is not None:
        config["generate"]["count"] = args.count
    if getattr(args, "difficulty", None) is not None:
        config["generate"]["difficulty"] = args.difficulty
    if getattr(args, "epochs", None) is not None:
        config["train"]["epochs"] = args.epochs
    if getattr(args, "t", None) is not None:
        config["heatmap"]["t"] = args.t
    if getattr(args, "source", None) is not None:
        config["heatmap"]["source"] = args.source
        config["plan"]["source"] = args.source
    return config


def _echo_config(config: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _learned_source(args, config):
    if not getattr(args, "checkpoint", None):
        raise UsageError("--checkpoint is required with --source learned")
    params, _horizon = load_checkpoint(args.checkpoint)
    return LearnedField(params, GridSpec())


def _cmd_generate(args) -> None:
    config = _load_config(args)
    gen = config["generate"]
    suite = generate_suite(
        count=int(gen["count"]),
        seed=int(config["seed"]),
        difficulty=gen["difficulty"],
        horizon_steps=int(gen["horizon_steps"]),
        dt=float(gen["dt"]),
    )
    out = Path(args.out)
    _echo_config(config, out)
    save_suite(suite, out / "suite.json")


def _cmd_train(args) -> None:
    config = _load_config(args)
    scenarios = load_scenarios(args.suite)
    apf = ApfParams.from_dict(config["apf"])
    dataset = make_training_sequences(scenarios, GridSpec(), apf)
    tc = config["train"]
    train_config = TrainConfig(
        dataset=dataset,
        epochs=int(tc["epochs"]),
        learning_rate=float(tc["learning_rate"]),
        seed=int(config["seed"]),
        train_fraction=float(tc["train_fraction"]),
        optimizer=tc["optimizer"],
        beta1=float(tc["beta1"]),
        beta2=float(tc["beta2"]),
        eps=float(tc["eps"]),
        hidden=int(tc["hidden"]),
    )
    params, records = fit(train_config)
    out = Path(args.out)
    _echo_config(config, out)
    save_checkpoint(out / "checkpoint.bin", params, max(s.horizon_steps for s in scenarios))
    write_loss_csv(records, out / "loss.csv")


def _write_pgm(values: np.ndarray, path: Path) -> None:
    # Plain portable graymap: 0 = low potential (dark), 255 = high (light).
    pixels = np.clip(np.rint(values * 255.0), 0, 255).astype(int)
    lines = ["P2", f"{values.shape[1]} {values.shape[0]}", "255"]
    for row in pixels:
        lines.append(" ".join(str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_grid_csv(values: np.ndarray, path: Path) -> None:
    lines = [",".join(f"{v:.17g}" for v in row) for row in values]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_heatmap(args) -> None:
    config = _load_config(args)
    scenario = load_scenarios(args.suite)[0]
    t = int(config["heatmap"]["t"])
    source = config["heatmap"]["source"]
    if not 0 <= t < scenario.horizon_steps:
        raise ValueError(f"step {t} outside horizon [0, {scenario.horizon_steps})")

    if source == "analytic":
        frame = build_ideal_frame(scenario, t, GridSpec(), ApfParams.from_dict(config["apf"]))
        values = frame.grid.values
        raw = frame.raw_potential
    else:
        if not getattr(args, "checkpoint", None):
            raise UsageError("--checkpoint is required with --source learned")
        params, _horizon = load_checkpoint(args.checkpoint)
        inputs = np.stack(
            [rasterize(scenario, k).values for k in range(scenario.horizon_steps)]
        )
        outputs, _ = model_forward(inputs, params, record_trace=False)
        values = outputs[t]
        raw = outputs[t]
    if not np.all(np.isfinite(values)):
        raise NumericError("non-finite field values")

    out = Path(args.out)
    _echo_config(config, out)
    _write_pgm(values, out / f"heatmap_{source}.pgm")
    _write_grid_csv(raw, out / f"heatmap_{source}.csv")


def _cmd_plan(args) -> None:
    config = _load_config(args)
    scenario = load_scenarios(args.suite)[0]
    source_name = config["plan"]["source"]
    if source_name == "analytic":
        source = AnalyticField(ApfParams.from_dict(config["apf"]))
    else:
        source = _learned_source(args, config)
    trajectory = plan_trajectory(source, scenario, budget=int(config["planner"]["budget"]))
    if not np.all(np.isfinite(trajectory.positions)):
        raise NumericError("non-finite trajectory positions")
    out = Path(args.out)
    _echo_config(config, out)
    write_trajectory_csv(trajectory, out / f"trajectory_{source_name}.csv")


def _cmd_evaluate(args) -> None:
    config = _load_config(args)
    scenarios = load_scenarios(args.suite)
    params, _horizon = load_checkpoint(args.checkpoint)
    sources = {
        "analytic": AnalyticField(ApfParams.from_dict(config["apf"])),
        "learned": LearnedField(params, GridSpec()),
    }
    report = evaluate_suite(scenarios, sources, budget=int(config["planner"]["budget"]))
    out = Path(args.out)
    _echo_config(config, out)
    write_report(report, out)


def _build_parser() -> _Parser:
    parser = _Parser(prog="apfnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, suite=False, checkpoint=False, checkpoint_required=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="random seed override")
        p.add_argument("--out", required=True, help="output directory")
        if suite:
            p.add_argument("--suite", required=True, help="scenario suite or single-scenario JSON")
        if checkpoint or checkpoint_required:
            p.add_argument(
                "--checkpoint", required=checkpoint_required, help="model checkpoint file"
            )

    p = sub.add_parser("generate", help="write a synthetic scenario suite")
    common(p)
    p.add_argument("--count", type=int, help="number of scenarios")
    p.add_argument("--difficulty", choices=DIFFICULTIES, help="obstacle preset")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train the field predictor on a suite")
    common(p, suite=True)
    p.add_argument("--epochs", type=int, help="training epochs")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("heatmap", help="export a field map as PGM + CSV")
    common(p, suite=True, checkpoint=True)
    p.add_argument("--t", type=int, help="scenario step")
    p.add_argument("--source", choices=("analytic", "learned"), help="field source")
    p.set_defaults(func=_cmd_heatmap)

    p = sub.add_parser("plan", help="plan a trajectory for the first scenario")
    common(p, suite=True, checkpoint=True)
    p.add_argument("--source", choices=("analytic", "learned"), help="field source")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("evaluate", help="benchmark both field sources on a suite")
    common(p, suite=True, checkpoint_required=True)
    p.set_defaults(func=_cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError, json.JSONDecodeError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
