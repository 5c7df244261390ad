"""Command-line entry point: ``htnet <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import RunConfig, load_config
from .forge import MAP_KINDS, ScenarioFormatError, capacity, generate_dataset, read_scenarios, write_scenarios
from .manifest import RunManifest

SCENARIO_FILE = "scenarios.jsonl"

log = logging.getLogger("htnet")


def _data_path(p: str) -> Path:
    path = Path(p)
    if path.is_dir():
        path = path / SCENARIO_FILE
    if not path.is_file():
        raise FileNotFoundError(f"scenario file not found: {path}")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, cfg: RunConfig, out: Path, outputs: list[Path], inputs=()) -> None:
    m = RunManifest(args.command, cfg.seed, cfg.to_dict(), outputs=[p.name for p in outputs])
    for p in inputs:
        m.add_input(p)
    m.write(out / "manifest.json")


def cmd_gen(args, cfg: RunConfig) -> int:
    n = cfg.data.n_scenarios if args.n is None else args.n
    if n < 0:
        raise ValueError("--n must be non-negative")
    kinds = MAP_KINDS if args.map == "mixed" else (args.map,)
    lo, hi = cfg.data.agents
    if any(lo > capacity(k) for k in kinds):
        raise ValueError(f"map {args.map!r} cannot hold {lo} agents")
    out = _out_dir(args)
    path = out / SCENARIO_FILE
    count = write_scenarios(path, generate_dataset(n, cfg.seed, kinds, (lo, hi), cfg.forge))
    _manifest(args, cfg, out, [path])
    print(f"wrote {count} scenarios to {path}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    from .train import train

    data = _data_path(args.data)
    scenarios = read_scenarios(data)
    steps = cfg.train.steps if args.steps is None else args.steps
    out = _out_dir(args)
    res = train(scenarios, replace(cfg.train, steps=steps), out)
    _manifest(args, cfg, out, [res.checkpoint, out / "train_log.csv"], [data])
    last = res.history[-1]["total"] if res.history else float("nan")
    print(f"trained {len(res.history)} steps, final loss {last:.6f}, skipped {res.skipped}"
          + (", diverged" if res.diverged else ""))
    print(f"checkpoint: {res.checkpoint}")
    return 1 if res.diverged else 0


def cmd_eval(args, cfg: RunConfig) -> int:
    from .train import evaluate, load_model

    data = _data_path(args.data)
    model = load_model(args.checkpoint)
    ev = evaluate(model, read_scenarios(data), cfg.eval.batch_size, cfg.eval.lane_threshold)
    out = _out_dir(args)
    path = ev.report.to_csv(out / "metrics.csv")
    _manifest(args, cfg, out, [path], [data, Path(args.checkpoint)])
    for k, v in ev.report.as_dict().items():
        if k.startswith(("min", "maneuver", "lane")):
            print(f"{k}: {v}")
    return 0


def cmd_noise_sweep(args, cfg: RunConfig) -> int:
    from .experiments import monotonicity, noise_sweep, sweep_rows, write_rows
    from .train import load_model

    data = _data_path(args.data)
    models = {"sparse": load_model(args.sparse), "vanilla": load_model(args.vanilla)}
    mode = args.mode or cfg.noise.mode
    trials = cfg.noise.trials if args.trials is None else args.trials
    cells = noise_sweep(models, read_scenarios(data), cfg.noise.probabilities, mode, trials, cfg.seed,
                        cfg.eval.batch_size)
    out = _out_dir(args)
    path = write_rows(out / "noise_sweep.csv", sweep_rows(cells))
    _manifest(args, cfg, out, [path], [data, Path(args.sparse), Path(args.vanilla)])
    for name in models:
        print(f"{name}: spearman(p, minFDE_K) = {monotonicity(cells, name):.3f}")
    print(f"table: {path}")
    return 0


def cmd_ablate(args, cfg: RunConfig) -> int:
    from .experiments import ablate, write_rows

    data = _data_path(args.data)
    train_set = read_scenarios(data)
    eval_set = read_scenarios(_data_path(args.eval_data)) if args.eval_data else train_set
    steps = cfg.train.steps if args.steps is None else args.steps
    out = _out_dir(args)
    rows = ablate(train_set, eval_set, replace(cfg.train, steps=steps), out_dir=out / "runs")
    path = write_rows(out / "ablation.csv", rows)
    _manifest(args, cfg, out, [path], [data])
    print(f"table: {path}")
    return 0


def cmd_export_attn(args, cfg: RunConfig) -> int:
    from .experiments import export_attention
    from .train import load_model

    data = _data_path(args.data)
    scenarios = read_scenarios(data)
    if not 0 <= args.index < len(scenarios):
        raise ValueError(f"--index {args.index} out of range for {len(scenarios)} scenarios")
    sc = scenarios[args.index]
    if not 0 <= args.agent < sc.n_agents:
        raise ValueError(f"--agent {args.agent} out of range for {sc.n_agents} agents")
    out = _out_dir(args)
    csv_path, svg_path = export_attention(load_model(args.checkpoint), sc, out, args.agent)
    _manifest(args, cfg, out, [csv_path, svg_path], [data, Path(args.checkpoint)])
    print(f"wrote {csv_path} and {svg_path}")
    return 0


def cmd_grad_check(args, cfg: RunConfig) -> int:
    from .checks import run_grad_checks

    checks = run_grad_checks(cfg.seed, args.coords)
    for c in checks:
        print(c.line(args.tol))
    ok = all(c.passed(args.tol) for c in checks)
    print(f"{sum(c.passed(args.tol) for c in checks)}/{len(checks)} layers passed")
    return 0 if ok else 1


def cmd_prop_check(args, cfg: RunConfig) -> int:
    from .props import run_all

    suites = run_all(cfg.seed)
    for s in suites:
        print(s.line())
    print(f"{sum(s.ok for s in suites)}/{len(suites)} suites passed")
    return 0 if all(s.ok for s in suites) else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the configured seed")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="htnet", description="Trajectory prediction on synthetic driving scenes.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen", parents=[common], help="generate synthetic scenarios")
    p.add_argument("--map", default="mixed", choices=MAP_KINDS + ("mixed",))
    p.add_argument("--n", type=int, help="number of scenarios")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--data", required=True, help="scenario file or directory containing one")
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("noise-sweep", parents=[common], help="compare two checkpoints under perception noise")
    p.add_argument("--sparse", required=True, help="checkpoint of the sparse-attention model")
    p.add_argument("--vanilla", required=True, help="checkpoint of the vanilla-attention model")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("gaussian", "loss"))
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("ablate", parents=[common], help="train and evaluate every ablation variant")
    p.add_argument("--data", required=True)
    p.add_argument("--eval-data", help="held-out scenarios (default: the training data)")
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-attn", parents=[common], help="export lane attention weights as CSV and SVG")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0, help="scenario index")
    p.add_argument("--agent", type=int, default=0, help="agent drawn in the SVG")
    p.set_defaults(func=cmd_export_attn)

    p = sub.add_parser("grad-check", parents=[common], help="finite-difference check of every layer and loss")
    p.add_argument("--coords", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("prop-check", parents=[common], help="run the KL and entropy property suites")
    p.set_defaults(func=cmd_prop_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        return args.func(args, cfg)
    except (OSError, ValueError, KeyError, ScenarioFormatError) as exc:
        print(f"htnet {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
