"""Command line entry point: ``lpud {simulate-rirs,learn,run,experiment,preset}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PRESETS, ExperimentConfig, load_config
from .errors import LpudError
from .harness import (
    PreparedModels,
    build_training_set,
    learn_models,
    prepare_models,
    run_experiment,
    run_trial,
    write_trial_csv,
)
from .metrics import to_db
from .rir import RirDataset
from .subspace import SubspaceUnion

log = logging.getLogger("lpud")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out_dir is not None:
        changes["out_dir"] = str(args.out_dir)
    return cfg.replace(**changes) if changes else cfg


def _load_models(cfg: ExperimentConfig, models_dir) -> PreparedModels:
    if models_dir is None:
        return prepare_models(cfg)
    unions = {}
    for name in ("gpud", "lpud"):
        if name in cfg.algorithms:
            unions[name] = SubspaceUnion.load(Path(models_dir) / name)
    return prepare_models(cfg, unions=unions)


def cmd_simulate_rirs(args) -> int:
    cfg = _config(args)
    dataset = build_training_set(cfg)
    path = dataset.save(Path(cfg.out_dir))
    print(f"wrote {dataset.G} RIR stacks (R = {dataset.R}) to {path}")
    return 0


def cmd_learn(args) -> int:
    cfg = _config(args)
    dataset = RirDataset.load(args.dataset) if args.dataset else build_training_set(cfg)
    out = Path(cfg.out_dir)
    for name, union in learn_models(cfg, dataset).items():
        union.save(out / name)
        dims = sorted({m.D for m in union.models})
        print(f"{name}: I = {union.I}, D in {dims}, cluster sizes {[m.cluster_size for m in union.models]}")
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    models = _load_models(cfg, args.models)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_trial(cfg, args.trial, models)
    path = out / f"trial_snr{result.snr_db:+g}_{result.trial:03d}.csv"
    write_trial_csv(result, cfg, path)
    for name in cfg.algorithms:
        avg = result.mismatch_avg[name]
        print(f"{name:9s} mismatch cp {to_db(avg['cp']):7.2f} dB  ss {to_db(avg['ss']):7.2f} dB")
    print(f"wrote {path}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _config(args)
    if args.jobs is not None:
        cfg = cfg.replace(n_jobs=args.jobs)
    models = _load_models(cfg, args.models)
    results = run_experiment(cfg, models)
    print(f"{len(results)} trials written to {cfg.out_dir}")
    return 0


def cmd_preset(args) -> int:
    print(json.dumps(PRESETS[args.name]().to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpud", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="JSON experiment configuration")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--out-dir", type=Path, default=None, help="output directory (overrides config)")
        return p

    common(sub.add_parser("simulate-rirs", help="simulate the RIR training set")).set_defaults(func=cmd_simulate_rirs)
    p = common(sub.add_parser("learn", help="learn global and local subspace unions"))
    p.add_argument("--dataset", type=Path, help="dataset directory from simulate-rirs")
    p.set_defaults(func=cmd_learn)
    p = common(sub.add_parser("run", help="run a single trial"))
    p.add_argument("--models", type=Path, help="directory written by learn")
    p.add_argument("--trial", type=int, default=0)
    p.set_defaults(func=cmd_run)
    p = common(sub.add_parser("experiment", help="Monte Carlo sweep"))
    p.add_argument("--models", type=Path, help="directory written by learn")
    p.add_argument("--jobs", type=int, default=None, help="parallel worker processes")
    p.set_defaults(func=cmd_experiment)
    p = sub.add_parser("preset", help="print a preset configuration as JSON")
    p.add_argument("name", choices=sorted(PRESETS))
    p.set_defaults(func=cmd_preset)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except LpudError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
