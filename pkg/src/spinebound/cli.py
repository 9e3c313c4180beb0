"""``spinebound`` command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 incompatible artifact.
"""

from __future__ import annotations

import argparse
import sys

from . import config as config_mod
from .exceptions import ConfigError, IncompatibleArtifact, NumericalDivergence
from .learner.checkpoint import describe

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_INCOMPATIBLE = 4


def _common(p):
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-path override, repeatable (e.g. ppo.n_envs=8)")
    p.add_argument("--out", help="output directory (default: the config's output)")
    p.add_argument("--seed", type=int, help="shorthand for --override seed=N")
    p.add_argument("--mode", choices=("active", "rigid"), help="shorthand for --override mode=...")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spinebound", description="Train and evaluate bounding policies for the spined quadruped."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a policy")
    _common(p)
    p.add_argument("--resume", action="store_true", help="continue from the run's checkpoint")

    p = sub.add_parser("eval", help="evaluate a checkpoint over several trials")
    p.add_argument("checkpoint")
    _common(p)
    p.add_argument("--trials", type=int, help="number of evaluation episodes")

    p = sub.add_parser("compare", help="spine-vs-rigid table over target speeds")
    _common(p)
    p.add_argument("--trials", type=int, help="evaluation episodes per cell")
    p.add_argument("--train-missing", action="store_true", help="train cells without a checkpoint")

    p = sub.add_parser("inspect-checkpoint", help="print a checkpoint's header")
    p.add_argument("checkpoint")
    return parser


def _load_config(args):
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.mode is not None:
        overrides.append(f"mode={args.mode}")
    if getattr(args, "trials", None) is not None:
        overrides.append(f"eval.trials={args.trials}")
    return config_mod.load(args.config, overrides)


def run(argv=None):
    from . import harness

    args = build_parser().parse_args(argv)
    try:
        if args.command == "inspect-checkpoint":
            print(describe(args.checkpoint))
            return EXIT_OK
        cfg = _load_config(args)
        out = args.out or cfg.output
        if args.command == "train":
            m = harness.cmd_train(cfg, out, resume=args.resume)
            print(f"trained: {out} (config hash {m.config_hash})")
        elif args.command == "eval":
            report, _ = harness.cmd_eval(args.checkpoint, cfg, out)
            sys.stdout.write(report.to_text())
        elif args.command == "compare":
            rows, missing = harness.cmd_compare(cfg, out, train_missing=args.train_missing)
            for speed, mode, why in missing:
                print(f"missing cell v_des={speed} mode={mode}: {why}", file=sys.stderr)
            print(f"comparison table: {out}/comparison.csv ({len(rows)} rows)")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalDivergence as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except IncompatibleArtifact as exc:
        print(f"incompatible artifact: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except FileNotFoundError as exc:
        print(f"incompatible artifact: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
