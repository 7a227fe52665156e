"""Command-line entry point: ``fedrules {generate,run,compare,eval-rule}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .datasets import (
    default_cub_spec,
    default_overlay_spec,
    generate_cub_like,
    generate_mnist_like,
    parse_confidence_mix,
    read_dataset,
    write_dataset,
)
from .errors import DataIOError, FedRulesError
from .harness import RunConfig, compare_modes, config_from_mapping, load_config, run
from .metrics import rule_accuracy_per_class
from .rules import format_rule, read_rule_file

log = logging.getLogger("fedrules")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    for f in dataclasses.fields(RunConfig):
        kind = {"int": int, "float": float}.get(f.type, str)
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind, default=None)
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v rounds, -vv aggregation traces")


def _config(args) -> RunConfig:
    overrides = {
        f.name: getattr(args, f.name) for f in dataclasses.fields(RunConfig) if getattr(args, f.name) is not None
    }
    if args.config:
        return load_config(args.config, overrides)
    return config_from_mapping(overrides)


def cmd_generate(args) -> int:
    if args.kind == "cub_like":
        spec = default_cub_spec(
            n_points=args.n_points,
            seed=args.seed,
            noise_rate=args.noise_rate,
            confidence_mix=parse_confidence_mix(args.confidence_mix),
            n_features=args.n_features,
            n_groups=args.n_groups,
            n_classes=args.n_classes,
        )
        schema, points = spec.schema, generate_cub_like(spec)
        if args.rules_out:
            text = "".join(format_rule(r, schema) + "\n" for r in spec.planted_rules)
            try:
                Path(args.rules_out).write_text(text)
            except OSError as exc:
                raise DataIOError(f"cannot write {args.rules_out}: {exc}") from exc
    else:
        spec = default_overlay_spec(args.n_points, args.seed)
        schema, points = spec.schema, generate_mnist_like(spec)
    write_dataset(args.out, schema, points)
    print(f"wrote {len(points)} points to {args.out}")
    return 0


def cmd_run(args) -> int:
    config = _config(args)
    report = run(config)
    print(report.metrics_table())
    print()
    print(report.rules_text(), end="")
    if config.output_dir:
        print(f"\nreport written to {config.output_dir}")
    return 0


def cmd_compare(args) -> int:
    config = _config(args)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    comparison = compare_modes(config, modes, seeds)
    print(comparison.table())
    if config.output_dir:
        out = Path(config.output_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "comparison.json").write_text(json.dumps(comparison.to_record(), indent=2, sort_keys=True) + "\n")
            (out / "comparison.txt").write_text(comparison.table() + "\n")
        except OSError as exc:
            raise DataIOError(f"cannot write comparison to {out}: {exc}") from exc
    return 0


def cmd_eval_rule(args) -> int:
    schema, points = read_dataset(args.data)
    try:
        text = Path(args.rules).read_text()
    except OSError as exc:
        raise DataIOError(f"cannot read {args.rules}: {exc}") from exc
    rules = {r.class_index: r for r in read_rule_file(text, schema)}
    scores, missing = rule_accuracy_per_class(rules, points, schema.n_classes, args.threshold)
    for c, s in enumerate(scores):
        flag = "  (no rule: scored as always-false)" if c in missing else ""
        print(f"{schema.class_names[c]}: rule accuracy {s:.4f}{flag}")
    print(f"mean rule accuracy {float(np.mean(scores)):.4f} over {len(points)} points")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedrules", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset file")
    g.add_argument("--kind", choices=["cub_like", "mnist_like"], default="cub_like")
    g.add_argument("--n-points", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise-rate", type=float, default=0.05)
    g.add_argument("--confidence-mix", default="definitely:1.0")
    g.add_argument("--n-features", type=int, default=20)
    g.add_argument("--n-groups", type=int, default=5)
    g.add_argument("--n-classes", type=int, default=4)
    g.add_argument("--rules-out", help="also write the planted rules (cub_like only)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run one federated training session")
    _add_config_flags(r)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="sweep aggregation modes over seeds")
    _add_config_flags(c)
    c.add_argument("--modes", default="uncertainty,fedavg,no_uncertainty")
    c.add_argument("--seeds", default="0,1,2")
    c.set_defaults(func=cmd_compare)

    e = sub.add_parser("eval-rule", help="score a rule file against a dataset file")
    e.add_argument("--rules", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--threshold", type=float, default=0.5)
    e.set_defaults(func=cmd_eval_rule)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    verbose = getattr(args, "verbose", 0)
    logging.basicConfig(
        level=logging.DEBUG if verbose > 1 else logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except FedRulesError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
