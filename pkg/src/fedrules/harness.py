"""Run configuration, the federated training loop, and run reports."""

from __future__ import annotations

import dataclasses
import json
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence


from .client import local_round, make_client
from .datasets import (
    GeneratorSpec,
    default_cub_spec,
    default_overlay_spec,
    generate_cub_like,
    generate_mnist_like,
    parse_confidence_mix,
    partition,
    read_dataset,
)
from .errors import ConfigError, DataIOError, InvalidArgumentError
from .metrics import MetricsReport, ROW_LABELS, evaluate, format_metrics_table, model_accuracy
from .model import ConceptPredictor
from .rules import DnfRule, FeatureSchema, format_rule, rule_to_record
from .seeding import derive_rng, derive_seed
from .server import MODES, TALLY_MODES, GlobalRound, server_round

log = logging.getLogger(__name__)

DATASET_KINDS = ("cub_like", "mnist_like")


@dataclass(frozen=True)
class RunConfig:
    # data
    dataset: str = "cub_like"  # cub_like | mnist_like | path to a dataset file
    n_points: int = 1000
    n_features: int = 20
    n_groups: int = 5
    n_classes: int = 4
    noise_rate: float = 0.05
    confidence_mix: str = "definitely:1.0"
    planted_conjunctions: int = 1  # max planted conjunctions per class
    hetero_clients: int = 0
    hetero_confidence_mix: str = "guessing:0.8,definitely:0.2"
    hetero_noise_rate: float = 0.3
    val_frac: float = 0.05
    test_frac: float = 0.05
    local_test_frac: float = 0.2
    # federation
    clients: int = 10
    rounds_max: int = 30
    target_accuracy: float = 0.95
    epochs: int = 50
    learning_rate: float = 0.1
    batch_size: int = 0  # 0 = full batch
    m: int = 3
    relevance_threshold: float = 0.5
    satisfaction_threshold: float = 0.5
    max_conjunctions: int = 5
    mode: str = "uncertainty"
    tally_mode: str = "ranked"
    seed: int = 0
    workers: int = 1
    output_dir: str = ""

    def __post_init__(self):
        def bad(name, why):
            raise ConfigError(f"config field {name!r}: {why} (got {getattr(self, name)!r})")

        for name in (
            "n_points",
            "n_features",
            "n_groups",
            "clients",
            "m",
            "max_conjunctions",
            "workers",
            "planted_conjunctions",
        ):
            if getattr(self, name) < 1:
                bad(name, "must be >= 1")
        if self.n_classes < 2:
            bad("n_classes", "must be >= 2")
        for name in ("rounds_max", "epochs", "batch_size", "hetero_clients"):
            if getattr(self, name) < 0:
                bad(name, "must be >= 0")
        if self.hetero_clients > self.clients:
            bad("hetero_clients", "cannot exceed clients")
        for name in ("noise_rate", "hetero_noise_rate", "target_accuracy", "satisfaction_threshold"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                bad(name, "must lie in [0, 1]")
        for name in ("val_frac", "test_frac"):
            if not 0.0 <= getattr(self, name) < 0.5:
                bad(name, "must lie in [0, 0.5)")
        if self.val_frac == 0.0 and self.rounds_max > 0:
            bad("val_frac", "the server needs a validation set")
        if not 0.0 <= self.local_test_frac < 1.0:
            bad("local_test_frac", "must lie in [0, 1)")
        if not 0.0 < self.relevance_threshold < 1.0:
            bad("relevance_threshold", "must lie in (0, 1)")
        if self.learning_rate <= 0:
            bad("learning_rate", "must be positive")
        if self.mode not in MODES:
            bad("mode", f"must be one of {MODES}")
        if self.tally_mode not in TALLY_MODES:
            bad("tally_mode", f"must be one of {TALLY_MODES}")
        for name in ("confidence_mix", "hetero_confidence_mix"):
            try:
                parse_confidence_mix(getattr(self, name))
            except (InvalidArgumentError, ValueError) as exc:
                bad(name, str(exc))
        if self.dataset != "cub_like" and self.hetero_clients:
            bad("hetero_clients", "per-client overrides need the cub_like generator")

    def to_record(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _coerce(name: str, raw: str, kind) -> object:
    try:
        if kind is int or kind == "int":
            return int(raw)
        if kind is float or kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"config field {name!r}: cannot parse {raw!r} as {kind}") from None
    return raw


def config_from_mapping(values: Mapping[str, object], base: RunConfig | None = None) -> RunConfig:
    """Build a config from string or typed values, validating the keys."""
    base = base or RunConfig()
    types = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    changes = {}
    for key, raw in values.items():
        key = key.strip().replace("-", "_")
        if key not in types:
            raise ConfigError(f"unknown config field {key!r}")
        changes[key] = _coerce(key, raw.strip(), types[key]) if isinstance(raw, str) else raw
    return dataclasses.replace(base, **changes)


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        values[key.strip()] = value.strip()
    return values


def load_config(path, overrides: Mapping[str, object] | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataIOError(f"cannot read config {path}: {exc}") from exc
    return config_from_mapping({**parse_config_text(text), **(overrides or {})})


def format_config(config: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config.to_record().items())


# --------------------------------------------------------------------- runs


@dataclass
class RunReport:
    config: RunConfig
    schema: FeatureSchema
    rounds: list[GlobalRound]
    metrics: MetricsReport
    final_rules: dict[int, DnfRule]
    planted_rules: tuple[DnfRule, ...] = ()
    hetero_client_ids: tuple[int, ...] = ()
    duration_s: float = field(default=0.0, compare=False)

    def to_record(self) -> dict:
        s = self.schema
        return {
            "config": self.config.to_record(),
            "schema": s.to_record(),
            "hetero_client_ids": list(self.hetero_client_ids),
            "planted_rules": [format_rule(r, s) for r in self.planted_rules],
            "rounds": [gr.to_record(s) for gr in self.rounds],
            "metrics": self.metrics.to_record(),
            "final_rules": {
                "text": [format_rule(self.final_rules[c], s) for c in sorted(self.final_rules)],
                "structured": [rule_to_record(self.final_rules[c], s) for c in sorted(self.final_rules)],
            },
        }

    def to_json(self) -> str:
        # wall-clock time is logged, not serialised, so reports stay byte-identical
        return json.dumps(self.to_record(), indent=2, sort_keys=True) + "\n"

    def metrics_table(self) -> str:
        return format_metrics_table({self.config.mode: self.metrics.to_record()})

    def rules_text(self) -> str:
        return "".join(format_rule(self.final_rules[c], self.schema) + "\n" for c in sorted(self.final_rules))

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "report.json").write_text(self.to_json())
            (out / "metrics.txt").write_text(self.metrics_table() + "\n")
            (out / "rules.txt").write_text(self.rules_text())
        except OSError as exc:
            raise DataIOError(f"cannot write report to {out}: {exc}") from exc
        return out


def load_data(config: RunConfig):
    """Schema, points and the generator spec (None for overlay or file data)."""
    data_seed = derive_seed(config.seed, "data")
    if config.dataset == "cub_like":
        spec = default_cub_spec(
            n_points=config.n_points,
            seed=data_seed,
            noise_rate=config.noise_rate,
            confidence_mix=parse_confidence_mix(config.confidence_mix),
            n_features=config.n_features,
            n_groups=config.n_groups,
            n_classes=config.n_classes,
            conjunctions_per_class=(1, config.planted_conjunctions),
        )
        return spec.schema, generate_cub_like(spec), spec
    if config.dataset == "mnist_like":
        spec = default_overlay_spec(config.n_points, data_seed)
        return spec.schema, generate_mnist_like(spec), None
    schema, points = read_dataset(config.dataset)
    return schema, points, None


def build_split(config: RunConfig, points, spec: GeneratorSpec | None):
    split = partition(points, config.clients, config.val_frac, config.test_frac, derive_seed(config.seed, "partition"))
    hetero: tuple[int, ...] = ()
    if config.hetero_clients:
        rng = derive_rng(config.seed, "hetero")
        hetero = tuple(sorted(int(k) for k in rng.choice(config.clients, config.hetero_clients, replace=False)))
        for k in hetero:
            override = dataclasses.replace(
                spec,
                confidence_mix=parse_confidence_mix(config.hetero_confidence_mix),
                noise_rate=config.hetero_noise_rate,
                n_points=len(split.client_shards[k]),
                seed=derive_seed(config.seed, "hetero-shard", k),
            )
            split = split.replace_shard(k, generate_cub_like(override))
    if config.mode == "no_uncertainty":
        split = split.map_points(lambda p: p.with_certainty())
    return split, hetero


def run(config: RunConfig) -> RunReport:
    started = time.perf_counter()
    schema, points, spec = load_data(config)
    split, hetero = build_split(config, points, spec)

    template = ConceptPredictor.initial(
        schema.n_features,
        schema.n_classes,
        seed=derive_seed(config.seed, "init"),
        learning_rate=config.learning_rate,
        epochs=config.epochs,
        relevance_threshold=config.relevance_threshold,
        satisfaction_threshold=config.satisfaction_threshold,
        batch_size=config.batch_size or None,
    )
    clients = [
        make_client(
            k,
            shard,
            schema,
            template,
            local_test_frac=config.local_test_frac,
            root_seed=config.seed,
            max_conjunctions=config.max_conjunctions,
        )
        for k, shard in enumerate(split.client_shards)
    ]

    rounds: list[GlobalRound] = []
    global_params = None
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for r in range(config.rounds_max):
            step = lambda st: local_round(st, global_params)  # noqa: E731
            results = list(pool.map(step, clients)) if pool else [step(st) for st in clients]
            clients = [st for st, _ in results]
            reports = [rep for _, rep in results]
            gr = server_round(
                reports,
                split.validation,
                schema,
                m=config.m,
                mode=config.mode,
                round_index=r,
                tally_mode=config.tally_mode,
                threshold=config.satisfaction_threshold,
            )
            global_params = gr.params
            gr.validation_model_accuracy = model_accuracy(template.with_params(global_params), split.validation)
            rounds.append(gr)
            log.info(
                "round %d: val acc %.4f, rules for %d/%d classes",
                r,
                gr.validation_model_accuracy,
                len(gr.rules),
                schema.n_classes,
            )
            if gr.validation_model_accuracy >= config.target_accuracy:
                log.info("target validation accuracy reached after %d rounds", r + 1)
                break
    finally:
        if pool:
            pool.shutdown()

    final = template if global_params is None else template.with_params(global_params)
    final_rules = rounds[-1].rules if rounds else {}
    metrics = evaluate(final_rules, final, split.test, config.satisfaction_threshold)
    report = RunReport(
        config,
        schema,
        rounds,
        metrics,
        dict(final_rules),
        spec.planted_rules if spec is not None else (),
        hetero,
        time.perf_counter() - started,
    )
    log.info("run finished in %.2fs", report.duration_s)
    if config.output_dir:
        report.write(config.output_dir)
    return report


@dataclass
class Comparison:
    modes: tuple[str, ...]
    seeds: tuple[int, ...]
    runs: dict[str, list[RunReport]]

    def values(self, mode: str, key: str) -> list[float]:
        return [getattr(r.metrics, key) for r in self.runs[mode]]

    def mean(self, mode: str, key: str) -> float:
        return statistics.fmean(self.values(mode, key))

    def stdev(self, mode: str, key: str) -> float:
        vals = self.values(mode, key)
        return statistics.stdev(vals) if len(vals) > 1 else 0.0

    def table(self) -> str:
        cols = {}
        for mode in self.modes:
            col = {}
            for key, _ in ROW_LABELS:
                if key == "rule_uncertainty" and mode == "no_uncertainty":
                    col[key] = "-"
                elif len(self.seeds) == 1:
                    col[key] = self.mean(mode, key)
                else:
                    col[key] = f"{100 * self.mean(mode, key):.2f}% ± {100 * self.stdev(mode, key):.2f}"
            cols[mode] = col
        return format_metrics_table(cols)

    def to_record(self) -> dict:
        return {
            "modes": list(self.modes),
            "seeds": list(self.seeds),
            "summary": {
                mode: {key: {"mean": self.mean(mode, key), "stdev": self.stdev(mode, key)} for key, _ in ROW_LABELS}
                for mode in self.modes
            },
            "runs": {mode: [r.metrics.to_record() for r in reps] for mode, reps in self.runs.items()},
        }


def compare_modes(config: RunConfig, modes: Sequence[str], seeds: Sequence[int]) -> Comparison:
    if not modes or not seeds:
        raise InvalidArgumentError("compare_modes needs at least one mode and one seed")
    for mode in modes:
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
    runs = {mode: [run(config.replace(mode=mode, seed=s, output_dir="")) for s in seeds] for mode in modes}
    return Comparison(tuple(modes), tuple(seeds), runs)
