"""Federated training of concept classifiers with uncertainty-scored rule explanations."""

from .client import ClientState, RuleReport, local_round, make_client
from .datasets import (
    FederatedSplit,
    GeneratorSpec,
    OverlaySpec,
    generate_cub_like,
    generate_mnist_like,
    partition,
)
from .harness import RunConfig, RunReport, compare_modes, run
from .metrics import MetricsReport, model_accuracy, rule_accuracy, rule_fidelity, rule_uncertainty
from .model import (
    ConceptDataPoint,
    ConceptPredictor,
    apply_uncertainty,
    extract_sample_rule,
    predict,
    relevance_matrix,
    train,
)
from .rules import (
    Conjunction,
    DnfRule,
    FeatureSchema,
    canonicalize,
    combine_and,
    combine_or,
    conflicts,
    conjunction_uncertainty,
    rule_satisfied,
)
from .server import (
    GlobalRound,
    RuleGroup,
    aggregate_class_rule,
    aggregate_models,
    client_weights,
    group_and_rank,
    server_round,
)

__version__ = "0.1.0"

__all__ = [
    "ClientState",
    "RuleReport",
    "local_round",
    "make_client",
    "FederatedSplit",
    "GeneratorSpec",
    "OverlaySpec",
    "generate_cub_like",
    "generate_mnist_like",
    "partition",
    "RunConfig",
    "RunReport",
    "compare_modes",
    "run",
    "MetricsReport",
    "model_accuracy",
    "rule_accuracy",
    "rule_fidelity",
    "rule_uncertainty",
    "ConceptDataPoint",
    "ConceptPredictor",
    "apply_uncertainty",
    "extract_sample_rule",
    "predict",
    "relevance_matrix",
    "train",
    "Conjunction",
    "DnfRule",
    "FeatureSchema",
    "canonicalize",
    "combine_and",
    "combine_or",
    "conflicts",
    "conjunction_uncertainty",
    "rule_satisfied",
    "GlobalRound",
    "RuleGroup",
    "aggregate_class_rule",
    "aggregate_models",
    "client_weights",
    "group_and_rank",
    "server_round",
]
