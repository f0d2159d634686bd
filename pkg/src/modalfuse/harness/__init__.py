"""Config-driven experiment harness and CLI."""

from .config import (
    ExperimentConfig,
    FormatConfig,
    FusionConfig,
    ModalityConfig,
    ModelConfig,
    ProviderSpec,
    SvmConfig,
    load_config,
    parse_config,
)
from .report import report_tables
from .run import RunResult, SwapReport, TargetAudit, load_result, run, save_result, swap_head_to_svm

__all__ = [
    "ExperimentConfig",
    "FormatConfig",
    "FusionConfig",
    "ModalityConfig",
    "ModelConfig",
    "ProviderSpec",
    "RunResult",
    "SvmConfig",
    "SwapReport",
    "TargetAudit",
    "load_config",
    "load_result",
    "parse_config",
    "report_tables",
    "run",
    "save_result",
    "swap_head_to_svm",
]
