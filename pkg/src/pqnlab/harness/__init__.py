from .config import ConfigError, ExperimentConfig, parse_config, parse_seeds, parse_text, schema, schema_doc
from .metrics import MetricsLog, aggregate, iqm, read_jsonl
from .plots import PlotSpec, emit_plot
from .runner import run_experiment

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "parse_seeds", "parse_text", "schema", "schema_doc",
           "MetricsLog", "aggregate", "iqm", "read_jsonl", "PlotSpec", "emit_plot", "run_experiment"]
