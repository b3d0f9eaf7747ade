"""Python interface to the MERIT node-embedding library."""

import json

from ._merit import (
    ConfigError,
    DimensionError,
    Graph,
    IoError,
    MeritError,
    Model,
    NumericError,
    ParseError,
    ValidationError,
    evaluate,
    grad_check,
    init_model,
    load_dataset,
    make_block_graph,
    ppr_diffusion,
    save_dataset,
)
from ._merit import _default_config_json, _fit_json

__all__ = [
    "ConfigError", "DimensionError", "Graph", "IoError", "MeritError", "Model", "NumericError",
    "ParseError", "ValidationError", "default_config", "evaluate", "fit", "grad_check", "init_model",
    "load_dataset", "make_block_graph", "ppr_diffusion", "save_dataset",
]


def default_config():
    """The training configuration defaults as a nested dict."""
    return json.loads(_default_config_json())


def fit(graph, config=None, **overrides):
    """Train on `graph`. `config` is a (partial) config dict; keyword
    overrides are applied on top. Returns (model, log) where log holds one
    dict per epoch."""
    cfg = dict(config or {})
    cfg.update(overrides)
    return _fit_json(graph, json.dumps(cfg))
