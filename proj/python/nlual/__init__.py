"""Active learning for multi-domain NLU."""

import json as _json

from ._core import (  # noqa: F401
    ConfigError,
    Error,
    NluSystem,
    algorithm_table,
    bootstrap,
    filter_passes,
    relative_reduction,
    score,
    score_ser,
    split,
    synth,
    validate_corpus,
    wilcoxon,
)
from . import _core


def simulate(config, base_dir=""):
    """Run a simulation from a config dict or JSON string; returns the report as a dict."""
    text = config if isinstance(config, str) else _json.dumps(config)
    return _json.loads(_core.simulate(text, str(base_dir)))


def load_corpus_text(path):
    with open(path, encoding="utf-8") as f:
        return f.read()
