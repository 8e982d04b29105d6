"""Aerial-ground video person re-identification toolkit.

Thin wrappers over the compiled core; JSON payloads come back as Python objects.
"""

import json

from . import _agvp
from ._agvp import (
    AgvpError,
    cmc,
    distances,
    gamma_correct,
    generate_corpus as _generate_corpus,
    histogram_match,
    load_manifest,
    mean_ap,
    normalize_and_aggregate,
    normalize_uv,
    rank,
    read_embeddings,
    rrf,
    write_embeddings,
)

__all__ = [
    "AgvpError",
    "cmc",
    "default_gen_config",
    "default_run_config",
    "distances",
    "evaluate",
    "gamma_correct",
    "generate_corpus",
    "histogram_match",
    "load_manifest",
    "mean_ap",
    "normalize_and_aggregate",
    "normalize_uv",
    "rank",
    "read_embeddings",
    "rrf",
    "run_benchmark",
    "write_embeddings",
]


def default_gen_config():
    return json.loads(_agvp.default_gen_config())


def default_run_config():
    return json.loads(_agvp.default_run_config())


def generate_corpus(config, out_dir):
    """Writes a synthetic corpus; `config` holds GenConfig keys, missing ones take defaults."""
    merged = default_gen_config()
    merged.update(config or {})
    return _generate_corpus(json.dumps(merged), str(out_dir))


def evaluate(manifest, ids, embeddings, direction="a2g", altitude=None, distractors=True):
    return json.loads(_agvp.evaluate(str(manifest), list(ids), embeddings, direction, altitude, distractors))


def run_benchmark(config, out_dir):
    return json.loads(_agvp.run_benchmark(json.dumps(config or {}), str(out_dir)))
