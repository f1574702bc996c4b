"""Python access to the GRADE benchmark pipeline."""

import json

from . import _grade
from ._grade import (
    ConfigError,
    GradeError,
    MissingArtifactError,
    TransportError,
    aggregate,
    bin_sizes,
    chunk_text,
    pearson,
    resolve_stages,
    set_log_level,
    split_sentences,
)

__all__ = [
    "ConfigError",
    "GradeError",
    "MissingArtifactError",
    "TransportError",
    "aggregate",
    "augment_graph",
    "bin_sizes",
    "build_graph",
    "chunk_text",
    "enumerate_paths",
    "fit_gmm",
    "pearson",
    "resolve_stages",
    "responsibilities",
    "run_pipeline",
    "set_log_level",
    "split_sentences",
]


def fit_gmm(data, k, seed=7, max_iters=200, tol=1e-6):
    """Diagonal-covariance GMM; returns the model as a dict."""
    return json.loads(_grade.fit_gmm_json([list(map(float, x)) for x in data], k, seed, max_iters, tol))


def responsibilities(model, data):
    return _grade.responsibilities_json(json.dumps(model), [list(map(float, x)) for x in data])


def build_graph(triples):
    """Triples are dicts with subject, predicate, object, sentence_id, claim_id."""
    return json.loads(_grade.build_graph_json(json.dumps(list(triples))))


def augment_graph(graph, groups, memberships):
    """Returns (augmented graph, report)."""
    out = json.loads(_grade.augment_graph_json(json.dumps(graph), json.dumps(list(groups)), json.dumps(memberships)))
    return out["graph"], out["report"]


def enumerate_paths(graph, min_hop=2, max_hop=5, per_pair_cap=64):
    return json.loads(_grade.enumerate_paths_json(json.dumps(graph), min_hop, max_hop, per_pair_cap))


def run_pipeline(config_path, workdir, stages=("all",), force=False):
    """Runs the requested stages; returns one report dict per stage."""
    return json.loads(_grade.run_pipeline(str(config_path or ""), str(workdir), list(stages), force))
