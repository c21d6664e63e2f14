"""Causality-boosted self-attention recommender and linear SCM lab."""

from ._core import (
    CausalRecError,
    Dataset,
    Model,
    ScmInstance,
    acyclicity_gradient,
    acyclicity_penalty,
    batch_covariance,
    brute_force_identify,
    closed_form_cov,
    equal_variance_score,
    expm,
    extract_relation_matrix,
    generate_dag_with_edges,
    generate_random_dag,
    hit_rate,
    l1_penalty,
    load_data,
    load_model,
    ndcg,
    nonidentifiable_pair,
    notears_recover,
    rank_of,
    sample_scm,
    shd,
    train,
)

__all__ = [
    "CausalRecError",
    "Dataset",
    "Model",
    "ScmInstance",
    "acyclicity_gradient",
    "acyclicity_penalty",
    "batch_covariance",
    "brute_force_identify",
    "closed_form_cov",
    "equal_variance_score",
    "expm",
    "extract_relation_matrix",
    "generate_dag_with_edges",
    "generate_random_dag",
    "hit_rate",
    "l1_penalty",
    "load_data",
    "load_model",
    "ndcg",
    "nonidentifiable_pair",
    "notears_recover",
    "rank_of",
    "sample_scm",
    "shd",
    "train",
]
