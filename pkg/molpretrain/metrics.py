# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Evaluation metrics, validated before handing off to scikit-learn."""

from typing import Dict

import numpy as np
from sklearn import metrics as skm

from .exceptions import DegenerateError

F1_THRESHOLD = 0.5


def _pair(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if scores.shape != labels.shape:
        raise DegenerateError(
            f"{len(scores)} scores do not match {len(labels)} labels"
        )
    if scores.size == 0:
        raise DegenerateError("metric over zero samples")
    return scores, labels


def _binary_labels(labels: np.ndarray) -> np.ndarray:
    if not np.all((labels == 0) | (labels == 1)):
        raise DegenerateError("classification labels must be 0 or 1")
    return labels.astype(np.int64)


def auc_roc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative; ties count half."""
    scores, labels = _pair(scores, labels)
    labels = _binary_labels(labels)
    if labels.min() == labels.max():
        raise DegenerateError("AUC-ROC needs both classes present")
    return float(skm.roc_auc_score(labels, scores))


def prc_auc(scores, labels) -> float:
    """Area under the precision-recall step curve (average precision)."""
    scores, labels = _pair(scores, labels)
    labels = _binary_labels(labels)
    if not labels.any():
        raise DegenerateError("PRC-AUC needs at least one positive")
    return float(skm.average_precision_score(labels, scores))


def f1(scores, labels, threshold: float = F1_THRESHOLD) -> float:
    scores, labels = _pair(scores, labels)
    labels = _binary_labels(labels)
    predicted = (scores >= threshold).astype(np.int64)
    return float(skm.f1_score(labels, predicted, zero_division=0))


def rmse(predictions, targets) -> float:
    predictions, targets = _pair(predictions, targets)
    return float(np.sqrt(skm.mean_squared_error(targets, predictions)))


def davies_bouldin(embeddings, clusters) -> float:
    """Lower is better: mean worst-case ratio of scatter to centroid distance."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim == 1:
        embeddings = embeddings[:, None]
    clusters = np.asarray(clusters).reshape(-1)
    if len(embeddings) != len(clusters):
        raise DegenerateError("every embedding needs a cluster label")

    names = np.unique(clusters)
    if len(names) < 2:
        raise DegenerateError("Davies-Bouldin needs at least two clusters")
    centroids = np.stack([embeddings[clusters == c].mean(axis=0) for c in names])
    gaps = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=-1)
    if np.any(gaps[~np.eye(len(names), dtype=bool)] == 0):
        raise DegenerateError("two clusters share a centroid")
    return float(skm.davies_bouldin_score(embeddings, clusters))


def _columns(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.ndim == 1:
        scores, labels = scores[:, None], labels[:, None]
    return scores, labels


def mean_over_labels(metric, scores, labels) -> float:
    """Average `metric` over label columns, skipping missing labels (NaN).

    Columns where the metric is undefined are left out; if every column is,
    the `DegenerateError` is raised.
    """
    scores, labels = _columns(scores, labels)
    values = []
    for column in range(labels.shape[1]):
        known = ~np.isnan(labels[:, column])
        try:
            values.append(metric(scores[known, column], labels[known, column]))
        except DegenerateError:
            if labels.shape[1] == 1:
                raise
    if not values:
        raise DegenerateError(f"{metric.__name__} is undefined for every label")
    return float(np.mean(values))


def classification_report(scores, labels) -> Dict[str, float]:
    report = {}
    for metric in (auc_roc, prc_auc, f1):
        try:
            report[metric.__name__] = mean_over_labels(metric, scores, labels)
        except DegenerateError:
            report[metric.__name__] = float("nan")
    return report


def regression_report(predictions, targets) -> Dict[str, float]:
    predictions, targets = _columns(predictions, targets)
    known = ~np.isnan(targets)
    return {"rmse": rmse(predictions[known], targets[known])}
