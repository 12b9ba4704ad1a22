"""Segmentation losses: cross-entropy and the Lovasz-Softmax IoU surrogate.

Both ignore points labeled ignore_index. The Lovasz surrogate sorts the
per-class hinge errors once per class and treats that permutation as fixed
during the backward pass; the sort is stable with ties broken by point
index so results are reproducible bit for bit.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import DEFAULT_IGNORE_INDEX
from .errors import AllPointsIgnoredWarning, ShapeError


def _valid_indices(labels: np.ndarray, n: int, ignore_index: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"labels must be [N] matching logits rows, got {labels.shape}")
    return np.nonzero(labels != ignore_index)[0]


def _warn_all_ignored() -> Tensor:
    warnings.warn("every point is labeled ignore_index; loss is zero",
                  AllPointsIgnoredWarning, stacklevel=3)
    return Tensor(0.0)


def cross_entropy(logits: Tensor, labels: np.ndarray,
                  ignore_index: int = DEFAULT_IGNORE_INDEX) -> Tensor:
    """Mean negative log-likelihood over points not labeled ignore_index."""
    n, c = logits.shape
    valid = _valid_indices(labels, n, ignore_index)
    if len(valid) == 0:
        return _warn_all_ignored()
    picked = ad.gather(logits, valid)
    target = np.asarray(labels)[valid].astype(np.int64)
    if target.min() < 0 or target.max() >= c:
        raise ShapeError(f"label outside 0..{c - 1} (ignore_index aside)")
    # The row max is a constant shift: it cancels in the log-softmax value
    # and has zero derivative, so treating it as data keeps gradients exact.
    shift = picked.data.max(axis=1, keepdims=True)
    shifted = ad.sub(picked, np.broadcast_to(shift, picked.shape).copy())
    lse = ad.tlog(ad.tsum(ad.texp(shifted), axis=1, keepdims=True))
    logprob = ad.sub(shifted, ad.broadcast_to(lse, shifted.shape))
    onehot = np.zeros((len(valid), c), dtype=logits.data.dtype)
    onehot[np.arange(len(valid)), target] = 1.0
    picked_logprob = ad.tsum(ad.mul(logprob, onehot), axis=1)
    return ad.mul(ad.tmean(picked_logprob), -1.0)


def lovasz_softmax(probs: Tensor, labels: np.ndarray,
                   ignore_index: int = DEFAULT_IGNORE_INDEX) -> Tensor:
    """Lovasz extension of the Jaccard loss, averaged over present classes.

    For each class with at least one foreground point, errors are
    fg + (1 - 2*fg) * p (which equals |fg - p| for p in [0, 1] but stays
    differentiable), sorted descending, and weighted by the discrete
    gradient of the Jaccard index along that order.
    """
    n, num_classes = probs.shape
    valid = _valid_indices(labels, n, ignore_index)
    if len(valid) == 0:
        return _warn_all_ignored()
    probs_v = ad.gather(probs, valid)
    target = np.asarray(labels)[valid].astype(np.int64)

    per_class: list[Tensor] = []
    for cls in range(num_classes):
        fg = (target == cls).astype(probs.data.dtype)
        gts = fg.sum()
        if gts == 0:
            continue
        p = ad.reshape(ad.slice_cols(probs_v, cls, cls + 1), (len(valid),))
        errors = ad.add(ad.mul(p, 1.0 - 2.0 * fg), fg)
        order = np.argsort(-errors.data, kind="stable")  # ties keep point order
        sorted_errors = ad.gather(errors, order)
        fg_sorted = fg[order]
        intersection = gts - np.cumsum(fg_sorted)
        union = gts + np.cumsum(1.0 - fg_sorted)
        jaccard = 1.0 - intersection / union
        grad = np.empty_like(jaccard)
        grad[0] = jaccard[0]
        grad[1:] = jaccard[1:] - jaccard[:-1]
        per_class.append(ad.tsum(ad.mul(sorted_errors, grad)))

    total = per_class[0]
    for term in per_class[1:]:
        total = ad.add(total, term)
    return ad.mul(total, 1.0 / len(per_class))


def combined_loss(logits: Tensor, labels: np.ndarray,
                  ignore_index: int = DEFAULT_IGNORE_INDEX,
                  ce_weight: float = 1.0,
                  lovasz_weight: float = 1.0) -> Tensor:
    """ce_weight * cross-entropy + lovasz_weight * Lovasz on the softmax."""
    n, _ = logits.shape
    if len(_valid_indices(labels, n, ignore_index)) == 0:
        return _warn_all_ignored()
    ce = cross_entropy(logits, labels, ignore_index)
    lov = lovasz_softmax(ad.softmax(logits, axis=1), labels, ignore_index)
    return ad.add(ad.mul(ce, ce_weight), ad.mul(lov, lovasz_weight))
