"""Evaluation statistics and distribution-comparison utilities."""

from dataclasses import dataclass

import numpy as np

from .errors import NonIntegerOverlap, OutOfRange


def normalized_loglik(x, theta, beta):
    """Normalized log-likelihood ``beta/(2n) <theta, X theta>``."""
    theta = np.asarray(theta, dtype=float)
    n = x.shape[0]
    if theta.shape[0] != n:
        raise ValueError("dimension mismatch")
    return 0.5 * beta / n * float(theta @ (x @ theta))


@dataclass(frozen=True)
class OverlapPmf:
    """Distribution of a k-coordinate +-1 inner product."""

    support: np.ndarray     # integers {-k, ..., k} step 2
    probs: np.ndarray

    def mean(self):
        return float(self.support @ self.probs)


def theoretical_overlap_pmf(m_hat_prefix):
    """Predicted law of the 10-coordinate overlap with the hidden signal.

    Exact convolution of independent +-1 variables with means
    ``m_hat_i^2`` (the overlap of two posterior samples concentrates on
    these products coordinate-wise).
    """
    m = np.asarray(m_hat_prefix, dtype=float)
    k = len(m)
    if np.any(np.abs(m) > 1):
        raise OutOfRange("needs |m_i| <= 1")
    p_plus = (1.0 + m * m) / 2.0
    pmf = np.array([1.0])
    for p in p_plus:
        nxt = np.zeros(len(pmf) + 1)
        nxt[1:] += pmf * p          # +1 outcome
        nxt[:-1] += pmf * (1 - p)   # -1 outcome
        pmf = nxt
    support = np.arange(-k, k + 1, 2)
    return OverlapPmf(support=support, probs=pmf)


def empirical_overlap_pmf(samples, theta, k=10):
    """Histogram of ``<theta_{<=k}, sample_{<=k}>`` over +-1 samples."""
    theta_k = np.asarray(theta, dtype=float)[:k]
    samples = np.atleast_2d(np.asarray(samples, dtype=float))[:, :k]
    vals = np.concatenate([samples.ravel(), theta_k])
    if np.any(np.abs(np.abs(vals) - 1.0) > 1e-9):
        raise NonIntegerOverlap("samples must take values in {-1, +1}")
    overlaps = np.rint(samples @ theta_k).astype(int)
    support = np.arange(-k, k + 1, 2)
    counts = np.array([(overlaps == v).sum() for v in support], dtype=float)
    return OverlapPmf(support=support, probs=counts / counts.sum())


def tv_distance(p, q):
    """Total-variation distance between pmfs on matching supports."""
    if not np.array_equal(p.support, q.support):
        raise ValueError("pmf supports differ")
    return 0.5 * float(np.sum(np.abs(p.probs - q.probs)))


def w2_1d(samples_a, samples_b):
    """Exact 1-D Wasserstein-2 distance between empirical distributions.

    Sorted-quantile coupling; for unequal sample counts the piecewise-
    constant quantile functions are integrated over their merged CDF
    breakpoints.
    """
    a = np.sort(np.asarray(samples_a, dtype=float))
    b = np.sort(np.asarray(samples_b, dtype=float))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("need nonempty samples")
    if len(a) == len(b):
        return float(np.sqrt(np.mean((a - b) ** 2)))
    na, nb = len(a), len(b)
    cuts = np.union1d(np.arange(1, na) / na, np.arange(1, nb) / nb)
    edges = np.concatenate([[0.0], cuts, [1.0]])
    widths = np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    qa = a[np.minimum((mids * na).astype(int), na - 1)]
    qb = b[np.minimum((mids * nb).astype(int), nb - 1)]
    return float(np.sqrt(np.sum(widths * (qa - qb) ** 2)))
