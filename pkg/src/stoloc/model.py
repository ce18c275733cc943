"""Synthetic instances: spiked matrices and linear-regression designs.

Also hosts the spectral utilities used for initialization: top eigenpair
extraction, the spectral initialization vector, and the inverse BBP map for
estimating the signal strength from the top eigenvalue.
"""

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import BelowBulkEdge, NoConvergence, SubcriticalBeta
from .rng import stream

DENSE_EIG_MAX = 4096    # full tridiagonalization up to here, Lanczos above


@dataclass(frozen=True)
class SpikedInstance:
    """Observation X = beta * theta theta^T / n + GOE(n), with ground truth."""

    n: int
    beta: float
    X: np.ndarray
    theta: np.ndarray
    seed: int


@dataclass(frozen=True)
class LinearInstance:
    """Observation y0 = X theta + eps with N(0, I/p) rows and N(0, sigma2) noise."""

    n: int
    p: int
    delta: float
    sigma2: float
    X: np.ndarray
    theta: np.ndarray
    y0: np.ndarray
    seed: int


def sample_goe(n, rng):
    """Draw a GOE(n) matrix: off-diagonal variance 1/n, diagonal 2/n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a = rng.standard_normal((n, n)) / np.sqrt(n)
    w = np.triu(a, 1)
    w = w + w.T
    w[np.diag_indices(n)] = rng.standard_normal(n) * np.sqrt(2.0 / n)
    return w


def _check_unit_second_moment(prior):
    if abs(prior.second_moment - 1.0) > 1e-8:
        raise ValueError("prior must be normalized to unit second moment; "
                         "call normalize_unit_second_moment first")


def gen_spiked(prior, beta, n, seed):
    """Generate a spiked-matrix instance with hidden ground truth
    (``beta = 0`` gives a pure noise matrix)."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    _check_unit_second_moment(prior)
    theta = prior.sample(n, stream(seed, "spiked-theta"))
    w = sample_goe(n, stream(seed, "spiked-noise"))
    x = (beta / n) * np.outer(theta, theta) + w
    return SpikedInstance(n=n, beta=float(beta), X=x, theta=theta,
                          seed=int(seed))


def gen_linear(prior, delta, sigma2, p, seed):
    """Generate a linear-regression instance; n = round(delta * p)."""
    if delta <= 0 or sigma2 <= 0 or p < 1:
        raise ValueError("need delta > 0, sigma2 > 0, p >= 1")
    _check_unit_second_moment(prior)
    n = int(round(delta * p))
    theta = prior.sample(p, stream(seed, "linear-theta"))
    x = stream(seed, "linear-design").standard_normal((n, p)) / np.sqrt(p)
    eps = stream(seed, "linear-noise").standard_normal(n) * np.sqrt(sigma2)
    y0 = x @ theta + eps
    return LinearInstance(n=n, p=p, delta=n / p, sigma2=float(sigma2),
                          X=x, theta=theta, y0=y0, seed=int(seed))


def top_eigpair(x, rng=None, method="auto", tol=1e-8, max_iter=10000,
                v0=None):
    """Top eigenvalue and unit eigenvector of a symmetric matrix.

    The residual satisfies ``||X v - lam v|| <= 1e-8 ||X||``. The sign of
    the eigenvector is drawn uniformly when ``rng`` is given, else it is
    deterministic (first nonzero coordinate positive).

    ``method`` is ``"dense"`` (full tridiagonalization), ``"iterative"``
    (Lanczos; preferred inside hot loops, where ``v0`` warm-starts on the
    previous iterate) or ``"auto"`` (dense up to ``DENSE_EIG_MAX``).
    """
    n = x.shape[0]
    if x.shape != (n, n):
        raise ValueError("matrix must be square")
    if method == "auto":
        method = "dense" if n <= DENSE_EIG_MAX else "iterative"
    if method == "iterative" and n >= 8:
        if v0 is None:
            v0 = rng.standard_normal(n) if rng is not None else np.ones(n)
        try:
            lam, v = scipy.sparse.linalg.eigsh(
                x, k=1, which="LA", v0=v0, tol=0, maxiter=max_iter)
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise NoConvergence("Lanczos top-eigenpair did not converge") from exc
        lam1, v1 = float(lam[0]), v[:, 0]
    else:
        lam, v = scipy.linalg.eigh(x, subset_by_index=[n - 1, n - 1])
        lam1, v1 = float(lam[0]), v[:, 0]
    nrm = max(abs(lam1), np.linalg.norm(x, ord=1) / np.sqrt(n))
    if np.linalg.norm(x @ v1 - lam1 * v1) > tol * max(nrm, 1e-30):
        raise NoConvergence("top eigenpair residual above tolerance")
    if rng is not None:
        if rng.random() < 0.5:
            v1 = -v1
    else:
        nz = np.flatnonzero(v1)
        if nz.size and v1[nz[0]] < 0:
            v1 = -v1
    return lam1, v1


def spectral_init(x, beta, rng=None, method="auto"):
    """Spectral initialization ``nu`` with ``||nu||^2 = n beta^2 (beta^2 - 1)``."""
    if beta <= 1:
        raise SubcriticalBeta("spectral initialization needs beta > 1")
    n = x.shape[0]
    _, v1 = top_eigpair(x, rng=rng, method=method)
    return np.sqrt(n * beta ** 2 * (beta ** 2 - 1.0)) * v1


def estimate_beta(lambda1):
    """Invert the BBP map ``lambda = beta + 1/beta`` for ``lambda > 2``."""
    if lambda1 <= 2.0:
        raise BelowBulkEdge("top eigenvalue at or below the bulk edge")
    return 0.5 * (lambda1 + np.sqrt(lambda1 ** 2 - 4.0))


# ---------------------------------------------------------------------------
# instance i/o
# ---------------------------------------------------------------------------

def save_instance(path, inst):
    """Write an instance to ``path`` (.npz with a JSON header); exact round-trip."""
    if isinstance(inst, SpikedInstance):
        header = {"model": "spiked", "n": inst.n, "beta": inst.beta,
                  "seed": inst.seed}
        np.savez(path, header=np.frombuffer(
            json.dumps(header).encode(), dtype=np.uint8),
            X=inst.X, theta=inst.theta)
    elif isinstance(inst, LinearInstance):
        header = {"model": "linear", "n": inst.n, "p": inst.p,
                  "delta": inst.delta, "sigma2": inst.sigma2,
                  "seed": inst.seed}
        np.savez(path, header=np.frombuffer(
            json.dumps(header).encode(), dtype=np.uint8),
            X=inst.X, theta=inst.theta, y0=inst.y0)
    else:
        raise TypeError(f"cannot save {type(inst)!r}")


def load_instance(path):
    """Inverse of :func:`save_instance`."""
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header["model"] == "spiked":
            return SpikedInstance(n=header["n"], beta=header["beta"],
                                  X=data["X"], theta=data["theta"],
                                  seed=header["seed"])
        if header["model"] == "linear":
            return LinearInstance(n=header["n"], p=header["p"],
                                  delta=header["delta"],
                                  sigma2=header["sigma2"], X=data["X"],
                                  theta=data["theta"], y0=data["y0"],
                                  seed=header["seed"])
    raise ValueError("unrecognized instance file")
