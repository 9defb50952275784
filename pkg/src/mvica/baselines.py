"""Single-view Infomax ICA and the classical group-ICA baselines.

None of these whiten the data: PCA keeps the singular values in the reduced
signals.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import (
    MultiViewDataset,
    ValidationError,
    as_dataset,
    log_abs_det,
    logcosh,
)
from .solver import fit


@dataclass(frozen=True)
class PcaResult:
    """PCA without whitening.

    Attributes
    ----------
    projection : ndarray of shape (k, p)
        First ``k`` left singular vectors, transposed.
    reduced : ndarray of shape (k, n)
        ``projection @ (X - mean)``, i.e. the first ``k`` rows of ``D V^T``.
    mean : ndarray of shape (p,)
    """

    projection: np.ndarray
    reduced: np.ndarray
    mean: np.ndarray


class InfomaxResult(NamedTuple):
    W: np.ndarray
    sources: np.ndarray
    converged: bool
    sweeps: int


class GroupIcaResult(NamedTuple):
    """Shared sources, per-view unmixing of shape ``(m, k, p)``, ICA status."""

    shared: np.ndarray
    unmixing: np.ndarray
    converged: bool
    sweeps: int


def pca(X, k):
    """Reduce the rows of ``X`` (``p x n``) to ``k`` principal components."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError(f"X must be 2-D, got shape {X.shape}")
    p, n = X.shape
    if not 1 <= k <= min(p, n):
        raise ValidationError(f"k must be in [1, {min(p, n)}], got {k}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("X contains non-finite entries")
    mean = X.mean(axis=1)
    Xc = X - mean[:, None]
    U, d, Vt = np.linalg.svd(Xc, full_matrices=False)
    return PcaResult(projection=U[:, :k].T, reduced=d[:k, None] * Vt[:k], mean=mean)


def infomax_loss(W, X, c=None):
    """``-log|W| + mean_t sum_j f((W X)_jt)``."""
    c = c or logcosh()
    Y = W @ X
    return -log_abs_det(W) + float(np.sum(c.f(Y))) / X.shape[1]


def infomax_gradient(W, X, c=None):
    """Relative gradient of :func:`infomax_loss`: ``mean_t f'(y) y^T - I``."""
    c = c or logcosh()
    Y = W @ X
    return c.f1(Y) @ Y.T / X.shape[1] - np.eye(W.shape[0])


def infomax_ica(X, c=None, cfg=None):
    """Maximum-likelihood ICA of a single ``k x n`` matrix.

    Starts from the identity after scaling each row of ``X`` to unit variance
    and runs the quasi-Newton solver with one view.

    Returns
    -------
    InfomaxResult
        ``(W, sources, converged, sweeps)`` with ``sources = W @ X``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError(f"X must be 2-D, got shape {X.shape}")
    std = X.std(axis=1)
    if np.any(std == 0):
        raise ValidationError("X has a constant row")
    W0 = np.diag(1.0 / std)
    res = fit(X[None], cfg, c, init=W0[None])
    W = res.unmixing.matrices[0]
    return InfomaxResult(W=W, sources=W @ X, converged=res.converged, sweeps=res.sweeps)


def group_pca(data, k):
    """PCA of the views stacked along the row axis (``mk x n``)."""
    data = as_dataset(data)
    return pca(data.views.reshape(-1, data.n), k)


def _regress_unmixing(data, shared):
    # W^i = argmin_W ||W x^i - shared||_F
    mats = []
    for x in data.views:
        sol, *_ = np.linalg.lstsq(x.T, shared.T, rcond=None)
        mats.append(sol.T)
    return np.stack(mats)


def group_ica(data, k, c=None, cfg=None):
    """GroupPCA followed by Infomax ICA.

    Per-view unmixing matrices are the least-squares regressions of the
    shared sources on each view.

    Returns
    -------
    GroupIcaResult
        ``shared`` has shape ``(k, n)``; ``unmixing`` has shape ``(m, k, p)``
        where ``p`` is the number of rows of each view.
    """
    data = as_dataset(data)
    reduced = group_pca(data, k).reduced
    ica = infomax_ica(reduced, c, cfg)
    unmixing = _regress_unmixing(data, ica.sources)
    return GroupIcaResult(ica.sources, unmixing, ica.converged, ica.sweeps)


def pca_group_ica(data, k, c=None, cfg=None):
    """Per-view PCA to ``k`` components, then :func:`group_ica`.

    The returned unmixing matrices act on the original views: they are the
    reduced-space unmixings composed with each view's PCA projection.
    """
    data = as_dataset(data)
    fits = [pca(x, k) for x in data.views]
    reduced = MultiViewDataset(np.stack([f.reduced for f in fits]))
    res = group_ica(reduced, k, c, cfg)
    unmixing = np.stack([Wr @ f.projection for Wr, f in zip(res.unmixing, fits)])
    return res._replace(unmixing=unmixing)
