"""Two-stage initialization: PermICA, then a diagonal rescaling of each view."""

import numpy as np

from .baselines import infomax_ica
from .metrics import align
from .model import SolverConfig, UnmixingSet, as_dataset, as_unmixing, logcosh
from .solver import alternate_minimize


def _aligned(W, x, ref):
    al = align(W @ x, ref)
    return (al.signs * al.scales)[:, None] * W[al.perm]


def permica(data, c=None, n_rounds=3, cfg=None):
    """Independent ICA per view, with components matched across views.

    View 0 is the first reference. Every other view's sources are matched to
    it (permutation, sign and scale of the rows of ``W^i``). Each further
    round matches every view to the average of the currently aligned
    sources.
    """
    return _permica(data, c, n_rounds, cfg)[0]


def _permica(data, c, n_rounds, cfg):
    # also returns the per-view InfomaxResult
    if n_rounds < 1:
        raise ValueError(f"n_rounds must be >= 1, got {n_rounds}")
    data = as_dataset(data)
    X = data.views
    infos = [infomax_ica(x, c, cfg) for x in X]
    W = np.stack([info.W for info in infos])
    ref = W[0] @ X[0]
    for i in range(1, data.m):
        W[i] = _aligned(W[i], X[i], ref)
    for _ in range(n_rounds - 1):
        ref = np.mean(W @ X, axis=0)
        for i in range(data.m):
            W[i] = _aligned(W[i], X[i], ref)
    return UnmixingSet(W), infos


def diagonal_scaling(W, data, cfg=None, c=None):
    """Rescale the rows of each ``W^i`` to minimize the loss.

    Runs the alternate quasi-Newton loop restricted to diagonal directions
    until the diagonals of all relative gradients fall below ``cfg.tol``.
    """
    res = alternate_minimize(data, as_unmixing(W), cfg, c, diagonal_only=True)
    return res.unmixing


def init_pipeline(data, cfg=None, c=None, n_rounds=3):
    """PermICA followed by :func:`diagonal_scaling`."""
    cfg = cfg or SolverConfig()
    c = c or logcosh()
    data = as_dataset(data)
    return diagonal_scaling(permica(data, c, n_rounds, cfg), data, cfg, c)
