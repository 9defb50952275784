"""Source matching and evaluation metrics."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import DimensionError, ValidationError


@dataclass(frozen=True)
class Alignment:
    """Row ``perm[a]`` of the estimate, times ``signs[a] * scales[a]``, matches reference row ``a``."""

    perm: np.ndarray
    signs: np.ndarray
    scales: np.ndarray
    residuals: np.ndarray

    def apply(self, est):
        """Reorder and rescale the rows of ``est`` onto the reference."""
        est = np.asarray(est, dtype=float)
        return (self.signs * self.scales)[:, None] * est[self.perm]


def hungarian(cost):
    """Permutation ``perm`` minimizing ``sum_a cost[a, perm[a]]``."""
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise DimensionError(f"cost must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValidationError("cost matrix contains non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=int)
    perm[rows] = cols
    return perm


def _check_same(est, ref):
    est = np.atleast_2d(np.asarray(est, dtype=float))
    ref = np.atleast_2d(np.asarray(ref, dtype=float))
    if est.shape != ref.shape:
        raise DimensionError(f"shape mismatch: {est.shape} vs {ref.shape}")
    return est, ref


def correlation_matrix(a, b):
    """Pearson correlations between rows of ``a`` and rows of ``b``.

    Rows with zero variance get correlation 0.
    """
    a = a - a.mean(axis=1, keepdims=True)
    b = b - b.mean(axis=1, keepdims=True)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    na[na == 0] = np.inf
    nb[nb == 0] = np.inf
    return (a / na[:, None]) @ (b / nb[:, None]).T


def align(est, ref):
    """Match rows of ``est`` to rows of ``ref`` up to permutation, sign and scale.

    The matching maximizes the summed absolute Pearson correlation. Each scale
    is the least-squares coefficient of the reference row on the matched
    estimated row.
    """
    est, ref = _check_same(est, ref)
    corr = correlation_matrix(ref, est)  # corr[a, b] = corr(ref_a, est_b)
    perm = hungarian(1.0 - np.abs(corr))
    k = ref.shape[0]
    signs = np.ones(k)
    scales = np.ones(k)
    residuals = np.empty(k)
    for a, b in enumerate(perm):
        e = est[b]
        r = ref[a]
        if np.ptp(e) == 0:
            residuals[a] = r.var()
            continue
        signs[a] = -1.0 if corr[a, b] < 0 else 1.0
        coef = abs(np.dot(r, e) / np.dot(e, e))
        scales[a] = coef if coef > 0 else 1.0
        residuals[a] = np.mean((r - signs[a] * scales[a] * e) ** 2)
    return Alignment(perm=perm, signs=signs, scales=scales, residuals=residuals)


def _standardize(x):
    x = x - x.mean(axis=1, keepdims=True)
    std = x.std(axis=1, keepdims=True)
    flat = std[:, 0] == 0
    std[flat] = 1.0
    return x / std, flat


def reconstruction_error(est, truth):
    """Mean squared error between unit-variance, matched source rows.

    Both inputs are centered and scaled to unit variance per row, then rows
    are matched by :func:`align` and sign-corrected. The result is the mean
    over components of the per-sample squared error. A constant row of
    ``est`` contributes 1.
    """
    est, truth = _check_same(est, truth)
    est_n, est_flat = _standardize(est)
    truth_n, _ = _standardize(truth)
    al = align(est_n, truth_n)
    errs = np.mean((truth_n - al.signs[:, None] * est_n[al.perm]) ** 2, axis=1)
    errs[est_flat[al.perm]] = 1.0
    return float(errs.mean())


def r2_score(x, y):
    """``1 - sum_t (x_t - y_t)^2 / (n Var(y))``, the empirical variance being biased."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"length mismatch: {x.size} vs {y.size}")
    var = y.var()
    if var == 0:
        raise ValidationError("r2_score is undefined when Var(y) = 0")
    return float(1.0 - np.mean((x - y) ** 2) / var)


def _window_matrix(x, win):
    # row t is the flattened k x win block starting at column t, standardized
    w = np.lib.stride_tricks.sliding_window_view(x, win, axis=1)  # (k, T, win)
    w = np.ascontiguousarray(w.transpose(1, 0, 2)).reshape(w.shape[1], -1)
    w = w - w.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(w, axis=1)
    norms[norms == 0] = np.inf
    return w / norms[:, None]


def time_segment_matching(shared_ref, probe, win=9, chunk=512):
    """Accuracy of a maximum-correlation classifier over time windows.

    For each window position ``t`` the ``k x win`` block of ``shared_ref`` is
    compared with every window of ``probe``. The position is classified
    correctly when the probe window at ``t`` correlates strictly more than
    every probe window that does not overlap ``[t, t + win)``.
    """
    ref, probe = _check_same(shared_ref, probe)
    n = ref.shape[1]
    if not 1 <= win <= n:
        raise ValidationError(f"window length must be in [1, {n}], got {win}")
    R = _window_matrix(ref, win)
    P = _window_matrix(probe, win)
    T = R.shape[0]
    pos = np.arange(T)
    correct = 0
    for start in range(0, T, chunk):
        t = pos[start:start + chunk]
        C = R[t] @ P.T
        true = C[np.arange(t.size), t]
        overlap = np.abs(pos[None, :] - t[:, None]) < win
        C[overlap] = -np.inf
        correct += int(np.sum(true > C.max(axis=1)))
    return correct / T
