"""Alternate quasi-Newton minimization of the MultiView ICA loss.

Each sweep visits the views in order. For view ``i`` the other unmixing
matrices are frozen, a quasi-Newton direction is built from the relative
gradient and a sparse approximation of the relative Hessian, and a
backtracking line search on the per-view loss picks the step.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .model import (
    _LOG_DET_FLOOR,
    FitResult,
    UnmixingSet,
    _check_pair,
    as_dataset,
    as_unmixing,
    log_abs_det,
    logcosh,
    SolverConfig,
)

logger = logging.getLogger(__name__)


def _gradient(y, s_minus, m, sigma, c):
    # (1 - 1/m)(y - m/(m-1) s_minus) == (1 - 1/m) y - s_minus, also valid for m = 1
    n = y.shape[1]
    s = y / m + s_minus
    G = (c.f1(s) / m + ((1 - 1 / m) * y - s_minus) / sigma**2) @ y.T / n
    G -= np.eye(y.shape[0])
    return G


def _hessian(y, s_minus, m, sigma, c):
    n = y.shape[1]
    s = y / m + s_minus
    return (c.f2(s) / m**2 + (1 - 1 / m) / sigma**2) @ (y * y).T / n


def _views_state(W, data):
    W, data = _check_pair(W, data)
    Y = W.matrices @ data.views
    return W, data, Y, Y.mean(axis=0)


def relative_gradient(i, W, data, cfg=None, c=None):
    """Relative gradient ``G^i`` of the loss with respect to ``W^i``.

    ``L((I + E) W^i) = L(W^i) + <G^i, E> + o(E)``.

    Returns
    -------
    G : ndarray of shape (k, k)
    """
    cfg = cfg or SolverConfig()
    c = c or logcosh()
    W, data, Y, s = _views_state(W, data)
    m = data.m
    return _gradient(Y[i], s - Y[i] / m, m, cfg.sigma, c)


def hessian_diagonals(i, W, data, cfg=None, c=None):
    """Coefficients ``Gamma^i`` of the sparse relative-Hessian approximation.

    ``Gamma_ab = mean_t[(f''(s_a) / m^2 + (1 - 1/m) / sigma^2) y_b^2]``,
    clamped below at ``cfg.gamma_floor``.
    """
    cfg = cfg or SolverConfig()
    c = c or logcosh()
    W, data, Y, s = _views_state(W, data)
    m = data.m
    gamma = _hessian(Y[i], s - Y[i] / m, m, cfg.sigma, c)
    return np.maximum(gamma, cfg.gamma_floor)


def hessian_apply(gamma, M):
    """Forward map of the approximate Hessian: ``(HM)_ab = Gamma_ab M_ab + M_ba``."""
    return gamma * M + M.T


def regularize_hessian(gamma, lambda_min):
    """Shift each ``(a, b)`` block so its smallest eigenvalue is ``>= lambda_min``.

    The block acting on ``(M_ab, M_ba)`` is ``[[Gamma_ab, 1], [1, Gamma_ba]]``;
    diagonal entries act as ``Gamma_aa + 1`` and are left untouched.
    """
    g, gt = gamma, gamma.T
    eig = 0.5 * (g + gt - np.sqrt((g - gt) ** 2 + 4.0))
    shift = np.maximum(lambda_min - eig, 0.0)
    np.fill_diagonal(shift, 0.0)
    return gamma + shift


def apply_inverse_hessian(gamma, G, cfg=None):
    """Quasi-Newton direction ``D = -H^{-1} G``.

    ``D_ab = (Gamma_ba M_ab - M_ba) / max(Gamma_ab Gamma_ba - 1, denom_floor)``
    with ``M = -G``. Diagonal entries are ``M_aa / (Gamma_aa + 1)``, which is
    the same expression simplified, and stays valid when ``Gamma_aa < 1``.
    """
    cfg = cfg or SolverConfig()
    M = -np.asarray(G, dtype=float)
    denom = np.maximum(gamma * gamma.T - 1.0, cfg.denom_floor)
    D = (gamma.T * M - M.T) / denom
    d = np.diagonal(M) / (np.diagonal(gamma) + 1.0)
    np.fill_diagonal(D, d)
    return D


def _line_search(y, s, logdet, D, f_sum, m, sigma, c, cfg):
    """Backtracking on ``rho`` from 1, accepting the first strict decrease.

    ``D`` is a ``k x k`` direction, or a length-``k`` vector for a diagonal
    one. The per-view loss is compared through its change from the current
    point: with ``Delta = rho D y`` and ``e = y - s`` the quadratic term
    changes by ``(2 <e, Delta> + (1 - 1/m) ||Delta||^2) / (2 sigma^2 n)``.

    Returns ``(M, y_new, logdet_new, f_sum_new, s_new)`` with
    ``M = I + rho D``, or None when every trial fails.
    """
    diagonal = D.ndim == 1
    n = y.shape[1]
    Dy = D[:, None] * y if diagonal else D @ y
    if m > 1:
        lin = 2.0 * (float(np.vdot(y, Dy)) - float(np.vdot(s, Dy)))
        sq = (1 - 1 / m) * float(np.vdot(Dy, Dy))
    else:
        lin = sq = 0.0
    scale = 1.0 / (2 * sigma**2 * n)
    eye = None if diagonal else np.eye(y.shape[0])
    rho = 1.0
    for _ in range(cfg.ls_max_halvings + 1):
        if diagonal:
            M = 1.0 + rho * D
            sign = float(np.prod(np.sign(M)))
            step_logdet = float(np.sum(np.log(np.abs(M)))) if sign else -np.inf
        else:
            M = eye + rho * D
            sign, step_logdet = np.linalg.slogdet(M)
        new_logdet = logdet + step_logdet
        if sign != 0 and np.isfinite(new_logdet) and new_logdet > _LOG_DET_FLOOR:
            s_new = (rho / m) * Dy
            s_new += s
            new_f = float(np.sum(c.f(s_new)))
            change = -step_logdet + (new_f - f_sum) / n + (rho * lin + rho**2 * sq) * scale
            if change < 0:
                y_new = rho * Dy
                y_new += y
                if diagonal:
                    M = np.diag(M)
                return M, y_new, new_logdet, new_f, s_new
        rho /= 2
    return None


# below this many entries per view, combining the gradient terms elementwise
# before a single product beats two separate products
_SMALL_VIEW = 1 << 16


def _full_terms(y, s, m, inv_s2, c):
    # relative gradient and Hessian coefficients of one view, unclamped.
    # (1 - 1/m) y - s_minus == y - s, also valid for m = 1
    k, n = y.shape
    psi, dpsi = c.derivatives(s)
    e = y - s
    if y.size <= _SMALL_VIEW:
        e *= inv_s2
        e += psi * (1 / m)
        G = e @ y.T
    else:
        G = psi @ y.T
        G *= 1 / m
        G += inv_s2 * (e @ y.T)
    G /= n
    G.flat[:: k + 1] -= 1.0
    y2 = y * y
    power = y2.sum(axis=1)
    gamma = (dpsi @ y2.T / m**2 + (1 - 1 / m) * inv_s2 * power[None, :]) / n
    return G, gamma


def _diagonal_terms(y, s, m, inv_s2, c):
    # diagonals of _full_terms in O(kn)
    n = y.shape[1]
    psi, dpsi = c.derivatives(s)
    y2 = y * y
    power = y2.sum(axis=1)
    rowdot = lambda a, b: np.einsum("ij,ij->i", a, b)
    g = rowdot(psi, y) / m + rowdot(y - s, y) * inv_s2
    h = rowdot(dpsi, y2) / m**2 + (1 - 1 / m) * inv_s2 * power
    return g / n - 1.0, h / n


def _total_loss(Y, s, logdets, f_sum, sigma):
    n = Y.shape[2]
    quad = np.sum((Y - s) ** 2) / n / (2 * sigma**2)
    return float(-np.sum(logdets) + quad + f_sum / n)


def alternate_minimize(data, init, cfg=None, c=None, diagonal_only=False):
    """Run the alternate quasi-Newton loop.

    With ``diagonal_only`` the direction is restricted to its diagonal, which
    only rescales the rows of each ``W^i``; the stopping rule then looks at
    the diagonal of the gradients only.
    """
    cfg = cfg or SolverConfig()
    c = c or logcosh()
    W, data = _check_pair(as_unmixing(init), as_dataset(data))
    m, k, n = data.views.shape
    W = W.matrices.copy()
    logdets = np.array([log_abs_det(Wi, i) for i, Wi in enumerate(W)])
    Y = W @ data.views
    s = Y.mean(axis=0)
    f_sum = float(np.sum(c.f(s)))
    inv_s2 = 1.0 / cfg.sigma**2

    loss_trace = [_total_loss(Y, s, logdets, f_sum, cfg.sigma)]
    grad_trace = []
    converged = False
    sweeps = 0
    while sweeps < cfg.max_sweeps:
        sweeps += 1
        worst = 0.0
        accepted = 0
        for i in range(m):
            y = Y[i]
            if diagonal_only:
                g, h = _diagonal_terms(y, s, m, inv_s2, c)
                worst = max(worst, float(np.max(np.abs(g))))
                D = -g / (np.maximum(h, cfg.gamma_floor) + 1.0)
            else:
                G, gamma = _full_terms(y, s, m, inv_s2, c)
                worst = max(worst, float(np.max(np.abs(G))))
                gamma = regularize_hessian(np.maximum(gamma, cfg.gamma_floor), cfg.lambda_min)
                D = apply_inverse_hessian(gamma, G, cfg)
            found = _line_search(y, s, logdets[i], D, f_sum, m, cfg.sigma, c, cfg)
            if found is None:
                continue
            M, Y[i], logdets[i], f_sum, s = found
            W[i] = M @ W[i]
            accepted += 1
        loss_trace.append(_total_loss(Y, s, logdets, f_sum, cfg.sigma))
        grad_trace.append(worst)
        if worst < cfg.tol:
            converged = True
            break
        if accepted == 0:
            # nothing moved: every later sweep would repeat this one
            logger.debug("line search failed for every view at sweep %d", sweeps)
            break
    return FitResult(
        unmixing=UnmixingSet(W),
        sources=s,
        loss_trace=loss_trace,
        grad_trace=grad_trace,
        converged=converged,
        sweeps=sweeps,
    )


def fit(data, cfg=None, c=None, init=None):
    """Fit MultiView ICA with the alternate quasi-Newton method.

    Parameters
    ----------
    data : MultiViewDataset or array-like of shape (m, k, n)
    cfg : SolverConfig, optional
    c : Contrast, optional
        Defaults to log-cosh.
    init : UnmixingSet or array-like of shape (m, k, k), optional
        Initial unmixing matrices. Defaults to identities.

    Returns
    -------
    FitResult
    """
    data = as_dataset(data)
    if init is None:
        init = np.tile(np.eye(data.k), (data.m, 1, 1))
    return alternate_minimize(data, init, cfg, c)


@dataclass(frozen=True)
class StabilityReport:
    """Local-minimum conditions for every pair of sources ``a < b``."""

    gamma_E: np.ndarray
    gamma_S: np.ndarray
    cond_S: Dict[Tuple[int, int], bool]
    cond_E: Dict[Tuple[int, int], bool]

    @property
    def overall(self):
        return all(self.cond_S.values()) and all(self.cond_E.values())


def stability_diagnostic(W, data, cfg=None, c=None):
    """Check the second-order conditions at a stationary point.

    At ``W^i = Lambda (A^i)^{-1}`` the Hessian involves ``Lambda_b^2 Var(s_b)``
    and ``Lambda_b^2 sigma'^2``. They are estimated from the per-view sources:
    the first as the cross-view covariance ``mean_{i != j} <y^i_b, y^j_b>``,
    the second as the per-view power minus it. With a single view the noise
    part cannot be separated and is taken to be zero.
    """
    cfg = cfg or SolverConfig()
    c = c or logcosh()
    W, data, Y, s = _views_state(W, data)
    m, k, n = Y.shape
    sigma2 = cfg.sigma**2
    power = np.mean(np.sum(Y * Y, axis=2), axis=0) / n
    if m > 1:
        total = Y.sum(axis=0)
        cross = (np.sum(total * total, axis=1) / n - m * power) / (m * (m - 1))
    else:
        cross = power
    noise = power - cross
    curv = np.mean(c.f2(s), axis=1)

    gamma_E = (np.outer(curv, noise) / m**2) + ((cross + (1 - 1 / m) * noise) / sigma2)[None, :]
    gamma_S = np.outer(curv / m**2 - 1 / (m * sigma2), cross)
    cond_S, cond_E = {}, {}
    for a in range(k):
        for b in range(a + 1, k):
            cond_S[(a, b)] = bool(gamma_S[a, b] * gamma_S[b, a] >= 0)
            cond_E[(a, b)] = bool(gamma_E[a, b] * gamma_E[b, a] > 1)
    return StabilityReport(gamma_E=gamma_E, gamma_S=gamma_S, cond_S=cond_S, cond_E=cond_E)
