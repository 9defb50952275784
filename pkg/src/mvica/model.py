"""Data containers, contrast functions and the MultiView ICA likelihood.

Views are stored as a single ``(m, k, n)`` array and unmixing matrices as a
``(m, k, k)`` array. Shared sources are plain ``(k, n)`` arrays.

All data-dependent terms of the loss are empirical means over the ``n``
samples, so that the noise parameter and tolerances do not depend on ``n``.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

# |det W| below this is treated as singular
DET_FLOOR = 1e-300
_LOG_DET_FLOOR = np.log(DET_FLOOR)


class DimensionError(ValueError):
    """Inconsistent array shapes."""


class ValidationError(ValueError):
    """Invalid input values (non-finite data, bad parameters...)."""


class SingularMatrixError(np.linalg.LinAlgError):
    """An unmixing matrix is (numerically) singular."""


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, init=False)
class MultiViewDataset:
    """``m`` sample-aligned views, each a ``k x n`` matrix.

    Parameters
    ----------
    views : array-like of shape (m, k, n) or sequence of (k, n) arrays
    """

    views: np.ndarray

    def __init__(self, views):
        if isinstance(views, MultiViewDataset):
            views = views.views
        if not isinstance(views, np.ndarray):
            views = list(views)
            shapes = {np.shape(v) for v in views}
            if len(shapes) > 1:
                raise DimensionError(f"views have different shapes: {sorted(shapes)}")
        arr = np.asarray(views, dtype=float)
        if arr.ndim != 3:
            raise DimensionError(f"expected an (m, k, n) array, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise DimensionError(f"empty dimension in shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("data contains non-finite entries")
        object.__setattr__(self, "views", _freeze(arr))

    @property
    def m(self):
        return self.views.shape[0]

    @property
    def k(self):
        return self.views.shape[1]

    @property
    def n(self):
        return self.views.shape[2]

    def __len__(self):
        return self.m

    def __getitem__(self, i):
        return self.views[i]


@dataclass(frozen=True, init=False)
class UnmixingSet:
    """``m`` invertible ``k x k`` unmixing matrices."""

    matrices: np.ndarray

    def __init__(self, matrices):
        if isinstance(matrices, UnmixingSet):
            matrices = matrices.matrices
        arr = np.asarray(matrices, dtype=float)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise DimensionError(f"expected an (m, k, k) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("unmixing matrices contain non-finite entries")
        for i, W in enumerate(arr):
            log_abs_det(W, index=i)
        object.__setattr__(self, "matrices", _freeze(arr))

    @property
    def m(self):
        return self.matrices.shape[0]

    @property
    def k(self):
        return self.matrices.shape[1]

    def __len__(self):
        return self.m

    def __getitem__(self, i):
        return self.matrices[i]


@dataclass(frozen=True)
class Contrast:
    """Scalar contrast ``f`` with its first two derivatives, all elementwise."""

    f: Callable[[np.ndarray], np.ndarray]
    f1: Callable[[np.ndarray], np.ndarray]
    f2: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    # optional fused (f1, f2) evaluation
    f12: Optional[Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]] = None

    def derivatives(self, x):
        """``(f1(x), f2(x))``."""
        if self.f12 is not None:
            return self.f12(x)
        return self.f1(x), self.f2(x)

    def check_derivatives(self, points=None, eps=1e-5, rtol=1e-5):
        """Check ``f1 = f'`` and ``f2 = f1'`` by central differences.

        Returns the largest relative discrepancy found; raises
        ``ValidationError`` if it exceeds ``rtol``.
        """
        if points is None:
            points = np.linspace(-4.0, 4.0, 33)
        x = np.asarray(points, dtype=float)
        worst = 0.0
        for g, dg in ((self.f, self.f1), (self.f1, self.f2)):
            fd = (g(x + eps) - g(x - eps)) / (2 * eps)
            ref = dg(x)
            err = np.abs(fd - ref) / np.maximum(np.abs(ref), 1.0)
            worst = max(worst, float(err.max()))
        if worst > rtol:
            raise ValidationError(
                f"contrast {self.name!r} derivatives inconsistent (rel. error {worst:.2e})"
            )
        return worst


def _logcosh(x):
    x = np.asarray(x, dtype=float)
    if x.size and x.max() < 300.0 and x.min() > -300.0:
        return np.log(np.cosh(x))
    x = np.abs(x)
    return x + np.log1p(np.exp(-2.0 * x)) - np.log(2.0)


def _sech2(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _tanh_sech2(x):
    t = np.tanh(x)
    return t, 1.0 - t * t


def logcosh():
    """Default contrast: ``f = log cosh``, ``f' = tanh``, ``f'' = 1 - tanh^2``."""
    return Contrast(f=_logcosh, f1=np.tanh, f2=_sech2, name="logcosh", f12=_tanh_sech2)


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the alternate quasi-Newton solver.

    Attributes
    ----------
    sigma : float
        Noise parameter of the model.
    tol : float
        Stop when the sup-norm of every relative gradient in a sweep is below.
    max_sweeps : int
        Maximum number of passes over the views.
    ls_max_halvings : int
        Maximum number of step halvings in the backtracking line search.
    gamma_floor : float
        Lower clamp on the Hessian approximation coefficients.
    denom_floor : float
        Lower clamp on the ``Gamma_ab Gamma_ba - 1`` denominators.
    lambda_min : float
        Smallest eigenvalue allowed in each 2x2 Hessian block; blocks below
        it are shifted up before inversion.
    """

    sigma: float = 1.0
    tol: float = 1e-4
    max_sweeps: int = 10000
    ls_max_halvings: int = 10
    gamma_floor: float = 1e-8
    denom_floor: float = 1e-8
    lambda_min: float = 1e-2

    def __post_init__(self):
        for name in ("sigma", "tol", "gamma_floor", "denom_floor", "lambda_min"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be positive, got {value!r}")
        for name in ("max_sweeps", "ls_max_halvings"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class FitResult:
    unmixing: UnmixingSet
    sources: np.ndarray
    loss_trace: List[float]
    grad_trace: List[float]
    converged: bool
    sweeps: int


DataLike = Union[MultiViewDataset, np.ndarray, Sequence[np.ndarray]]
UnmixingLike = Union[UnmixingSet, np.ndarray, Sequence[np.ndarray]]


def as_dataset(data):
    return data if isinstance(data, MultiViewDataset) else MultiViewDataset(data)


def as_unmixing(W):
    return W if isinstance(W, UnmixingSet) else UnmixingSet(W)


def log_abs_det(W, index=None):
    """``log|det W|`` from a pivoted LU factorization.

    Raises ``SingularMatrixError`` when ``|det W| < 1e-300``.
    """
    sign, logdet = np.linalg.slogdet(W)
    if sign == 0 or not np.isfinite(logdet) or logdet < _LOG_DET_FLOOR:
        where = "" if index is None else f" (view {index})"
        raise SingularMatrixError(f"singular unmixing matrix{where}")
    return float(logdet)


def _check_pair(W, data):
    W = as_unmixing(W)
    data = as_dataset(data)
    if W.m != data.m or W.k != data.k:
        raise DimensionError(
            f"{W.m} unmixing matrices of size {W.k} do not match "
            f"{data.m} views with {data.k} rows"
        )
    return W, data


def unmix(W, data):
    """Per-view sources ``y^i = W^i x^i`` as an ``(m, k, n)`` array."""
    W, data = _check_pair(W, data)
    return W.matrices @ data.views


def shared_estimate(W, data):
    """Shared source estimate ``(1/m) sum_i W^i x^i`` of shape ``(k, n)``."""
    return unmix(W, data).mean(axis=0)


def negative_log_likelihood(W, data, cfg=None, c=None):
    """MultiView ICA loss, up to additive constants.

    ``-sum_i log|W^i| + mean_t[ sum_i ||y^i - s||^2 / (2 sigma^2) + sum_j f(s_j) ]``
    with ``y^i = W^i x^i`` and ``s`` the average of the ``y^i``.
    """
    cfg = cfg or SolverConfig()
    c = c or logcosh()
    W, data = _check_pair(W, data)
    logdets = sum(log_abs_det(Wi, i) for i, Wi in enumerate(W.matrices))
    Y = W.matrices @ data.views
    s = Y.mean(axis=0)
    quad = np.sum((Y - s) ** 2) / data.n / (2 * cfg.sigma**2)
    return -logdets + quad + float(np.sum(c.f(s))) / data.n


def partial_shared(i, W, data):
    """``(1/m) sum_{j != i} W^j x^j``: the shared estimate without view ``i``."""
    W, data = _check_pair(W, data)
    Y = W.matrices @ data.views
    return (Y.sum(axis=0) - Y[i]) / data.m


def per_subject_loss(i, W_i, frozen_others, data, cfg=None, c=None):
    """Loss as a function of ``W^i`` alone, the other views held fixed.

    Parameters
    ----------
    i : int
        View index.
    W_i : ndarray of shape (k, k)
    frozen_others : ndarray of shape (k, n)
        ``(1/m) sum_{j != i} W^j x^j``, see :func:`partial_shared`.
    data : MultiViewDataset
    """
    cfg = cfg or SolverConfig()
    c = c or logcosh()
    data = as_dataset(data)
    W_i = np.asarray(W_i, dtype=float)
    if W_i.shape != (data.k, data.k) or np.shape(frozen_others) != (data.k, data.n):
        raise DimensionError("W_i must be (k, k) and frozen_others (k, n)")
    y = W_i @ data.views[i]
    return _view_loss(y, log_abs_det(W_i, i), frozen_others, data.m, cfg.sigma, c)


def _view_quadratic(y, s_minus, m, sigma):
    if m == 1:
        return 0.0
    r = y - m / (m - 1) * s_minus
    return (1 - 1 / m) / (2 * sigma**2) * float(np.sum(r * r)) / y.shape[1]


def _view_loss(y, logdet, s_minus, m, sigma, c):
    n = y.shape[1]
    contrast = float(np.sum(c.f(y / m + s_minus))) / n
    return -logdet + contrast + _view_quadratic(y, s_minus, m, sigma)
