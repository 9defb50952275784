"""Seeded synthetic data for the shared-sources and sensor-noise benchmarks.

Random streams come from numpy's PCG64 seeded through ``SeedSequence`` with a
per-stream spawn key, so that every stream is reproducible on its own:

* ``(0,)`` sources,
* ``(1, i)`` mixing matrix of view ``i``,
* ``(2, i)`` noise of view ``i``.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .model import MultiViewDataset, ValidationError

SOURCES_STREAM = (0,)
MAX_CONDITION = 1e6


def stream(seed, key):
    """Independent PCG64 generator for ``seed`` and stream ``key``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def mixing_stream(seed, i):
    return stream(seed, (1, i))


def noise_stream(seed, i):
    return stream(seed, (2, i))


@dataclass(frozen=True)
class SynthSpec:
    m: int
    k: int
    n: int
    noise_std: float = 0.0
    obs_dim: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if min(self.m, self.k, self.n) < 1:
            raise ValidationError("m, k and n must be >= 1")
        if not (np.isfinite(self.noise_std) and self.noise_std >= 0):
            raise ValidationError("noise_std must be a non-negative number")
        if self.obs_dim is not None and self.obs_dim < self.k:
            raise ValidationError("obs_dim must be >= k")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class SynthInstance:
    data: MultiViewDataset
    true_sources: np.ndarray
    true_mixings: List[np.ndarray]


def laplace(rng, size):
    """Standard Laplace draws, ``d(x) = exp(-|x|) / 2``, by inverse CDF."""
    u = rng.random(size) - 0.5
    return -np.sign(u) * np.log1p(-2.0 * np.abs(u))


def _mixing(rng, p, k):
    while True:
        A = rng.standard_normal((p, k))
        if np.linalg.cond(A) <= MAX_CONDITION:
            return A


def gen_shared_model(spec):
    """``x^i = A^i (s + n^i)`` with Laplace sources and Gaussian mixings."""
    if spec.obs_dim is not None:
        raise ValidationError("obs_dim is only used by the sensor-noise model")
    s = laplace(stream(spec.seed, SOURCES_STREAM), (spec.k, spec.n))
    views, mixings = [], []
    for i in range(spec.m):
        A = _mixing(mixing_stream(spec.seed, i), spec.k, spec.k)
        latent = s
        if spec.noise_std > 0:
            latent = s + spec.noise_std * noise_stream(spec.seed, i).standard_normal(s.shape)
        views.append(A @ latent)
        mixings.append(A)
    return SynthInstance(MultiViewDataset(np.stack(views)), s, mixings)


def gen_sensor_noise_model(spec):
    """``x^i = A^i s + n^i`` with ``A^i`` of shape ``(obs_dim, k)``.

    Noise lives on the ``obs_dim`` sensors; reduce each view with
    :func:`mvica.baselines.pca` before fitting.
    """
    if spec.obs_dim is None:
        raise ValidationError("the sensor-noise model needs obs_dim")
    p = spec.obs_dim
    s = laplace(stream(spec.seed, SOURCES_STREAM), (spec.k, spec.n))
    views, mixings = [], []
    for i in range(spec.m):
        A = _mixing(mixing_stream(spec.seed, i), p, spec.k)
        x = A @ s
        if spec.noise_std > 0:
            x = x + spec.noise_std * noise_stream(spec.seed, i).standard_normal((p, spec.n))
        views.append(x)
        mixings.append(A)
    return SynthInstance(MultiViewDataset(np.stack(views)), s, mixings)
