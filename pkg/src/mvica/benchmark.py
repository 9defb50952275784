"""Synthetic noise-sweep benchmark of MultiView ICA against group-ICA baselines.

Every ``(noise level, seed)`` pair defines one synthetic instance; all methods
run on that same instance. Rows are written in a fixed order (method, noise
level, seed) whatever the number of workers.
"""

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .baselines import group_ica, pca, pca_group_ica
from .initialization import _permica, diagonal_scaling
from .metrics import reconstruction_error
from .model import MultiViewDataset, SolverConfig, logcosh
from .simgen import SynthSpec, gen_sensor_noise_model, gen_shared_model
from .solver import fit

logger = logging.getLogger(__name__)

METHODS = ("multiview", "groupica", "pca_groupica", "permica")
RESULTS_HEADER = [
    "method", "noise_std", "seed", "reconstruction_error",
    "wall_time_seconds", "converged", "sweeps",
]
SUMMARY_HEADER = [
    "method", "noise_std", "count", "median", "q25", "q75", "converged_fraction",
]


@dataclass(frozen=True)
class BenchmarkRow:
    method: str
    noise_std: float
    seed: int
    reconstruction_error: float
    wall_time_seconds: float
    converged: bool
    sweeps: int


@dataclass(frozen=True)
class BenchmarkSetup:
    m: int = 10
    k: int = 15
    n: int = 1000
    model: str = "shared"
    obs_dim: int = 50
    sigma: float = 1.0
    tol: float = 1e-4
    max_sweeps: int = 10000
    timing: bool = True


def noise_grid(low=1e-2, high=10.0, points=10):
    """Geometrically spaced noise levels between ``low`` and ``high``."""
    if points == 1:
        return np.array([float(low)])
    return np.geomspace(low, high, points)


def instance_seed(seed, noise_index):
    """64-bit data seed for one ``(seed, noise level)`` cell."""
    ss = np.random.SeedSequence([seed, noise_index])
    return int(ss.generate_state(1, np.uint64)[0])


def make_instance(setup, noise_std, seed, noise_index):
    """Data to fit (reduced to ``k`` rows per view) and the true sources."""
    data_seed = instance_seed(seed, noise_index)
    if setup.model == "shared":
        inst = gen_shared_model(SynthSpec(setup.m, setup.k, setup.n, noise_std, None, data_seed))
        return inst.data, inst.true_sources
    if setup.model == "sensor":
        spec = SynthSpec(setup.m, setup.k, setup.n, noise_std, setup.obs_dim, data_seed)
        inst = gen_sensor_noise_model(spec)
        reduced = np.stack([pca(x, setup.k).reduced for x in inst.data.views])
        return MultiViewDataset(reduced), inst.true_sources
    raise ValueError(f"unknown model {setup.model!r}")


class _PermicaCache:
    """PermICA is both a method and the first stage of MultiView ICA's
    initialization; run it once per instance and charge its time to both."""

    def __init__(self, data, cfg, c):
        self.data, self.cfg, self.c = data, cfg, c
        self._result = None

    def get(self):
        """Return ``(W, infos, seconds)``."""
        if self._result is None:
            start = time.perf_counter()
            W, infos = _permica(self.data, self.c, 3, self.cfg)
            self._result = (W, infos, time.perf_counter() - start)
        return self._result


def run_method(method, data, cfg, c, permica_cache=None):
    """Fit one method.

    Returns ``(estimated_sources, converged, sweeps, extra_seconds)`` where
    ``extra_seconds`` is time spent in a shared PermICA run that the caller
    did not see.
    """
    X = data.views
    cache = permica_cache or _PermicaCache(data, cfg, c)
    if method == "multiview":
        fresh = cache._result is None
        W, _, spent = cache.get()
        init = diagonal_scaling(W, data, cfg, c)
        res = fit(data, cfg, c, init)
        return res.sources, res.converged, res.sweeps, 0.0 if fresh else spent
    if method in ("groupica", "pca_groupica"):
        runner = group_ica if method == "groupica" else pca_group_ica
        res = runner(data, data.k, c, cfg)
        return np.mean(res.unmixing @ X, axis=0), res.converged, res.sweeps, 0.0
    if method == "permica":
        fresh = cache._result is None
        W, infos, spent = cache.get()
        sweeps = max(info.sweeps for info in infos)
        converged = all(info.converged for info in infos)
        return np.mean(W.matrices @ X, axis=0), converged, sweeps, 0.0 if fresh else spent
    raise ValueError(f"unknown method {method!r}")


def run_cell(setup, methods, noise_index, noise_std, seed):
    """All methods on one synthetic instance."""
    cfg = SolverConfig(sigma=setup.sigma, tol=setup.tol, max_sweeps=setup.max_sweeps)
    c = logcosh()
    data, truth = make_instance(setup, noise_std, seed, noise_index)
    cache = _PermicaCache(data, cfg, c)
    rows = []
    for method in methods:
        start = time.perf_counter()
        try:
            est, converged, sweeps, extra = run_method(method, data, cfg, c, cache)
            error = reconstruction_error(est, truth)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            logger.warning("%s failed at noise=%g seed=%d: %s", method, noise_std, seed, exc)
            error, converged, sweeps, extra = math.nan, False, 0, 0.0
        elapsed = time.perf_counter() - start + extra if setup.timing else math.nan
        rows.append(BenchmarkRow(method, float(noise_std), seed, error, elapsed, converged, sweeps))
    return rows


def _run_cell_single_threaded(args):
    with threadpool_limits(limits=1):
        return run_cell(*args)


def worker_count():
    """Size of the worker pool: ``MVICA_THREADS`` if set, else the CPU count."""
    value = os.environ.get("MVICA_THREADS")
    if value:
        count = int(value)
        if count < 1:
            raise ValueError("MVICA_THREADS must be >= 1")
        return count
    return os.cpu_count() or 1


def run_benchmark(setup, seeds, grid, methods=METHODS, workers=None):
    """Run every ``(method, noise level, seed)`` cell.

    Returns
    -------
    list of BenchmarkRow
        Sorted by method (in the order given), noise level, then seed.
    """
    workers = workers or worker_count()
    tasks = [
        (setup, tuple(methods), j, float(noise), seed)
        for j, noise in enumerate(grid)
        for seed in range(seeds)
    ]
    if workers == 1:
        results = [_run_cell_single_threaded(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_single_threaded, tasks))
    order = {name: i for i, name in enumerate(methods)}
    noise_order = {float(v): j for j, v in enumerate(grid)}
    rows = [row for cell in results for row in cell]
    rows.sort(key=lambda r: (order[r.method], noise_order[r.noise_std], r.seed))
    return rows


def _fmt(x):
    return "nan" if math.isnan(x) else format(x, ".17g")


def write_results(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_HEADER)
        for r in rows:
            writer.writerow([
                r.method, _fmt(r.noise_std), r.seed, _fmt(r.reconstruction_error),
                _fmt(r.wall_time_seconds), "true" if r.converged else "false", r.sweeps,
            ])


def summarize(rows):
    """Median and quartiles of the error per ``(method, noise level)``.

    Failed cells (NaN error) are left out of the statistics.
    """
    groups = {}
    for r in rows:
        groups.setdefault((r.method, r.noise_std), []).append(r)
    out = []
    for (method, noise), cell in groups.items():
        errors = np.array([r.reconstruction_error for r in cell])
        errors = errors[np.isfinite(errors)]
        if errors.size:
            q25, med, q75 = np.percentile(errors, [25, 50, 75])
        else:
            q25 = med = q75 = math.nan
        conv = sum(r.converged for r in cell) / len(cell)
        out.append((method, noise, len(cell), med, q25, q75, conv))
    return out


def write_summary(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for method, noise, count, med, q25, q75, conv in summarize(rows):
            writer.writerow([method, _fmt(noise), count, _fmt(med), _fmt(q25), _fmt(q75), _fmt(conv)])
