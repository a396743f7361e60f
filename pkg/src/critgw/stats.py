"""Statistical test kit and reproducible random-stream management.

The stream family derives per-replicate generators by mixing a 64-bit
master seed with the replicate index through the splitmix64 finalizer, so
replicate k sees the same draws no matter how many workers run or in what
order replicates execute.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import chi2 as _chi2_dist

__all__ = [
    "SeededStreamFamily",
    "EmpiricalSample",
    "MCResult",
    "ChiSquareResult",
    "ks_statistic",
    "ks_critical_value",
    "chi_square",
    "tv_distance",
    "mc_run",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    """Finalizer of the splitmix64 generator (strong 64-bit mixer)."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


@dataclass(frozen=True)
class SeededStreamFamily:
    """Counter-derived family of independent random streams.

    ``stream(k)`` seeds a PCG64 generator with splitmix64 applied to
    ``master_seed + (k+1) * golden``; the same (master_seed, k) pair always
    yields the identical draw sequence, independent of call order.
    """

    master_seed: int

    def seed_for(self, index: int) -> int:
        if index < 0:
            raise ValueError(f"stream index must be >= 0, got {index}")
        return _splitmix64((self.master_seed + (index + 1) * _GOLDEN) & _MASK64)

    def stream(self, index: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_for(index)))


@dataclass
class EmpiricalSample:
    """Continuous sample values plus an optional atom at a fixed point."""

    values: np.ndarray
    atom_count: int = 0
    atom_point: float = 0.0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float).ravel()
        if not np.isfinite(self.values).all():
            raise ValueError("sample values must be finite")
        if self.atom_count < 0:
            raise ValueError("atom count must be >= 0")

    @property
    def n_total(self) -> int:
        return self.values.size + self.atom_count


def ks_statistic(sample, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Sup-norm distance between the empirical CDF of the continuous part and ``cdf``.

    Any atom in the sample is ignored here; callers compare atom masses
    separately (binomial check against the law's atom formula).
    """
    values = sample.values if isinstance(sample, EmpiricalSample) else np.asarray(sample, dtype=float)
    values = values.ravel()
    if values.size == 0:
        raise ValueError("empty sample")
    xs = np.sort(values)
    n = xs.size
    f = np.asarray(cdf(xs), dtype=float)
    grid = np.arange(1, n + 1) / n
    d_plus = float(np.max(grid - f))
    d_minus = float(np.max(f - (grid - 1.0 / n)))
    return max(d_plus, d_minus, 0.0)


_KS_COEFF = {0.10: 1.22, 0.05: 1.36, 0.01: 1.63}


def ks_critical_value(n: int, level: float = 0.01) -> float:
    """Asymptotic Kolmogorov critical value c(level)/sqrt(n)."""
    if level not in _KS_COEFF:
        raise ValueError(f"level must be one of {sorted(_KS_COEFF)}")
    return _KS_COEFF[level] / np.sqrt(n)


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    pvalue: float


def chi_square(observed, expected_probs) -> ChiSquareResult:
    """Pearson goodness-of-fit test with the small-expected-count merge rule.

    Categories whose expected count falls below 5 are pooled into a tail
    bucket before testing; pooling proceeds by increasing expected count,
    ties broken by category index, and continues until the bucket itself
    reaches an expected count of 5 (or everything is pooled).
    """
    obs = np.asarray(observed, dtype=float).ravel()
    probs = np.asarray(expected_probs, dtype=float).ravel()
    if obs.shape != probs.shape:
        raise ValueError("observed and expected must have the same length")
    if (probs < 0).any():
        raise ValueError("expected probabilities must be nonnegative")
    total = obs.sum()
    if total <= 0:
        raise ValueError("all-zero observations")
    psum = probs.sum()
    if abs(psum - 1.0) > 1e-9:
        raise ValueError(f"expected probabilities sum to {psum:.10g}")
    expected = probs * total

    order = np.lexsort((np.arange(expected.size), expected))
    pooled_obs: list[float] = []
    pooled_exp: list[float] = []
    bucket_obs = bucket_exp = 0.0
    idx = 0
    while idx < order.size:
        cur = expected[order[idx]]
        if cur >= 5.0:
            if bucket_exp == 0.0 or bucket_exp >= 5.0:
                break
            if idx == order.size - 1:
                # rather than swallow the last category into the bucket,
                # accept a slightly underweight bucket
                break
        bucket_obs += obs[order[idx]]
        bucket_exp += expected[order[idx]]
        idx += 1
    for k in order[idx:]:
        pooled_obs.append(obs[k])
        pooled_exp.append(expected[k])
    if bucket_exp > 0:
        pooled_obs.append(bucket_obs)
        pooled_exp.append(bucket_exp)
    o = np.asarray(pooled_obs)
    e = np.asarray(pooled_exp)
    if o.size < 2:
        raise ValueError("fewer than two categories after pooling (dof 0)")
    stat = float(np.sum((o - e) ** 2 / e))
    dof = o.size - 1
    return ChiSquareResult(statistic=stat, dof=dof, pvalue=float(_chi2_dist.sf(stat, dof)))


def tv_distance(p, q) -> float:
    """Total variation distance between two probability vectors."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise ValueError("vectors must have the same length")
    for name, vec in (("p", p), ("q", q)):
        if (vec < -1e-12).any():
            raise ValueError(f"{name} has negative entries")
        if abs(vec.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} sums to {vec.sum():.10g}, not 1")
    return 0.5 * float(np.abs(p - q).sum())


@dataclass(frozen=True)
class MCResult:
    """Aggregate of a Monte Carlo run with its standard error (mean aggregator)."""

    value: np.ndarray | float
    stderr: np.ndarray | float | None
    replicates: int


def _mc_worker(args):
    task, family, indices = args
    return [(i, task(family.stream(i))) for i in indices]


def mc_run(
    task: Callable[[np.random.Generator], object],
    replicates: int,
    streams: SeededStreamFamily,
    aggregator: str | Callable[[list], object] = "mean",
    workers: int = 1,
) -> MCResult:
    """Run ``task`` once per replicate on its own stream and aggregate.

    Results are collected and combined in replicate-index order, so the
    aggregate is byte-identical for any worker count.  Tasks must be
    picklable when workers > 1.  A failing replicate aborts the run with
    its index attached.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    results: list = [None] * replicates
    indices = list(range(replicates))
    if workers <= 1:
        for i in indices:
            try:
                results[i] = task(streams.stream(i))
            except Exception as exc:
                raise RuntimeError(f"replicate {i} failed: {exc}") from exc
    else:
        chunks = [indices[k::workers] for k in range(workers)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            try:
                for batch in pool.map(_mc_worker, [(task, streams, c) for c in chunks]):
                    for i, val in batch:
                        results[i] = val
            except Exception as exc:
                raise RuntimeError(f"parallel replicate failed: {exc}") from exc

    if callable(aggregator):
        return MCResult(value=aggregator(results), stderr=None, replicates=replicates)
    arr = np.asarray(results, dtype=float)
    if aggregator == "sum":
        return MCResult(value=arr.sum(axis=0), stderr=None, replicates=replicates)
    if aggregator == "mean":
        mean = arr.mean(axis=0)
        if replicates > 1:
            stderr = arr.std(axis=0, ddof=1) / np.sqrt(replicates)
        else:
            stderr = np.zeros_like(mean)
        return MCResult(value=mean, stderr=stderr, replicates=replicates)
    raise ValueError(f"unknown aggregator {aggregator!r}")
