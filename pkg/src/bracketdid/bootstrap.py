"""Nonparametric bootstrap for union bounds and the confidence intervals built on it.

Replicate ``b`` resamples whole units (outcomes, missingness and group travel
together) using its own counter-based stream keyed by ``(seed, b)``, so the
replicate set is a pure function of ``(dataset, horizon, config)`` whatever the
number of workers.

Quantiles are order statistics: ``Q_q(v) = v_(ceil(q * B))`` with ``Q_0`` the
smallest value.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng as _rng
from .data import PanelDataset
from .estimators import (
    BoundingEstimates,
    bounding_sums,
    check_horizon,
    enumerate_sums,
    taus_from_means,
)
from .exceptions import BootstrapError

__all__ = [
    "BootstrapConfig",
    "BootstrapDistribution",
    "ParameterInternals",
    "IntervalResult",
    "KINDS",
    "normal_cdf",
    "empirical_quantile",
    "resample",
    "draw_indices",
    "bootstrap_cell_means",
    "run_bootstrap",
    "bootstrap_horizons",
    "set_interval",
    "parameter_interval",
    "percentile_interval",
    "union_interval",
    "ci_identified_set",
    "ci_parameter",
    "ci_percentile",
    "ci_union",
    "all_intervals",
]

KINDS = ("set", "parameter", "percentile", "union")
REDRAW_FACTOR = 1000


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 300
    alpha: float = 0.05
    seed: int = 42

    def __post_init__(self):
        if int(self.B) != self.B or self.B < 2:
            raise ValueError(f"B must be an integer >= 2, got {self.B}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an integer in [0, 2**64)")
        if self.B * min(self.alpha / 2, 1 - self.alpha / 2) < 1:
            warnings.warn(
                f"B={self.B} is too small to resolve the alpha/2={self.alpha / 2} quantile",
                stacklevel=3,
            )


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def normal_cdf(x: float) -> float:
    """Standard normal CDF, ``0.5 * erfc(-x / sqrt(2))``."""
    x = float(x)
    if math.isnan(x):
        return math.nan
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _order_index(q: float, n: int) -> int:
    # 0-based position of the ceil(q * n)-th order statistic; rounding guards
    # products such as 0.7 * 10 = 7.000000000000001
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile level must lie in [0, 1], got {q}")
    k = math.ceil(round(q * n, 9))
    return min(max(k, 1), n) - 1


def _sorted_quantile(sorted_values: np.ndarray, q: float) -> float:
    return float(sorted_values[_order_index(q, len(sorted_values))])


def empirical_quantile(values: Sequence[float], q: float) -> float:
    """Order-statistic sample quantile ``x_(ceil(q * B))`` (``q = 0`` gives the minimum)."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("empirical_quantile of an empty sequence")
    return _sorted_quantile(v, q)


def draw_indices(n: int, gen: np.random.Generator) -> np.ndarray:
    """``n`` unit indices drawn uniformly with replacement."""
    return gen.integers(0, n, size=n)


def resample(ds: PanelDataset, gen: np.random.Generator) -> PanelDataset:
    """Bootstrap sample of whole units from the canonical unit list.

    Repeated draws of a unit get ``#k`` suffixes on ``unit_id``.
    """
    idx = np.sort(draw_indices(ds.N, gen))
    ids, seen = [], {}
    for i in idx:
        k = seen.get(i, 0)
        seen[i] = k + 1
        uid = ds.unit_ids[i]
        ids.append(uid if k == 0 else f"{uid}#{k}")
    return PanelDataset(ids, ds.outcomes[idx], ds.observed[idx], ds.group_codes[idx])


# ---------------------------------------------------------------------------
# Replicate engine
# ---------------------------------------------------------------------------

def _design(ds: PanelDataset, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-unit contributions to cell sums and counts, shapes (N, 3*horizon)."""
    y = ds.outcomes[:, :horizon]
    r = ds.observed[:, :horizon]
    onehot = ds.group_codes[:, None] == np.arange(3)[None, :]
    cnt = (onehot[:, :, None] & r[:, None, :]).reshape(ds.N, -1)
    tot = np.where(cnt, np.repeat(y[:, None, :], 3, axis=1).reshape(ds.N, -1), 0.0)
    return tot, cnt.astype(np.int64)


def _replicate_chunk(ds, horizon, required, cfg, indices, domain):
    tot, cnt = _design(ds, horizon)
    need = required.reshape(-1)
    n = ds.N
    limit = REDRAW_FACTOR * cfg.B
    sums = np.empty((len(indices), tot.shape[1]))
    counts = np.empty((len(indices), cnt.shape[1]), dtype=np.int64)
    redraws = 0
    for row, b in enumerate(indices):
        gen = _rng.stream(cfg.seed, b, domain)
        failures = 0
        while True:
            w = np.bincount(draw_indices(n, gen), minlength=n)
            c = w @ cnt
            if np.all(c[need] > 0):
                break
            failures += 1
            if failures > limit:
                raise BootstrapError(
                    f"replicate {b}: {failures} consecutive resamples left a required "
                    "(group, time) cell empty; the data are too sparse to bootstrap"
                )
        redraws += failures
        # per-row reduction keeps results independent of how replicates are chunked
        sums[row] = np.einsum("n,nk->k", w.astype(float), tot)
        counts[row] = c
    return sums, counts, redraws


def bootstrap_cell_means(
    ds: PanelDataset,
    cfg: BootstrapConfig,
    horizon: int,
    required: np.ndarray | None = None,
    jobs: int = 1,
    domain: int = _rng.BOOTSTRAP,
) -> tuple[np.ndarray, int]:
    """Replicate cell means, shape (B, 3, horizon), and the number of redraws.

    A replicate in which any ``required`` (group, period) cell has no observed
    outcome is redrawn from the same stream. By default every cell up to
    ``horizon`` is required.
    """
    if required is None:
        required = np.ones((3, horizon), dtype=bool)
    required = np.asarray(required, dtype=bool)
    jobs = max(1, int(jobs))
    chunks = [c for c in np.array_split(np.arange(cfg.B), jobs) if c.size]

    def work(chunk):
        return _replicate_chunk(ds, horizon, required, cfg, chunk.tolist(), domain)

    if len(chunks) == 1:
        parts = [work(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(work, chunks))
    sums = np.concatenate([p[0] for p in parts]).reshape(cfg.B, 3, horizon)
    counts = np.concatenate([p[1] for p in parts]).reshape(cfg.B, 3, horizon)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return means, sum(p[2] for p in parts)


@dataclass(frozen=True)
class BootstrapDistribution:
    """Replicate bounding sums for one horizon.

    ``sums[b, j]`` is the j-th bounding sum in replicate ``b``; ``mins`` and
    ``maxs`` are its row minima and maxima.
    """

    t: int
    sums: np.ndarray
    mins: np.ndarray
    maxs: np.ndarray
    redraws: int = 0

    @classmethod
    def from_sums(cls, t: int, sums: np.ndarray, redraws: int = 0) -> "BootstrapDistribution":
        sums = np.asarray(sums, dtype=float)
        if sums.ndim == 1:
            sums = sums[:, None]
        return cls(t, sums, sums.min(axis=1), sums.max(axis=1), redraws)

    @property
    def B(self) -> int:
        return len(self.mins)


def bootstrap_horizons(
    ds: PanelDataset, cfg: BootstrapConfig, horizons: Sequence[int], jobs: int = 1
) -> dict[int, BootstrapDistribution]:
    """One replicate set serving several horizons.

    Replicate validity is judged on every cell up to ``max(horizons)``; for a
    single horizon this is exactly ``run_bootstrap``.
    """
    H = max(horizons)
    for t in horizons:
        check_horizon(t, ds.T)
    means, redraws = bootstrap_cell_means(ds, cfg, H, jobs=jobs)
    taus = taus_from_means(means)
    out = {}
    for t in horizons:
        sums = enumerate_sums(taus[:, 0, : t - 1], taus[:, 1, : t - 1])
        out[t] = BootstrapDistribution.from_sums(t, sums, redraws)
    return out


def run_bootstrap(
    ds: PanelDataset, t: int, cfg: BootstrapConfig, jobs: int = 1
) -> BootstrapDistribution:
    bounding_sums(ds, t)  # surfaces empty-cell errors on the original sample
    return bootstrap_horizons(ds, cfg, [t], jobs=jobs)[t]


# ---------------------------------------------------------------------------
# Intervals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParameterInternals:
    omega_hat_plus: float
    rho: float | None  # None when both replicate IQRs vanish
    p_hat: float


@dataclass(frozen=True)
class IntervalResult:
    lower: float
    upper: float
    kind: str
    alpha: float
    B: int
    seed: int
    internals: ParameterInternals | None = None
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown interval kind {self.kind!r}")
        if (self.internals is not None) != (self.kind == "parameter"):
            raise ValueError("internals are required for parameter intervals and only for them")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper

    def covers(self, lo: float, hi: float) -> bool:
        return self.lower <= lo and hi <= self.upper

    def shifted(self, down: float, up: float) -> "IntervalResult":
        """``[lower - down, upper + up]``; kind, internals and flags are kept."""
        return IntervalResult(
            self.lower - down, self.upper + up, self.kind, self.alpha, self.B, self.seed,
            self.internals, self.flags,
        )


def _finish(lower, upper, kind, cfg, internals=None, flags=()):
    flags = tuple(flags)
    if lower > upper:
        mid = 0.5 * (lower + upper)
        lower = upper = mid
        flags += ("quantile_crossing",)
    return IntervalResult(float(lower), float(upper), kind, cfg.alpha, cfg.B, cfg.seed,
                          internals, flags)


def set_interval(
    est: BoundingEstimates, dist: BootstrapDistribution, cfg: BootstrapConfig
) -> IntervalResult:
    """Reflected-quantile interval for the identified set."""
    a = cfg.alpha
    mins, maxs = np.sort(dist.mins), np.sort(dist.maxs)
    lower = 2 * est.lower - _sorted_quantile(mins, 1 - a / 2)
    upper = 2 * est.upper - _sorted_quantile(maxs, a / 2)
    return _finish(lower, upper, "set", cfg)


def parameter_interval(
    est: BoundingEstimates, dist: BootstrapDistribution, cfg: BootstrapConfig, n_units: int
) -> IntervalResult:
    """Interval for ATT_t whose per-side level adapts to the estimated width."""
    a = cfg.alpha
    mins, maxs = np.sort(dist.mins), np.sort(dist.maxs)
    q = _sorted_quantile
    omega = (2 * est.upper - q(maxs, 0.5)) - (2 * est.lower - q(mins, 0.5))
    omega_plus = max(0.0, omega)
    spread = max(q(maxs, 0.75) - q(maxs, 0.25), q(mins, 0.75) - q(mins, 0.25))
    flags = []
    if spread > 0 and n_units > 1:
        rho = 1.0 / (math.log(n_units) * spread)
        p_hat = 1.0 - normal_cdf(rho * omega_plus) * a
    else:
        rho = None
        p_hat = 1.0 - a / 2
        flags.append("rho_undefined")
    lower = 2 * est.lower - q(mins, p_hat)
    upper = 2 * est.upper - q(maxs, 1.0 - p_hat)
    internals = ParameterInternals(omega_plus, rho, p_hat)
    return _finish(lower, upper, "parameter", cfg, internals, flags)


def percentile_interval(dist: BootstrapDistribution, cfg: BootstrapConfig) -> IntervalResult:
    a = cfg.alpha
    lower = _sorted_quantile(np.sort(dist.mins), a / 2)
    upper = _sorted_quantile(np.sort(dist.maxs), 1 - a / 2)
    return _finish(lower, upper, "percentile", cfg)


def union_interval(
    est: BoundingEstimates, dist: BootstrapDistribution, cfg: BootstrapConfig
) -> IntervalResult:
    """Union of per-sum basic bootstrap intervals."""
    a = cfg.alpha
    srt = np.sort(dist.sums, axis=0)
    hi_q = srt[_order_index(1 - a / 2, dist.B)]
    lo_q = srt[_order_index(a / 2, dist.B)]
    lowers = 2 * est.sums - hi_q
    uppers = 2 * est.sums - lo_q
    return _finish(lowers.min(), uppers.max(), "union", cfg)


def all_intervals(
    est: BoundingEstimates, dist: BootstrapDistribution, cfg: BootstrapConfig, n_units: int
) -> dict[str, IntervalResult]:
    return {
        "set": set_interval(est, dist, cfg),
        "parameter": parameter_interval(est, dist, cfg, n_units),
        "percentile": percentile_interval(dist, cfg),
        "union": union_interval(est, dist, cfg),
    }


def ci_identified_set(ds: PanelDataset, t: int, cfg: BootstrapConfig, jobs: int = 1):
    return set_interval(bounding_sums(ds, t), run_bootstrap(ds, t, cfg, jobs), cfg)


def ci_parameter(ds: PanelDataset, t: int, cfg: BootstrapConfig, jobs: int = 1):
    return parameter_interval(bounding_sums(ds, t), run_bootstrap(ds, t, cfg, jobs), cfg, ds.N)


def ci_percentile(ds: PanelDataset, t: int, cfg: BootstrapConfig, jobs: int = 1):
    return percentile_interval(run_bootstrap(ds, t, cfg, jobs), cfg)


def ci_union(ds: PanelDataset, t: int, cfg: BootstrapConfig, jobs: int = 1):
    return union_interval(bounding_sums(ds, t), run_bootstrap(ds, t, cfg, jobs), cfg)
