"""Checks on the monotone-trends design: falsification, sensitivity, trend data."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from . import rng as _rng
from .bootstrap import BootstrapConfig, IntervalResult, bootstrap_cell_means, normal_cdf
from .data import GROUPS, GroupLabel, PanelDataset
from .estimators import BoundingEstimates, cell_means
from .exceptions import EstimationError

__all__ = [
    "FalsificationResult",
    "SensitivityParams",
    "BreakEven",
    "composite_p_value",
    "falsification_test",
    "sensitivity_bounds",
    "sensitivity_ci",
    "breakeven",
    "TrendRow",
    "trend_export",
    "write_trend_csv",
]

TRT, A, B = (g.code for g in GROUPS)


# ---------------------------------------------------------------------------
# Falsification
# ---------------------------------------------------------------------------

def composite_p_value(p_a: float, p_b: float) -> float:
    """p-value of the union null (increasing-pair or decreasing-pair holds)."""
    return max(min(p_a, p_b), min(1.0 - p_a, 1.0 - p_b))


@dataclass(frozen=True)
class FalsificationResult:
    """One-sided p-values for H_a: D(a) <= D(trt) and H_b: D(trt) <= D(b), and the decision.

    ``z_a``/``z_b`` are the standardised statistics, ``se_a``/``se_b`` their
    standard errors.
    """

    t2_star: int
    p_a_i: float
    p_b_i: float
    p_composite: float
    reject: bool
    alpha: float
    z_a: float
    z_b: float
    se_a: float
    se_b: float
    se_method: str
    B: int
    seed: int


def _analytic_change_var(ds: PanelDataset, code: int, t: int) -> float:
    # linearised variance of mean(Y_t) - mean(Y_{t-1}) within a group; t is 1-based
    rows = ds.group_codes == code
    y, r = ds.outcomes[rows], ds.observed[rows]
    cur, prev = r[:, t - 1], r[:, t - 2]
    n_cur, n_prev = cur.sum(), prev.sum()
    m_cur = y[cur, t - 1].mean()
    m_prev = y[prev, t - 2].mean()
    infl = np.where(cur, (y[:, t - 1] - m_cur) / n_cur, 0.0) - np.where(
        prev, (y[:, t - 2] - m_prev) / n_prev, 0.0
    )
    return math.fsum(infl**2)


def falsification_test(
    ds: PanelDataset,
    t2_star: int,
    alpha: float = 0.05,
    cfg: BootstrapConfig | None = None,
    se_method: str = "bootstrap",
) -> FalsificationResult:
    """Test monotone trends on the period pair ``(t2_star - 1, t2_star)``.

    The pair should precede, and not overlap, the periods used for estimation.
    Each one-sided p-value comes from a z-test, ``p = 1 - Phi(z)``, with the
    standard error either from the bootstrap (``cfg.B`` replicates) or from a
    plug-in linearisation (``se_method="analytic"``). H0 is rejected when
    ``max(min(p_a, p_b), min(1 - p_a, 1 - p_b)) <= alpha / 2``.
    """
    cfg = cfg or BootstrapConfig(alpha=alpha)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not 2 <= t2_star <= ds.T:
        raise ValueError(f"t2_star={t2_star} outside 2..{ds.T}")
    means = cell_means(ds, t2_star)
    for code in range(3):
        for t in (t2_star - 1, t2_star):
            if math.isnan(means[code, t - 1]):
                raise EstimationError(
                    f"no observed outcomes in cell (group={GROUPS[code].value}, t={t})"
                )
    change = means[:, t2_star - 1] - means[:, t2_star - 2]
    stat_a = change[A] - change[TRT]
    stat_b = change[TRT] - change[B]

    if se_method == "bootstrap":
        required = np.zeros((3, t2_star), dtype=bool)
        required[:, t2_star - 2 :] = True
        reps, _ = bootstrap_cell_means(
            ds, cfg, t2_star, required=required, domain=_rng.FALSIFICATION
        )
        rep_change = reps[:, :, t2_star - 1] - reps[:, :, t2_star - 2]
        se_a = float(np.std(rep_change[:, A] - rep_change[:, TRT], ddof=1))
        se_b = float(np.std(rep_change[:, TRT] - rep_change[:, B], ddof=1))
    elif se_method == "analytic":
        v = [_analytic_change_var(ds, code, t2_star) for code in range(3)]
        se_a = math.sqrt(v[A] + v[TRT])
        se_b = math.sqrt(v[TRT] + v[B])
    else:
        raise ValueError(f"unknown se_method {se_method!r}")
    if not (se_a > 0 and se_b > 0):
        raise EstimationError("standard error is zero; the falsification test is undefined")

    z_a, z_b = stat_a / se_a, stat_b / se_b
    p_a, p_b = 1.0 - normal_cdf(z_a), 1.0 - normal_cdf(z_b)
    p = composite_p_value(p_a, p_b)
    return FalsificationResult(
        t2_star, p_a, p_b, p, p <= alpha / 2, alpha,
        float(z_a), float(z_b), se_a, se_b, se_method, cfg.B, cfg.seed,
    )


# ---------------------------------------------------------------------------
# Sensitivity analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensitivityParams:
    """Per-period allowances for the treated change falling below the lower
    control change (``gammas``) or above the upper one (``deltas``), s = 2..t."""

    gammas: tuple[float, ...]
    deltas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        if len(self.gammas) != len(self.deltas):
            raise ValueError("gammas and deltas must have one entry per period 2..t")
        for v in self.gammas + self.deltas:
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"sensitivity parameters must be finite and >= 0, got {v}")

    @classmethod
    def zeros(cls, t: int) -> "SensitivityParams":
        return cls((0.0,) * (t - 1), (0.0,) * (t - 1))

    @property
    def t(self) -> int:
        return len(self.gammas) + 1

    @property
    def total_gamma(self) -> float:
        return math.fsum(self.gammas)

    @property
    def total_delta(self) -> float:
        return math.fsum(self.deltas)

    def __add__(self, other: "SensitivityParams") -> "SensitivityParams":
        return SensitivityParams(
            tuple(x + y for x, y in zip(self.gammas, other.gammas, strict=True)),
            tuple(x + y for x, y in zip(self.deltas, other.deltas, strict=True)),
        )


def _check_len(sp: SensitivityParams, t: int) -> None:
    if sp.t != t:
        raise ValueError(f"need {t - 1} sensitivity parameters per side for t={t}, got {sp.t - 1}")


def sensitivity_bounds(est: BoundingEstimates, sp: SensitivityParams) -> tuple[float, float]:
    """Bounds on ATT_t when monotone trends may fail by at most (gamma, delta)."""
    _check_len(sp, est.t)
    return est.lower - sp.total_delta, est.upper + sp.total_gamma


def sensitivity_ci(base: IntervalResult, sp: SensitivityParams) -> IntervalResult:
    """Shift a confidence interval outwards by the summed sensitivity parameters."""
    return base.shifted(sp.total_delta, sp.total_gamma)


@dataclass(frozen=True)
class BreakEven:
    """Smallest summed violation that moves the interval's near end to zero.

    ``side`` is ``"delta"`` for a positive interval, ``"gamma"`` for a negative
    one and ``None`` when the interval already contains zero.
    """

    side: str | None
    amount: float | None
    message: str


def breakeven(base: IntervalResult) -> BreakEven:
    if base.lower > 0:
        return BreakEven(
            "delta", base.lower,
            f"sum of delta_s = {base.lower:.6g} explains away the positive effect",
        )
    if base.upper < 0:
        return BreakEven(
            "gamma", -base.upper,
            f"sum of gamma_s = {-base.upper:.6g} explains away the negative effect",
        )
    return BreakEven(None, None, "no effect detected; break-even undefined")


# ---------------------------------------------------------------------------
# Trend export
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrendRow:
    group: GroupLabel
    time: int
    mean: float
    relative_mean: float | None


def trend_export(ds: PanelDataset) -> list[TrendRow]:
    """Cell means per (group, time) and control means relative to the treated group.

    Cells without observations get ``nan``.
    """
    means = cell_means(ds)
    rows = []
    for g in GROUPS:
        for t in range(1, ds.T + 1):
            m = float(means[g.code, t - 1])
            rel = None if g is GroupLabel.TREATED else m - float(means[TRT, t - 1])
            rows.append(TrendRow(g, t, m, rel))
    return rows


def write_trend_csv(rows: Sequence[TrendRow], stream: IO[str]) -> None:
    """CSV ``group,time,mean,relative_mean`` (relative_mean empty for trt)."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("group", "time", "mean", "relative_mean"))
    for row in rows:
        w.writerow((
            row.group.value,
            row.time,
            repr(row.mean),
            "" if row.relative_mean is None else repr(row.relative_mean),
        ))
