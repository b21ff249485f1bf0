"""Point estimates: group change means, DID bounding parameters and union bounds.

Cell means are ratio estimators over observed outcomes only, computed
independently for each (group, period). A group's change mean is the
difference of two such cell means, not a mean of within-unit differences;
the two differ once outcomes go missing.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .data import GROUPS, GroupLabel, PanelDataset
from .exceptions import EstimationError

__all__ = [
    "MAX_HORIZON",
    "TauEstimates",
    "BoundingEstimates",
    "cell_means",
    "group_change_mean",
    "tau_hat",
    "tau_estimates",
    "bounding_sums",
    "identified_set_hat",
    "enumerate_sums",
    "assignments",
    "check_horizon",
]

# 2**15 bounding sums at most
MAX_HORIZON = 16


def check_horizon(t: int, T: int) -> None:
    if not isinstance(t, (int, np.integer)) or isinstance(t, bool):
        raise ValueError(f"horizon must be an integer, got {t!r}")
    if t < 2 or t > T:
        raise ValueError(f"horizon t={t} outside 2..{T}")
    if t > MAX_HORIZON:
        raise ValueError(f"horizon t={t} exceeds supported maximum {MAX_HORIZON}")


def _cell_label(code: int, t: int) -> str:
    return f"(group={GROUPS[code].value}, t={t})"


def cell_means(ds: PanelDataset, horizon: int | None = None) -> np.ndarray:
    """Observed-outcome means, shape (3, horizon); rows trt, a, b.

    Empty cells are NaN. Sums use ``math.fsum`` (exactly rounded).
    """
    horizon = ds.T if horizon is None else horizon
    out = np.full((3, horizon), np.nan)
    y, r, g = ds.outcomes, ds.observed, ds.group_codes
    for code in range(3):
        rows = g == code
        for t in range(horizon):
            vals = y[rows, t][r[rows, t]]
            if vals.size:
                out[code, t] = math.fsum(vals) / vals.size
    return out


def _require(means: np.ndarray, code: int, t: int) -> None:
    # t is 1-based
    if math.isnan(means[code, t - 1]):
        raise EstimationError(f"no observed outcomes in cell {_cell_label(code, t)}")


def group_change_mean(ds: PanelDataset, g: GroupLabel | str, t: int) -> float:
    """Mean of observed ``Y_t`` minus mean of observed ``Y_{t-1}`` within group ``g``."""
    g = GroupLabel(g)
    check_horizon(t, ds.T)
    means = cell_means(ds, t)
    _require(means, g.code, t - 1)
    _require(means, g.code, t)
    return float(means[g.code, t - 1] - means[g.code, t - 2])


def tau_hat(ds: PanelDataset, g: GroupLabel | str, t: int) -> float:
    """DID bounding parameter for period ``t`` using control group ``g``."""
    g = GroupLabel(g)
    if g is GroupLabel.TREATED:
        raise ValueError("tau_hat needs a control group (a or b)")
    return group_change_mean(ds, GroupLabel.TREATED, t) - group_change_mean(ds, g, t)


def taus_from_means(means: np.ndarray) -> np.ndarray:
    """Bounding parameters from cell means.

    ``means`` has shape (..., 3, H). Returns (..., 2, H-1): row 0 is
    tau_a(s), row 1 tau_b(s), for s = 2..H.
    """
    deltas = np.diff(means, axis=-1)
    return deltas[..., :1, :] - deltas[..., 1:, :]


@dataclass(frozen=True)
class TauEstimates:
    """tau_a(s), tau_b(s) for s = 2..t (index 0 is s = 2)."""

    tau_a: np.ndarray
    tau_b: np.ndarray

    @property
    def t(self) -> int:
        return len(self.tau_a) + 1


def tau_estimates(ds: PanelDataset, t: int) -> TauEstimates:
    check_horizon(t, ds.T)
    means = cell_means(ds, t)
    for code in range(3):
        for s in range(1, t + 1):
            _require(means, code, s)
    taus = taus_from_means(means)
    return TauEstimates(taus[0], taus[1])


def assignments(t: int) -> list[tuple[GroupLabel, ...]]:
    """Control-group assignments (g_2, ..., g_t) in the order used by ``enumerate_sums``."""
    return list(itertools.product(GROUPS[1:], repeat=t - 1))


def enumerate_sums(tau_a: np.ndarray, tau_b: np.ndarray) -> np.ndarray:
    """All 2**S sums ``sum_s tau_{g_s}(s)`` over assignments g in {a, b}**S.

    Inputs have shape (..., S); the result has shape (..., 2**S), ordered like
    ``itertools.product((a, b), repeat=S)`` with the last period varying
    fastest. Each sum accumulates periods left to right.
    """
    tau_a = np.asarray(tau_a, dtype=float)
    tau_b = np.asarray(tau_b, dtype=float)
    sums = np.zeros(tau_a.shape[:-1] + (1,))
    for s in range(tau_a.shape[-1]):
        pair = np.stack([tau_a[..., s], tau_b[..., s]], axis=-1)
        sums = (sums[..., :, None] + pair[..., None, :]).reshape(tau_a.shape[:-1] + (-1,))
    return sums


@dataclass(frozen=True)
class BoundingEstimates:
    """Estimated union bounds on ATT_t.

    Attributes
    ----------
    t : int
        Horizon.
    sums : ndarray, shape (2**(t-1),)
        One bounding sum per assignment in ``assignments(t)`` order.
    lower, upper : float
        min and max of ``sums``.
    taus : TauEstimates
    """

    t: int
    sums: np.ndarray
    lower: float
    upper: float
    taus: TauEstimates

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def assignments(self) -> list[tuple[GroupLabel, ...]]:
        return assignments(self.t)

    def closed_form(self) -> tuple[float, float]:
        """(sum of per-period minima, sum of per-period maxima)."""
        a, b = self.taus.tau_a, self.taus.tau_b
        return float(np.minimum(a, b).sum()), float(np.maximum(a, b).sum())


def bounding_sums(ds: PanelDataset, t: int) -> BoundingEstimates:
    """Enumerate the 2**(t-1) bounding sums for ATT_t."""
    taus = tau_estimates(ds, t)
    sums = enumerate_sums(taus.tau_a, taus.tau_b)
    sums.setflags(write=False)
    return BoundingEstimates(t, sums, float(sums.min()), float(sums.max()), taus)


def identified_set_hat(ds: PanelDataset, t: int) -> tuple[float, float]:
    est = bounding_sums(ds, t)
    return est.lower, est.upper
