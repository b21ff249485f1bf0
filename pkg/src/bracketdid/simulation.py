"""Data-generating processes and the Monte Carlo coverage harness.

Outcomes follow ``Y_it = E[Y_t^(0) | G_i] + ATT_t * 1{G_i = trt} + sigma * eps_it``
with i.i.d. standard normal ``eps``. Untreated means come either from a
baseline plus cumulative per-period changes (``case1``, ``case2``, ``custom``)
or from the interactive fixed-effects model ``alpha_t + eta_g + lambda_g F_t``
(``ife``).
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import rng as _rng
from .bootstrap import BootstrapConfig, all_intervals, bootstrap_horizons
from .data import PanelDataset
from .diagnostics import falsification_test
from .estimators import bounding_sums
from .exceptions import BracketError

__all__ = [
    "DGPConfig",
    "IFEParams",
    "METHODS",
    "generate",
    "population_taus",
    "true_identified_set",
    "SimulationRow",
    "SimulationReport",
    "monte_carlo",
    "table1",
    "falsification_study",
    "REPORT_SCHEMA",
]

# report method name -> interval kind
METHODS = {
    "set_ci": "set",
    "param_ci": "parameter",
    "union_ci": "union",
    "percentile_ci": "percentile",
}
REPORT_SCHEMA = "bracketdid.simulation/1"


@dataclass(frozen=True)
class IFEParams:
    """Interactive fixed effects: ``alpha_t + eta_g + lambda_g * F_t`` (g ordered trt, a, b)."""

    alphas: tuple[float, ...]
    etas: tuple[float, float, float]
    lambdas: tuple[float, float, float]
    factors: tuple[float, ...]


@dataclass(frozen=True)
class DGPConfig:
    """Simulation design.

    ``deltas[g][s - 2]`` is the untreated mean change of group g (trt, a, b)
    from period s-1 to s; ``att[t - 1]`` is ATT_t with ``att[0] == 0``.
    ``fixed_counts`` assigns groups in fixed proportions instead of i.i.d.
    draws; ``missing_prob`` masks outcomes at random (smoke tests only).
    """

    case: str = "custom"
    N: int = 1000
    T: int = 4
    group_probs: tuple[float, float, float] = (0.3, 0.2, 0.5)
    baseline: tuple[float, float, float] = (3.0, 10.0, 4.0)
    deltas: tuple[tuple[float, ...], ...] = ((0.0,) * 3,) * 3
    att: tuple[float, ...] = (0.0, 2.0, 1.0, 1.0)
    sigma: float = 1.0
    ife: IFEParams | None = None
    fixed_counts: bool = False
    missing_prob: float = 0.0

    def __post_init__(self):
        if self.case not in ("case1", "case2", "ife", "custom"):
            raise ValueError(f"unknown case {self.case!r}")
        if self.N < 1 or self.T < 2:
            raise ValueError("need N >= 1 and T >= 2")
        p = self.group_probs
        if len(p) != 3 or min(p) <= 0 or abs(math.fsum(p) - 1.0) > 1e-12:
            raise ValueError("group_probs must be three positive numbers summing to 1")
        if len(self.att) != self.T or self.att[0] != 0:
            raise ValueError("att needs T entries with ATT_1 = 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0 <= self.missing_prob < 1:
            raise ValueError("missing_prob must lie in [0, 1)")
        if self.case == "ife":
            f = self.ife
            if f is None or len(f.alphas) != self.T or len(f.factors) != self.T:
                raise ValueError("ife design needs alphas and factors of length T")
        elif len(self.deltas) != 3 or any(len(d) != self.T - 1 for d in self.deltas):
            raise ValueError("deltas must hold T-1 changes for each of trt, a, b")

    @classmethod
    def case1(cls, N: int = 1000, **kw) -> "DGPConfig":
        """Parallel trends: common changes (1, -2, -1)."""
        d = (1.0, -2.0, -1.0)
        return cls(case="case1", N=N, T=4, deltas=(d, d, d), **kw)

    @classmethod
    def case2(cls, N: int = 1000, **kw) -> "DGPConfig":
        """Partially parallel trends: treated changes bracketed by a and b."""
        return cls(
            case="case2", N=N, T=4,
            deltas=((1.0, -4.0, 1.0), (1.0, -1.0, 1.0), (2.0, -4.0, 1.0)),
            **kw,
        )

    @classmethod
    def from_ife(cls, params: IFEParams, N: int = 1000, att=None, **kw) -> "DGPConfig":
        T = len(params.alphas)
        att = tuple(att) if att is not None else (0.0,) * T
        return cls(case="ife", N=N, T=T, att=att, ife=params, **kw)

    def untreated_means(self) -> np.ndarray:
        """Population E[Y_t^(0) | G], shape (3, T)."""
        return np.array([[float(v) for v in row] for row in self._exact_means()])

    def _exact_means(self) -> list[list[Fraction]]:
        if self.case == "ife":
            f = self.ife
            return [
                [Fraction(f.alphas[t]) + Fraction(f.etas[g]) + Fraction(f.lambdas[g]) * Fraction(f.factors[t])
                 for t in range(self.T)]
                for g in range(3)
            ]
        out = []
        for g in range(3):
            row = [Fraction(self.baseline[g])]
            for d in self.deltas[g]:
                row.append(row[-1] + Fraction(d))
            out.append(row)
        return out


def generate(cfg: DGPConfig, seed: int) -> PanelDataset:
    """Draw one dataset. Randomness comes from the DGP stream of ``seed``."""
    gen = _rng.stream(seed, 0, _rng.DGP)
    N, T = cfg.N, cfg.T
    if cfg.fixed_counts:
        raw = np.array(cfg.group_probs) * N
        counts = np.floor(raw).astype(int)
        for i in np.argsort(-(raw - counts), kind="stable")[: N - counts.sum()]:
            counts[i] += 1
        groups = gen.permutation(np.repeat(np.arange(3), counts))
    else:
        groups = gen.choice(3, size=N, p=cfg.group_probs)
    means = cfg.untreated_means()
    y = means[groups] + np.where(groups[:, None] == 0, np.asarray(cfg.att)[None, :], 0.0)
    if cfg.sigma > 0:
        y = y + cfg.sigma * gen.standard_normal((N, T))
    if cfg.missing_prob > 0:
        observed = gen.random((N, T)) >= cfg.missing_prob
    else:
        observed = np.ones((N, T), dtype=bool)
    width = len(str(N - 1))
    ids = [f"u{i:0{width}d}" for i in range(N)]
    return PanelDataset(ids, y, observed, groups)


def population_taus(cfg: DGPConfig) -> list[tuple[Fraction, Fraction]]:
    """Exact (tau_a(s), tau_b(s)) for s = 2..T from the design's population values."""
    m = cfg._exact_means()
    att = [Fraction(a) for a in cfg.att]
    out = []
    for s in range(1, cfg.T):
        change = [m[g][s] - m[g][s - 1] for g in range(3)]
        treated = change[0] + att[s] - att[s - 1]
        out.append((treated - change[1], treated - change[2]))
    return out


def true_identified_set(cfg: DGPConfig, t: int) -> tuple[float, float]:
    """Population bounds ``[sum_s min tau_s, sum_s max tau_s]`` on ATT_t."""
    if not 2 <= t <= cfg.T:
        raise ValueError(f"t={t} outside 2..{cfg.T}")
    taus = population_taus(cfg)[: t - 1]
    return float(sum(min(p) for p in taus)), float(sum(max(p) for p in taus))


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimulationRow:
    method: str
    t: int
    avg_length: float
    coverage: float  # share of runs whose interval contains ATT_t (same as coverage_param)
    mc_se: float
    coverage_set: float
    coverage_param: float
    runs: int


@dataclass
class SimulationReport:
    case: str
    N: int
    B: int
    alpha: float
    seed: int
    runs_requested: int
    failures: int
    rows: list[SimulationRow] = field(default_factory=list)

    def row(self, method: str, t: int) -> SimulationRow:
        for r in self.rows:
            if r.method == method and r.t == t:
                return r
        raise KeyError((method, t))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = REPORT_SCHEMA
        return d


def _one_run(cfg: DGPConfig, boot: BootstrapConfig, run: int) -> np.ndarray:
    """Per (method, t): length, set-coverage, ATT-coverage. NaN-filled on failure."""
    horizons = range(2, cfg.T + 1)
    out = np.full((len(METHODS), len(horizons), 3), np.nan)
    data_seed, boot_seed = _rng.derive_seeds(boot.seed, run)
    try:
        ds = generate(cfg, data_seed)
        run_boot = replace(boot, seed=boot_seed)
        dists = bootstrap_horizons(ds, run_boot, list(horizons))
        for j, t in enumerate(horizons):
            lo, hi = true_identified_set(cfg, t)
            att = cfg.att[t - 1]
            cis = all_intervals(bounding_sums(ds, t), dists[t], run_boot, ds.N)
            for i, kind in enumerate(METHODS.values()):
                ci = cis[kind]
                out[i, j] = (ci.length, ci.covers(lo, hi), ci.contains(att))
    except BracketError:
        pass
    return out


def _run_chunk(args) -> list[np.ndarray]:
    cfg, boot, runs = args
    return [_one_run(cfg, boot, r) for r in runs]


def _map_runs(cfg, boot, runs: int, jobs: int) -> np.ndarray:
    indices = list(range(runs))
    if jobs <= 1 or runs == 1:
        results = _run_chunk((cfg, boot, indices))
    else:
        chunks = [c.tolist() for c in np.array_split(np.arange(runs), jobs) if c.size]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            results = [r for part in pool.map(_run_chunk, [(cfg, boot, c) for c in chunks])
                       for r in part]
    return np.stack(results)


def monte_carlo(
    cfg: DGPConfig, runs: int, boot: BootstrapConfig | None = None, jobs: int = 1
) -> SimulationReport:
    """Average interval length and coverage of all four intervals at every t.

    ``coverage`` is the share of runs whose interval contains ATT_t;
    ``coverage_set`` is the share containing the whole identified set.

    Run ``i`` draws its data and bootstrap seeds from ``(boot.seed, i)`` only,
    so the report does not depend on ``jobs``.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    boot = boot or BootstrapConfig()
    res = _map_runs(cfg, boot, runs, jobs)  # (runs, methods, horizons, 3)
    ok = ~np.isnan(res[:, 0, 0, 0])
    good = res[ok]
    n_ok = int(ok.sum())
    report = SimulationReport(cfg.case, cfg.N, boot.B, boot.alpha, boot.seed, runs,
                              runs - n_ok)
    for i, method in enumerate(METHODS):
        for j, t in enumerate(range(2, cfg.T + 1)):
            if n_ok:
                length, cov_set, cov_par = (float(v) for v in good[:, i, j].mean(axis=0))
            else:
                length = cov_set = cov_par = math.nan
            cov = cov_par
            se = math.sqrt(cov * (1 - cov) / n_ok) if n_ok else math.nan
            report.rows.append(SimulationRow(method, t, length, cov, se, cov_set, cov_par, n_ok))
    return report


def table1(
    runs: int = 1000, boot: BootstrapConfig | None = None, N: int = 1000, jobs: int = 1
) -> list[SimulationReport]:
    """Both designs of the coverage study, in order case1, case2."""
    return [
        monte_carlo(DGPConfig.case1(N=N), runs, boot, jobs),
        monte_carlo(DGPConfig.case2(N=N), runs, boot, jobs),
    ]


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------

CSV_FIELDS = ("case", "method", "t", "avg_length", "coverage", "mc_se",
              "coverage_set", "coverage_param", "runs", "failures", "N", "B", "alpha", "seed")


def reports_to_json(reports: Sequence[SimulationReport]) -> str:
    return json.dumps(
        {"schema": REPORT_SCHEMA, "reports": [r.to_dict() for r in reports]}, indent=2
    ) + "\n"


def reports_to_csv(reports: Sequence[SimulationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for rep in reports:
        for row in rep.rows:
            w.writerow((rep.case, row.method, row.t, repr(row.avg_length), repr(row.coverage),
                        repr(row.mc_se), repr(row.coverage_set), repr(row.coverage_param),
                        row.runs, rep.failures, rep.N, rep.B, repr(rep.alpha), rep.seed))
    return buf.getvalue()


def reports_to_text(reports: Sequence[SimulationReport]) -> str:
    """Fixed-width table: one line per t, a (length, CP) column pair per method."""
    lines = []
    head = "".join(f"{m:>20}" for m in METHODS)
    sub = "".join(f"{'length':>11}{'CP':>9}" for _ in METHODS)
    for rep in reports:
        lines.append(f"{rep.case}  (N={rep.N}, B={rep.B}, alpha={rep.alpha}, "
                     f"runs={rep.runs_requested}, failures={rep.failures}, seed={rep.seed})")
        lines.append(f"{'':6}{head}")
        lines.append(f"{'':6}{sub}")
        for t in sorted({r.t for r in rep.rows}):
            cells = "".join(
                f"{rep.row(m, t).avg_length:11.3f}{rep.row(m, t).coverage:9.3f}" for m in METHODS
            )
            lines.append(f"t={t:<4}{cells}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Falsification size / power
# ---------------------------------------------------------------------------

def _falsify_chunk(args):
    cfg, boot, t2_star, alpha, se_method, runs = args
    out = []
    for r in runs:
        data_seed, boot_seed = _rng.derive_seeds(boot.seed, r)
        ds = generate(cfg, data_seed)
        res = falsification_test(ds, t2_star, alpha, replace(boot, seed=boot_seed), se_method)
        out.append(res.reject)
    return out


def falsification_study(
    cfg: DGPConfig,
    runs: int,
    t2_star: int = 2,
    boot: BootstrapConfig | None = None,
    alpha: float = 0.05,
    se_method: str = "bootstrap",
    jobs: int = 1,
) -> tuple[float, float]:
    """Rejection rate of the falsification test over ``runs`` datasets, and its MC standard error."""
    boot = boot or BootstrapConfig(alpha=alpha)
    idx = np.arange(runs)
    chunks = [c.tolist() for c in np.array_split(idx, max(1, jobs)) if c.size]
    args = [(cfg, boot, t2_star, alpha, se_method, c) for c in chunks]
    if len(chunks) == 1:
        rejects = _falsify_chunk(args[0])
    else:
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            rejects = [x for part in pool.map(_falsify_chunk, args) for x in part]
    rate = float(np.mean(rejects))
    return rate, math.sqrt(rate * (1 - rate) / runs)
