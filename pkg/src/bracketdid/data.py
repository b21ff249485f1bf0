"""Panel / repeated cross-section data with missingness and three group labels.

Outcomes are held as an ``(N, T)`` array with a matching boolean ``observed``
mask. Units are kept in canonical order (sorted by ``unit_id``) so that the
bootstrap indexes into the same list no matter how the input was ordered.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import IO, Iterable, Sequence

import numpy as np

from .exceptions import DataFormatError

__all__ = [
    "GroupLabel",
    "GROUPS",
    "Observation",
    "PanelDataset",
    "ValidationReport",
    "load_long_csv",
    "read_long_csv",
    "dump_long_csv",
    "validate",
]

TREATMENT_TIME = 2
HEADER = ("unit_id", "group", "time", "outcome")


class GroupLabel(str, Enum):
    TREATED = "trt"
    CONTROL_A = "a"
    CONTROL_B = "b"

    @property
    def code(self) -> int:
        return _CODES[self]

    @classmethod
    def parse(cls, token: str) -> "GroupLabel":
        try:
            return cls(token)
        except ValueError:
            raise DataFormatError(f"unknown group token {token!r} (expected trt, a or b)") from None

    def __str__(self) -> str:
        return self.value


GROUPS = (GroupLabel.TREATED, GroupLabel.CONTROL_A, GroupLabel.CONTROL_B)
_CODES = {g: i for i, g in enumerate(GROUPS)}


@dataclass(frozen=True)
class Observation:
    """One unit: outcome vector, observation mask and group label."""

    unit_id: str
    outcomes: tuple[float, ...]
    observed: tuple[bool, ...]
    group: GroupLabel

    def __post_init__(self):
        if len(self.outcomes) != len(self.observed):
            raise DataFormatError(
                f"unit {self.unit_id}: outcomes and observed have different lengths"
            )
        if len(self.outcomes) < 2:
            raise DataFormatError(f"unit {self.unit_id}: need at least 2 time periods")


class PanelDataset:
    """Immutable collection of units observed over periods ``1..T``.

    Parameters
    ----------
    unit_ids : sequence of str
    outcomes : array_like, shape (N, T)
        Values in unobserved slots are ignored and stored as 0.
    observed : array_like of bool, shape (N, T)
    groups : sequence of GroupLabel or int codes, length N
    treatment_time : int
        First post-treatment period. Fixed at 2.
    """

    def __init__(
        self,
        unit_ids: Sequence[str],
        outcomes,
        observed,
        groups: Sequence,
        treatment_time: int = TREATMENT_TIME,
    ):
        if treatment_time != TREATMENT_TIME:
            raise DataFormatError("treatment_time must be 2; re-index periods at ingestion")
        y = np.array(outcomes, dtype=float, ndmin=2)
        r = np.array(observed, dtype=bool, ndmin=2)
        ids = [str(u) for u in unit_ids]
        codes = np.array(
            [g.code if isinstance(g, GroupLabel) else int(g) for g in groups], dtype=np.int8
        )
        n = len(ids)
        if n < 1:
            raise DataFormatError("no observations")
        if y.shape != r.shape or y.shape[0] != n or codes.shape != (n,):
            raise DataFormatError(
                f"inconsistent shapes: ids={n}, outcomes={y.shape}, observed={r.shape}, "
                f"groups={codes.shape}"
            )
        if y.shape[1] < 2:
            raise DataFormatError("need at least 2 time periods (T >= 2)")
        if np.any((codes < 0) | (codes > 2)):
            raise DataFormatError("group codes must be 0 (trt), 1 (a) or 2 (b)")
        if len(set(ids)) != n:
            raise DataFormatError("duplicate unit_id")
        y = np.where(r, y, 0.0)
        if not np.all(np.isfinite(y)):
            raise DataFormatError("observed outcomes must be finite")

        order = sorted(range(n), key=ids.__getitem__)
        if order != list(range(n)):
            idx = np.asarray(order)
            ids = [ids[i] for i in order]
            y, r, codes = y[idx], r[idx], codes[idx]
        for arr in (y, r, codes):
            arr.setflags(write=False)
        self._unit_ids = tuple(ids)
        self._y = y
        self._r = r
        self._g = codes
        self.treatment_time = treatment_time

    @classmethod
    def from_observations(cls, observations: Iterable[Observation]) -> "PanelDataset":
        obs = list(observations)
        if not obs:
            raise DataFormatError("no observations")
        lengths = {len(o.outcomes) for o in obs}
        if len(lengths) != 1:
            raise DataFormatError("all observations must share the same number of periods")
        return cls(
            [o.unit_id for o in obs],
            [[v if ok else 0.0 for v, ok in zip(o.outcomes, o.observed)] for o in obs],
            [o.observed for o in obs],
            [o.group for o in obs],
        )

    # --- array views (read-only) ---
    @property
    def unit_ids(self) -> tuple[str, ...]:
        return self._unit_ids

    @property
    def outcomes(self) -> np.ndarray:
        return self._y

    @property
    def observed(self) -> np.ndarray:
        return self._r

    @property
    def group_codes(self) -> np.ndarray:
        return self._g

    @property
    def N(self) -> int:
        return self._y.shape[0]

    @property
    def T(self) -> int:
        return self._y.shape[1]

    @cached_property
    def observations(self) -> tuple[Observation, ...]:
        return tuple(
            Observation(
                uid,
                tuple(float(v) if ok else math.nan for v, ok in zip(row, mask)),
                tuple(bool(ok) for ok in mask),
                GROUPS[code],
            )
            for uid, row, mask, code in zip(self._unit_ids, self._y, self._r, self._g)
        )

    @cached_property
    def cell_counts(self) -> np.ndarray:
        """Observed-outcome counts, shape (3, T), rows ordered trt, a, b."""
        counts = np.zeros((3, self.T), dtype=np.int64)
        for code in range(3):
            counts[code] = self._r[self._g == code].sum(axis=0)
        counts.setflags(write=False)
        return counts

    def __len__(self) -> int:
        return self.N

    def __eq__(self, other) -> bool:
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return (
            self._unit_ids == other._unit_ids
            and self.treatment_time == other.treatment_time
            and np.array_equal(self._r, other._r)
            and np.array_equal(self._g, other._g)
            and np.array_equal(self._y, other._y)
        )

    __hash__ = None

    def __repr__(self) -> str:
        n_g = np.bincount(self._g, minlength=3)
        return (
            f"PanelDataset(N={self.N}, T={self.T}, trt={n_g[0]}, a={n_g[1]}, b={n_g[2]})"
        )


# ---------------------------------------------------------------------------
# Long CSV I/O
# ---------------------------------------------------------------------------

def _parse_outcome(token: str, lineno: int) -> float | None:
    token = token.strip()
    if token == "NA":
        return None
    if "_" in token:
        # float() accepts digit separators such as 1_000; plain CSV numbers do not
        raise DataFormatError(f"line {lineno}: non-numeric outcome {token!r}")
    try:
        value = float(token)
    except ValueError:
        raise DataFormatError(f"line {lineno}: non-numeric outcome {token!r}") from None
    if not math.isfinite(value):
        raise DataFormatError(f"line {lineno}: non-finite outcome {token!r}; use NA for missing")
    return value


def load_long_csv(source: IO[bytes] | IO[str]) -> PanelDataset:
    """Read a long-format CSV with header ``unit_id,group,time,outcome``.

    Absent ``(unit, time)`` rows and ``NA`` outcomes both mark the slot as
    unobserved. ``T`` is the largest time value present.

    Raises
    ------
    DataFormatError
        Bad header, duplicate ``(unit_id, time)``, unknown group token,
        a unit carrying two different groups, a non-numeric outcome, or an
        empty body.
    """
    raw = source.read()
    if isinstance(raw, bytes):
        try:
            text = raw.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise DataFormatError(f"input is not valid UTF-8: {exc}") from None
    else:
        text = raw.lstrip("\ufeff")

    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != HEADER:
        raise DataFormatError(f"expected header {','.join(HEADER)!r}, got {header!r}")

    groups: dict[str, GroupLabel] = {}
    cells: dict[tuple[str, int], float | None] = {}
    max_time = 0
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise DataFormatError(f"line {lineno}: expected 4 fields, got {len(row)}")
        uid, gtok, ttok, ytok = (f.strip() for f in row)
        if not uid:
            raise DataFormatError(f"line {lineno}: empty unit_id")
        group = GroupLabel.parse(gtok)
        if groups.setdefault(uid, group) is not group:
            raise DataFormatError(
                f"line {lineno}: unit {uid!r} has groups {groups[uid].value!r} and {group.value!r}"
            )
        try:
            time = int(ttok)
        except ValueError:
            raise DataFormatError(f"line {lineno}: time {ttok!r} is not an integer") from None
        if time < 1:
            raise DataFormatError(f"line {lineno}: time must be >= 1, got {time}")
        if (uid, time) in cells:
            raise DataFormatError(f"line {lineno}: duplicate row for unit {uid!r} at time {time}")
        cells[(uid, time)] = _parse_outcome(ytok, lineno)
        max_time = max(max_time, time)

    if not groups:
        raise DataFormatError("no observations")
    if max_time < 2:
        raise DataFormatError("need at least 2 time periods (T >= 2)")

    ids = list(groups)
    pos = {u: i for i, u in enumerate(ids)}
    y = np.zeros((len(ids), max_time))
    r = np.zeros((len(ids), max_time), dtype=bool)
    for (uid, time), value in cells.items():
        if value is not None:
            y[pos[uid], time - 1] = value
            r[pos[uid], time - 1] = True
    return PanelDataset(ids, y, r, [groups[u] for u in ids])


def read_long_csv(path) -> PanelDataset:
    with open(path, "rb") as fh:
        return load_long_csv(fh)


def dump_long_csv(ds: PanelDataset, stream: IO[str]) -> None:
    """Write ``ds`` in long format; unobserved slots are written as ``NA``."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(HEADER)
    for uid, row, mask, code in zip(ds.unit_ids, ds.outcomes, ds.observed, ds.group_codes):
        g = GROUPS[code].value
        for t, (value, ok) in enumerate(zip(row, mask), start=1):
            writer.writerow((uid, g, t, repr(float(value)) if ok else "NA"))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    T: int
    counts: dict[tuple[GroupLabel, int], int]
    flags: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flags

    def zero_cells(self) -> list[tuple[GroupLabel, int]]:
        return [cell for cell, n in self.counts.items() if n == 0]


def validate(ds: PanelDataset) -> ValidationReport:
    """Per-(group, time) observed counts; flags empty cells and T < 2."""
    counts = {
        (g, t): int(ds.cell_counts[g.code, t - 1]) for g in GROUPS for t in range(1, ds.T + 1)
    }
    flags = []
    if ds.T < 2:
        flags.append(f"T={ds.T} < 2")
    for (g, t), n in counts.items():
        if n == 0:
            flags.append(f"group {g.value} unobserved at t={t}")
    return ValidationReport(ds.T, counts, flags)
