"""Long-format longitudinal data model shared by all estimators.

A dataset holds one row per subject-time: an at-risk flag, a visit flag, the
continuous exposure, named covariates, and an optional ordinal outcome that is
only meaningful at visit rows. Storage is columnar (numpy arrays) with records
grouped by subject; datasets are immutable after construction and safe to
share across parallel workers.

CSV contract: UTF-8 with a header row. Default column names are ``id``,
``time``, ``at_risk``, ``visit``, ``exposure``, ``outcome``; every remaining
column is treated as a covariate. Booleans are encoded 0/1 and a missing
outcome is an empty field. Covariates must be complete; there is no
imputation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
import pandas as pd

from .errors import DomainError, OrderingError, ParseError

ROLE_COLUMNS = ("id", "time", "at_risk", "visit", "exposure", "outcome")


@dataclass(frozen=True)
class PanelRecord:
    subject_id: object
    time: float
    at_risk: bool
    visit: bool
    exposure: float
    covariates: dict
    outcome: int | None


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Columnar panel: records grouped by subject, sorted by time within subject.

    ``outcome`` uses NaN for absent values. ``meta`` carries producer
    annotations (e.g. the simulator's intensity clamp rate) and does not take
    part in equality.
    """

    subject_ids: np.ndarray
    times: np.ndarray
    at_risk: np.ndarray
    visit: np.ndarray
    exposure: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple
    outcome: np.ndarray
    n_categories: int
    tau: float
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = self.subject_ids.shape[0]
        for name in ("times", "at_risk", "visit", "exposure", "outcome"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"column '{name}' length does not match subject_ids")
        if self.covariates.shape != (n, len(self.covariate_names)):
            raise ValueError("covariate matrix shape does not match covariate names")
        if self.n_categories < 2:
            raise ValueError("n_categories must be at least 2")
        starts = _block_starts(self.subject_ids)
        block_ids = self.subject_ids[starts]
        if len(set(block_ids.tolist())) != starts.size:
            raise ValueError("records of one subject must form a single contiguous block")
        object.__setattr__(self, "_starts", starts)

    @property
    def n_records(self) -> int:
        return self.subject_ids.shape[0]

    @property
    def n_subjects(self) -> int:
        return self._starts.size

    def subject_slices(self) -> list:
        """(subject_id, slice) pairs in storage order."""
        bounds = np.append(self._starts, self.n_records)
        return [
            (self.subject_ids[bounds[k]], slice(int(bounds[k]), int(bounds[k + 1])))
            for k in range(self.n_subjects)
        ]

    def visits_per_subject(self) -> np.ndarray:
        if self.n_subjects == 0:
            return np.array([], dtype=int)
        return np.add.reduceat(self.visit.astype(int), self._starts)

    def covariate_column(self, name: str) -> np.ndarray:
        try:
            idx = self.covariate_names.index(name)
        except ValueError:
            raise KeyError(f"unknown covariate {name!r}") from None
        return self.covariates[:, idx]

    def iter_records(self) -> Iterator[PanelRecord]:
        for i in range(self.n_records):
            out = self.outcome[i]
            yield PanelRecord(
                subject_id=self.subject_ids[i],
                time=float(self.times[i]),
                at_risk=bool(self.at_risk[i]),
                visit=bool(self.visit[i]),
                exposure=float(self.exposure[i]),
                covariates={n: float(v) for n, v in zip(self.covariate_names, self.covariates[i])},
                outcome=None if np.isnan(out) else int(out),
            )

    @property
    def records(self) -> list:
        return list(self.iter_records())

    def __eq__(self, other) -> bool:
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return (
            self.covariate_names == other.covariate_names
            and self.n_categories == other.n_categories
            and self.tau == other.tau
            and np.array_equal(self.subject_ids, other.subject_ids)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.at_risk, other.at_risk)
            and np.array_equal(self.visit, other.visit)
            and np.array_equal(self.exposure, other.exposure)
            and np.array_equal(self.covariates, other.covariates)
            and np.array_equal(self.outcome, other.outcome, equal_nan=True)
        )


def _block_starts(ids: np.ndarray) -> np.ndarray:
    if ids.shape[0] == 0:
        return np.array([], dtype=int)
    change = np.empty(ids.shape[0], dtype=bool)
    change[0] = True
    change[1:] = ids[1:] != ids[:-1]
    return np.flatnonzero(change)


def _parse_float_column(values: np.ndarray, column: str) -> np.ndarray:
    try:
        return values.astype(float)
    except ValueError:
        for i, v in enumerate(values):
            try:
                float(v)
            except ValueError:
                raise ParseError(f"row {i + 2}, column {column!r}: not numeric: {v!r}") from None
        raise  # pragma: no cover - unreachable


def _parse_flag_column(values: np.ndarray, column: str) -> np.ndarray:
    floats = _parse_float_column(values, column)
    bad = ~np.isin(floats, (0.0, 1.0))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ParseError(f"row {i + 2}, column {column!r}: expected 0 or 1, got {values[i]!r}")
    return floats.astype(bool)


def load_csv(
    path,
    schema: dict | None = None,
    n_categories: int | None = None,
    tau: float | None = None,
) -> PanelDataset:
    """Load a long-format panel CSV.

    ``schema`` maps role names (``id``, ``time``, ...) to the file's column
    names when they differ from the defaults. Rows of one subject need not be
    contiguous in the file (they are regrouped in first-appearance order) but
    their times must be strictly increasing in file order.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    mapping = {role: role for role in ROLE_COLUMNS}
    if schema:
        unknown = set(schema) - set(ROLE_COLUMNS)
        if unknown:
            raise ParseError(f"schema maps unknown roles: {sorted(unknown)}")
        mapping.update(schema)
    missing = [col for col in mapping.values() if col not in frame.columns]
    if missing:
        raise ParseError(f"missing required columns: {missing}")

    ids_raw = frame[mapping["id"]].to_numpy()
    times = _parse_float_column(frame[mapping["time"]].to_numpy(), mapping["time"])
    at_risk = _parse_flag_column(frame[mapping["at_risk"]].to_numpy(), mapping["at_risk"])
    visit = _parse_flag_column(frame[mapping["visit"]].to_numpy(), mapping["visit"])
    exposure = _parse_float_column(frame[mapping["exposure"]].to_numpy(), mapping["exposure"])

    outcome_raw = frame[mapping["outcome"]].to_numpy()
    outcome = np.full(len(frame), np.nan)
    present = np.array([v.strip() != "" for v in outcome_raw])
    if np.any(present):
        vals = _parse_float_column(outcome_raw[present], mapping["outcome"])
        if np.any(vals != np.round(vals)):
            i = int(np.flatnonzero(present)[int(np.flatnonzero(vals != np.round(vals))[0])])
            raise DomainError(f"row {i + 2}: outcome {outcome_raw[i]!r} is not an integer category")
        outcome[present] = vals

    covariate_cols = [c for c in frame.columns if c not in mapping.values()]
    covariates = np.column_stack(
        [_parse_float_column(frame[c].to_numpy(), c) for c in covariate_cols]
    ) if covariate_cols else np.empty((len(frame), 0))

    observed = outcome[~np.isnan(outcome)]
    if n_categories is None:
        if observed.size == 0:
            raise DomainError("n_categories not given and no outcomes observed")
        n_cat = int(observed.max())
        n_cat = max(n_cat, 2)
    else:
        n_cat = int(n_categories)
    if observed.size and (observed.min() < 1 or observed.max() > n_cat):
        raise DomainError(
            f"outcome values must lie in 1..{n_cat}; found {int(observed.min())}..{int(observed.max())}"
        )

    # regroup by first appearance, keeping file order within subject
    order_of = {}
    for sid in ids_raw:
        if sid not in order_of:
            order_of[sid] = len(order_of)
    order = np.argsort([order_of[sid] for sid in ids_raw], kind="stable")
    reordered_ids = ids_raw[order]
    reordered_times = times[order]
    starts = _block_starts(reordered_ids)
    bounds = np.append(starts, len(reordered_ids))
    for k in range(starts.size):
        block = reordered_times[bounds[k] : bounds[k + 1]]
        if np.any(np.diff(block) <= 0):
            raise OrderingError(
                f"subject {reordered_ids[bounds[k]]!r}: times not strictly increasing"
            )

    return PanelDataset(
        subject_ids=reordered_ids,
        times=reordered_times,
        at_risk=at_risk[order],
        visit=visit[order],
        exposure=exposure[order],
        covariates=covariates[order],
        covariate_names=tuple(covariate_cols),
        outcome=outcome[order],
        n_categories=n_cat,
        tau=float(tau) if tau is not None else float(times.max()) if len(frame) else 0.0,
    )


def to_csv(data: PanelDataset, path) -> None:
    """Write a dataset back to CSV; floats carry 17 significant digits so a
    reload reproduces the records exactly."""
    columns = {
        "id": data.subject_ids,
        "time": [f"{t:.17g}" for t in data.times],
        "at_risk": data.at_risk.astype(int),
        "visit": data.visit.astype(int),
        "exposure": [f"{v:.17g}" for v in data.exposure],
        "outcome": ["" if np.isnan(v) else str(int(v)) for v in data.outcome],
    }
    for k, name in enumerate(data.covariate_names):
        columns[name] = [f"{v:.17g}" for v in data.covariates[:, k]]
    pd.DataFrame(columns).to_csv(path, index=False)


def visit_records(data: PanelDataset) -> PanelDataset:
    """Subset to rows with a visit and an observed outcome (estimation rows)."""
    mask = data.visit & ~np.isnan(data.outcome)
    return PanelDataset(
        subject_ids=data.subject_ids[mask],
        times=data.times[mask],
        at_risk=data.at_risk[mask],
        visit=data.visit[mask],
        exposure=data.exposure[mask],
        covariates=data.covariates[mask],
        covariate_names=data.covariate_names,
        outcome=data.outcome[mask],
        n_categories=data.n_categories,
        tau=data.tau,
    )


def validate(data: PanelDataset) -> list:
    """Check dataset invariants; returns violation messages (empty = valid)."""
    report: list[str] = []
    for sid, sl in data.subject_slices():
        block = data.times[sl]
        bad = np.flatnonzero(np.diff(block) <= 0)
        for i in bad:
            report.append(
                f"ordering: subject {sid!r} times not strictly increasing at t={block[i + 1]:g}"
            )
    visit_no_risk = data.visit & ~data.at_risk
    for i in np.flatnonzero(visit_no_risk):
        report.append(
            f"consistency: subject {data.subject_ids[i]!r} has a visit while not at risk "
            f"at t={data.times[i]:g}"
        )
    outcome_no_visit = ~np.isnan(data.outcome) & ~data.visit
    for i in np.flatnonzero(outcome_no_visit):
        report.append(
            f"consistency: subject {data.subject_ids[i]!r} has an outcome at a non-visit "
            f"record at t={data.times[i]:g}"
        )
    observed = data.outcome[~np.isnan(data.outcome)]
    if observed.size:
        out_of_range = (observed < 1) | (observed > data.n_categories) | (observed != np.round(observed))
        if np.any(out_of_range):
            report.append(
                f"domain: {int(np.sum(out_of_range))} outcome value(s) outside 1..{data.n_categories}"
            )
    if np.any(data.times < 0) or np.any(data.times > data.tau):
        report.append("domain: record times fall outside [0, tau]")
    if data.covariates.size and not np.all(np.isfinite(data.covariates)):
        report.append("domain: non-finite covariate values present")
    if not np.all(np.isfinite(data.exposure)):
        report.append("domain: non-finite exposure values present")
    return report
