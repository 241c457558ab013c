import numpy as np
import pytest

from ordcausal.panel import PanelDataset


def build_panel(rows, covariate_names=("x",), n_categories=3, tau=None):
    """Assemble a PanelDataset from (id, time, at_risk, visit, exposure, covs, outcome) rows."""
    ids, times, at_risk, visit, exposure, covs, outcome = [], [], [], [], [], [], []
    for row in rows:
        ids.append(row[0])
        times.append(row[1])
        at_risk.append(row[2])
        visit.append(row[3])
        exposure.append(row[4])
        covs.append(row[5])
        outcome.append(np.nan if row[6] is None else float(row[6]))
    times = np.array(times, dtype=float)
    return PanelDataset(
        subject_ids=np.array(ids, dtype=object),
        times=times,
        at_risk=np.array(at_risk, dtype=bool),
        visit=np.array(visit, dtype=bool),
        exposure=np.array(exposure, dtype=float),
        covariates=np.array(covs, dtype=float).reshape(len(rows), len(covariate_names)),
        covariate_names=tuple(covariate_names),
        outcome=np.array(outcome, dtype=float),
        n_categories=n_categories,
        tau=float(times.max()) if tau is None else float(tau),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
