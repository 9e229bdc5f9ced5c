import numpy as np
import pandas as pd
import pytest

from simulator.experiment import PowerReport, power_eval
from src.core.errors import InvalidInputError
from src.database import ExperimentStore, make_session_factory


@pytest.fixture
def store(database_url):
    session = make_session_factory(database_url)()
    try:
        yield ExperimentStore(session)
    finally:
        session.close()


def test_power_study_round_trip(store, experiment_config, tracker):
    report = power_eval(experiment_config, tracker, runs=3)
    study_id = store.save_power_report(report, label="targeting-on", config={"seed": experiment_config.seed})

    matrix, alpha = store.load_power_matrix(study_id)
    assert alpha == 0.05
    assert list(matrix.columns) == list(report.matrix.columns)
    assert np.allclose(matrix.to_numpy(), report.matrix.to_numpy())

    logs = store.load_unit_logs(study_id)
    assert len(logs) == 3 * experiment_config.sample_size
    assert set(logs["treatment"]) == {"cars", "idle"}

    studies = store.list_studies()
    assert studies[0]["study_id"] == study_id
    assert studies[0]["data_sets"] == 3


def test_missing_p_values_stored_as_null(store):
    matrix = pd.DataFrame({"kw": [0.01, np.nan]}, index=["data set 1", "data set 2"])
    study_id = store.save_power_report(PowerReport(matrix))
    loaded, _ = store.load_power_matrix(study_id)
    assert loaded["kw"].iloc[0] == pytest.approx(0.01)
    assert np.isnan(loaded["kw"].iloc[1])


def test_unknown_study(store):
    with pytest.raises(InvalidInputError, match="Unknown study"):
        store.get_study(999)
