import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from costate.config import ExperimentConfig
from costate.data import generate_cohort, prepare_cohort
from costate.evaluation import (
    IterationTable, MetricsReport, presence_correlation, rank_by_magnitude, run_experiment, run_iteration, write_outputs,
)
from costate.evaluation.experiment import iteration_seeds, summarize
from costate.utils.exceptions import DataError

from .conftest import make_record


@pytest.fixture
def cohort():
    return [make_record(f"P{k:02d}", 30, d=3, seed=k, ih_every=5) for k in range(5)]


@pytest.fixture
def quick_cfg():
    return ExperimentConfig(
        master_seed=11,
        model={"hidden_size": 4, "latent_size": 4},
        train={"n_epochs": 2, "lr": 0.01},
        eval={"n_iterations": 1, "tsne_perplexity": 3.0, "tsne_iters": 60, "tsne_max_points": 30},
    )


def test_single_iteration_aggregate(cohort, quick_cfg):
    result = run_experiment(cohort, quick_cfg)
    report = result.report
    assert len(report.iterations) == 1
    row = report.iterations[0]
    assert not row.skipped
    assert len(row.train_ids) == 4 and len(row.test_ids) == 1
    assert report.aggregate["auc"].mean == row.mean_auc
    assert report.aggregate["ap"].mean == row.mean_ap
    assert report.aggregate["auc"].std == 0.0
    assert result.projection is not None
    assert result.projection.Z.shape == (30, 4)


def test_report_is_reproducible_and_parallel_safe(cohort, quick_cfg):
    cfg = quick_cfg.model_copy(update={"eval": quick_cfg.eval.model_copy(update={"n_iterations": 3})})
    serial = run_experiment(cohort, cfg, jobs=1).report.to_json()
    assert run_experiment(cohort, cfg, jobs=1).report.to_json() == serial
    assert run_experiment(cohort, cfg, jobs=3).report.to_json() == serial


def test_iteration_seeds():
    split_seed, train_seed = iteration_seeds(7, 3)
    assert split_seed == 10
    assert train_seed == int(np.random.SeedSequence([7, 3]).generate_state(1)[0])
    assert iteration_seeds(7, 4)[1] != train_seed


def test_iteration_records_split(cohort, quick_cfg):
    result, projection = run_iteration(cohort, quick_cfg, 2)
    assert result.split_seed == quick_cfg.master_seed + 2
    assert sorted(result.train_ids + result.test_ids) == [r.patient_id for r in cohort]
    assert projection is None
    assert sum(result.confusion.values()) == 30


def test_needs_five_patients(cohort, quick_cfg):
    with pytest.raises(DataError, match="至少需要 5"):
        run_experiment(cohort[:4], quick_cfg)


def test_population_std():
    summary = summarize([1.0, 3.0, None])
    assert summary.mean == 2.0
    assert summary.std == 1.0
    assert summary.n == 2
    assert summarize([None]).mean is None


def test_presence_correlation_examples():
    table = IterationTable.from_arrays([0.2, 0.8], np.array([[0], [1]]), ["A"])
    assert presence_correlation(table)["A"] == pytest.approx(1.0)
    table = IterationTable.from_arrays([0.2, 0.8], np.array([[1], [0]]), ["A"])
    assert presence_correlation(table)["A"] == pytest.approx(-1.0)


def test_constant_presence_is_undefined():
    table = IterationTable.from_arrays([0.2, 0.5, 0.8], np.array([[1, 0], [1, 1], [1, 0]]), ["A", "B"])
    correlations = presence_correlation(table)
    assert correlations["A"] is None
    assert rank_by_magnitude(correlations) == [("B", pytest.approx(correlations["B"]))]


def test_presence_correlation_matches_formula():
    rng = np.random.Generator(np.random.PCG64(10))
    membership = rng.integers(0, 2, size=(20, 10))
    membership[0], membership[1] = 0, 1
    ap = rng.uniform(0.3, 0.9, size=20)
    ids = [f"P{k}" for k in range(10)]
    correlations = presence_correlation(IterationTable.from_arrays(ap, membership, ids))
    for k, pid in enumerate(ids):
        x, y = membership[:, k].astype(float), ap
        expected = ((x - x.mean()) * (y - y.mean())).sum() / np.sqrt(((x - x.mean()) ** 2).sum() * ((y - y.mean()) ** 2).sum())
        assert correlations[pid] == pytest.approx(expected, abs=1e-12)


def test_planted_dependence_is_recovered():
    rng = np.random.Generator(np.random.PCG64(11))
    membership = rng.integers(0, 2, size=(20, 10))
    membership[:10, 6], membership[10:, 6] = 0, 1
    ap = 0.5 + 0.3 * membership[:, 6] + 0.02 * rng.normal(size=20)
    correlations = presence_correlation(IterationTable.from_arrays(ap, membership, [f"P{k}" for k in range(10)]))
    assert rank_by_magnitude(correlations)[0][0] == "P6"
    assert all(-1.0 <= r <= 1.0 for r in correlations.values() if r is not None)


def test_membership_must_be_binary():
    with pytest.raises(DataError):
        IterationTable.from_arrays([0.1], np.array([[2]]), ["A"])


def test_iteration_table_csv(tmp_path):
    table = IterationTable.from_arrays([0.25, np.nan, 0.75], np.array([[1, 0], [0, 1], [1, 1]]), ["A", "B"])
    path = table.to_csv(tmp_path / "iteration_table.csv")
    assert path.read_text(encoding="utf-8").splitlines()[0] == "iteration,mean_ap,patient_A,patient_B"
    loaded = IterationTable.from_csv(path)
    pd.testing.assert_frame_equal(loaded.frame, table.frame, check_dtype=False)
    assert loaded.patient_ids == ["A", "B"]
    assert presence_correlation(loaded)["A"] is None


def test_report_round_trip_and_validation(tmp_path, cohort, quick_cfg):
    report = run_experiment(cohort, quick_cfg).report
    loaded = MetricsReport.load(report.save(tmp_path / "metrics_report.json"))
    assert loaded.to_json() == report.to_json()

    tampered = report.model_dump(mode="json")
    tampered["aggregate"]["auc"]["mean"] = 0.123
    with pytest.raises(ValidationError):
        MetricsReport.model_validate(tampered)
    with pytest.raises(DataError):
        MetricsReport.load(tmp_path / "missing.json")


def test_write_outputs(tmp_path, cohort, quick_cfg):
    result = run_experiment(cohort, quick_cfg)
    names = sorted(p.name for p in write_outputs(result, quick_cfg, tmp_path))
    assert names == ["correlations.svg", "iteration_table.csv", "metrics_report.json", "tsne_costate.svg"]


@pytest.mark.slow
def test_default_synthetic_cohort_clears_floor():
    cfg = ExperimentConfig()
    records = prepare_cohort(generate_cohort(cfg.data), cfg.preprocess)
    report = run_experiment(records, cfg).report
    assert len(report.iterations) == 20
    assert report.aggregate["auc"].mean >= 0.80
    assert report.aggregate["ap"].mean >= 0.65
