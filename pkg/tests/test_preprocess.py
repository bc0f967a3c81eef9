import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from costate.config import GeneratorSpec, PreprocessConfig
from costate.data import (
    SplitPlan, build_patient_record, filter_artifacts, generate_cohort, label_ih, load_archive, prepare_cohort,
    prepare_record, run_lengths, save_archive, select_by_coverage, split_cohort, standardize,
)
from costate.utils.exceptions import ConfigError, CoverageError, DataError, EmptyRecordingError, InsufficientDataError

from .conftest import make_raw


def test_filter_identity_when_clean():
    rec = make_raw("P", np.arange(10.0))
    out = filter_artifacts(rec)
    np.testing.assert_array_equal(out.channels["ICPm"], rec.channels["ICPm"])


def test_filter_drops_flagged_rows():
    artifact = np.zeros(10, dtype=bool)
    artifact[[1, 4, 8]] = True
    out = filter_artifacts(make_raw("P", np.arange(10.0), artifact))
    assert out.length == 7
    np.testing.assert_array_equal(out.channels["ICPm"], [0, 2, 3, 5, 6, 7, 9])
    assert not out.artifact_mask.any()


def test_filter_all_artifacts():
    with pytest.raises(EmptyRecordingError):
        filter_artifacts(make_raw("P", np.arange(5.0), np.ones(5, dtype=bool)))


def test_filtered_lengths_match_counting_oracle():
    cohort = generate_cohort(GeneratorSpec(seed=3, n_patients=4, length_range=(200, 300), artifact_fraction=0.1))
    for rec in cohort:
        assert filter_artifacts(rec).length == int((~rec.artifact_mask).sum())


def test_label_exact_run_of_48():
    icp = np.concatenate([np.full(20, 10.0), np.full(48, 16.0), np.full(20, 10.0)])
    y = label_ih(icp)
    assert (y[20:68] == 1).all()
    assert (y[:20] == -1).all() and (y[68:] == -1).all()


def test_label_run_of_47_is_negative():
    icp = np.concatenate([np.full(5, 10.0), np.full(47, 16.0), np.full(5, 10.0)])
    assert (label_ih(icp) == -1).all()


def test_label_threshold_is_strict():
    assert (label_ih(np.full(100, 15.0)) == -1).all()


def test_label_rejects_bad_parameters():
    with pytest.raises(ConfigError):
        label_ih(np.ones(5), threshold=0.0)
    with pytest.raises(ConfigError):
        label_ih(np.ones(5), min_duration=0)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(0.0, 30.0)), st.integers(1, 60))
def test_label_runs_property(icp, min_duration):
    y = label_ih(icp, 15.0, min_duration)
    positive = y == 1
    assert not (positive & (icp <= 15.0)).any()
    for start, length in run_lengths(icp > 15.0):
        segment = positive[start:start + length]
        assert segment.all() if length >= min_duration else not segment.any()


def test_standardize_reference_values():
    np.testing.assert_allclose(standardize([1, 2, 3, 4, 5]), [-1.0, -0.5, 0.0, 0.5, 1.0], atol=1e-15)


def test_standardize_constant_series():
    np.testing.assert_array_equal(standardize([5, 5, 5, 5]), [0, 0, 0, 0])


def test_standardize_too_short():
    with pytest.raises(InsufficientDataError):
        standardize([1.0, 2.0, 3.0])


def test_standardize_matches_two_pass_oracle():
    x = np.random.Generator(np.random.PCG64(11)).normal(5.0, 3.0, size=257)
    ordered = np.sort(x)

    def quantile(q):
        pos = q * (len(ordered) - 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, len(ordered) - 1)
        return ordered[lo] + (pos - lo) * (ordered[hi] - ordered[lo])

    mean = sum(x) / len(x)
    expected = (x - mean) / (quantile(0.75) - quantile(0.25))
    np.testing.assert_allclose(standardize(x), expected, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(4, 100), elements=st.integers(-1000, 1000).map(float)))
def test_standardized_mean_is_zero(x):
    z = standardize(x)
    assert abs(z.mean()) <= 1e-9 * max(1.0, float(np.abs(z).max()))


def test_record_has_six_features_and_raw_unit_labels():
    icp = np.concatenate([np.full(30, 8.0), np.full(50, 20.0), np.full(30, 8.0)])
    record = build_patient_record(make_raw("P", icp, age=9.0))
    assert record.D == 6
    assert record.channel_names == ["ICPm", "BPm", "BPs", "BPd", "HRT", "age"]
    np.testing.assert_allclose(record.X[:, 5], 9.0 / 18.0)
    assert (record.y[30:80] == 1).all() and record.y.sum() == 50 - 60
    # 标准化后的 ICPm 不会超过 15，标签必须来自原始 mmHg
    assert (record.X[:, 0] < 15.0).all()


def test_quiet_recording_all_negative():
    assert (build_patient_record(make_raw("P", np.full(60, 9.0))).y == -1).all()


def test_label_timing_flag():
    icp = np.concatenate([np.full(10, 8.0), np.full(60, 20.0), np.full(10, 8.0)])
    artifact = np.zeros(80, dtype=bool)
    artifact[30:33] = True
    icp_with_dropout = icp.copy()
    icp_with_dropout[30:33] = 1.0
    rec = make_raw("P", icp_with_dropout, artifact)
    after = prepare_record(rec, PreprocessConfig(label_after_filter=True))
    before = prepare_record(rec, PreprocessConfig(label_after_filter=False))
    assert after.N == before.N == 77
    # 原始序列上掉线把高压段切成 20 + 37，过滤后重新连成 57
    assert (after.y == 1).sum() == 57
    assert (before.y == 1).sum() == 0


def with_missing(patient_id: str, fraction: float):
    icp = np.full(100, 9.0)
    rec = make_raw(patient_id, icp)
    rec.channels["BPm"][: int(fraction * 100)] = np.nan
    return rec


def test_coverage_selection():
    kept = select_by_coverage([with_missing("A", 0.4), with_missing("B", 0.6)], min_fraction=0.5)
    assert [r.patient_id for r in kept] == ["A"]
    assert not np.isnan(kept[0].channels["BPm"]).any()


def test_coverage_empty_result():
    with pytest.raises(CoverageError, match="min_coverage"):
        select_by_coverage([with_missing("B", 0.6)], min_fraction=0.5)


def test_coverage_matches_counting_oracle():
    cohort = generate_cohort(GeneratorSpec(seed=9, n_patients=6, length_range=(200, 300), missing_fraction=0.45))
    expected = [
        r.patient_id for r in cohort
        if min(np.mean(~np.isnan(r.channels[c])) for c in ("ICPm", "BPm", "BPs", "BPd", "HRT")) >= 0.5
    ]
    if not expected:
        with pytest.raises(CoverageError):
            select_by_coverage(cohort, 0.5)
    else:
        assert [r.patient_id for r in select_by_coverage(cohort, 0.5)] == expected


def test_split_sizes():
    ids = [f"P{k}" for k in range(10)]
    plan = split_cohort(ids, seed=1)
    assert (len(plan.train_ids), len(plan.test_ids)) == (8, 2)
    plan = split_cohort([f"P{k}" for k in range(84)], seed=1)
    assert (len(plan.train_ids), len(plan.test_ids)) == (67, 17)


def test_split_deterministic():
    ids = [f"P{k}" for k in range(20)]
    assert split_cohort(ids, seed=5) == split_cohort(ids, seed=5)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_split_partitions_and_keeps_order(n, seed, fraction):
    ids = [f"P{k:03d}" for k in range(n)]
    plan = split_cohort(ids, seed=seed, train_fraction=fraction)
    assert sorted(plan.train_ids + plan.test_ids) == ids
    assert plan.train_ids == sorted(plan.train_ids)
    assert plan.test_ids == sorted(plan.test_ids)
    assert len(plan.train_ids) == int(np.floor(fraction * n + 0.5))


def test_split_needs_two_patients():
    with pytest.raises(DataError):
        split_cohort(["P0"], seed=0)


def test_split_plan_file(tmp_path):
    plan = split_cohort([f"P{k}" for k in range(6)], seed=2, train_fraction=0.5)
    plan.save(tmp_path / "split.json")
    loaded = SplitPlan.load(tmp_path / "split.json")
    assert loaded == plan
    assert loaded.train_fraction == 0.5


def test_split_plan_without_fraction_is_rejected(tmp_path):
    path = tmp_path / "split.json"
    path.write_text('{"seed": 1, "train": ["P0"], "test": ["P1"]}', encoding="utf-8")
    with pytest.raises(DataError, match="train_fraction"):
        SplitPlan.load(path)


def test_prepare_cohort_and_archive(tmp_path):
    cohort = generate_cohort(GeneratorSpec(seed=7, n_patients=3, length_range=(150, 200)))
    records = prepare_cohort(cohort)
    save_archive(records, tmp_path / "records.npz")
    loaded = load_archive(tmp_path / "records.npz")
    assert [r.patient_id for r in loaded] == [r.patient_id for r in records]
    for a, b in zip(records, loaded):
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.y, b.y)


def test_missing_archive(tmp_path):
    with pytest.raises(DataError):
        load_archive(tmp_path / "absent.npz")
