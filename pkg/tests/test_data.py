import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import roc_auc_score
from sklearn.model_selection import train_test_split

from steerlab.data import (
    COMORBIDITY_KEYS,
    DatasetFormatError,
    StaticLabels,
    SynthConfig,
    TimeSeriesRecord,
    binarize_statics,
    filter_cohort,
    generate_cohort,
    load_dataset,
    make_batches,
    make_ihm_labels,
    make_sofa_targets,
    partition_hash,
    save_dataset,
    split,
)


def _flags(value=False):
    return {k: value for k in COMORBIDITY_KEYS}


def _mk(record_id="r0", T=30, m=3, age=50.0, sex="female", race="white",
        death_hour=None, sofa_value=5, seed=0, tag="synth"):
    rng = np.random.default_rng(seed)
    return TimeSeriesRecord(
        record_id=record_id,
        x=rng.normal(size=(m, T)),
        statics=StaticLabels(sex=sex, age_years=age, race=race, comorbidities=_flags()),
        sofa=np.full(T, sofa_value, dtype=np.int64),
        death_hour=death_hour,
        dataset_tag=tag,
    )


def _oracle_auc(records, attribute, seed=0):
    """Independent leakage oracle: logistic regression on time-averaged x."""
    table = binarize_statics(records)
    keep, y = table.pair(attribute)
    feats = np.stack([records[i].x.mean(axis=1) for i in keep])
    xtr, xte, ytr, yte = train_test_split(
        feats, y, test_size=0.3, random_state=seed, stratify=y
    )
    clf = LogisticRegression(max_iter=2000).fit(xtr, ytr)
    return roc_auc_score(yte, clf.decision_function(xte))


class TestRecordInvariants:
    def test_sofa_bounds_enforced(self):
        with pytest.raises(ValueError):
            _mk(sofa_value=25)

    def test_mask_defaults_to_ones(self):
        rec = _mk(T=12)
        assert rec.mask.all() and rec.mask.size == 12

    def test_mask_with_gap_rejected(self):
        rec = _mk(T=4)
        bad = np.array([True, False, True, False])
        with pytest.raises(ValueError):
            TimeSeriesRecord(
                record_id="g", x=rec.x, statics=rec.statics, sofa=rec.sofa,
                death_hour=None, mask=bad,
            )

    def test_comorbidity_keys_fixed(self):
        flags = _flags()
        flags.pop("chf")
        with pytest.raises(ValueError):
            StaticLabels(sex="male", age_years=40.0, race="black", comorbidities=flags)


class TestGenerator:
    def test_invalid_t_range_rejected(self):
        with pytest.raises(ValueError):
            generate_cohort(SynthConfig(t_range=(20, 72)))
        with pytest.raises(ValueError):
            generate_cohort(SynthConfig(t_range=(24, 241)))

    def test_unknown_leak_key_rejected(self):
        with pytest.raises(ValueError):
            generate_cohort(SynthConfig(leak_strength={"height": 1.0}))

    def test_negative_leak_rejected(self):
        with pytest.raises(ValueError):
            generate_cohort(SynthConfig(leak_strength={"sex": -0.5}))

    def test_deterministic_per_seed(self):
        a = generate_cohort(SynthConfig(n_records=25, seed=3))
        b = generate_cohort(SynthConfig(n_records=25, seed=3))
        for ra, rb in zip(a, b):
            np.testing.assert_array_equal(ra.x, rb.x)
            np.testing.assert_array_equal(ra.sofa, rb.sofa)
            assert ra.death_hour == rb.death_hour
            assert ra.statics == rb.statics

    def test_seed_changes_cohort(self):
        a = generate_cohort(SynthConfig(n_records=5, seed=1))
        b = generate_cohort(SynthConfig(n_records=5, seed=2))
        assert not np.array_equal(a[0].x, b[0].x)

    def test_shapes_and_bounds(self):
        cfg = SynthConfig(n_records=40, m=5, t_range=(24, 60), seed=9)
        for rec in generate_cohort(cfg):
            assert rec.m == 5 and 24 <= rec.T <= 60
            assert rec.sofa.min() >= 0 and rec.sofa.max() <= 24
            assert rec.mask.all()

    def test_no_leak_probe_auc_near_chance(self):
        cfg = SynthConfig(n_records=1000, m=8, t_range=(24, 72), seed=7)
        recs = generate_cohort(cfg)
        for attr in ("sex", "age_class", "race"):
            assert 0.45 <= _oracle_auc(recs, attr) <= 0.55

    def test_strong_sex_leak_probe_auc(self):
        cfg = SynthConfig(
            n_records=1000, m=8, t_range=(24, 72),
            leak_strength={"sex": 2.0}, noise_std=1.0, seed=7,
        )
        recs = generate_cohort(cfg)
        assert _oracle_auc(recs, "sex") >= 0.95
        # untouched attributes stay at chance
        assert 0.45 <= _oracle_auc(recs, "age_class") <= 0.55

    def test_age_trend_leak(self):
        cfg = SynthConfig(
            n_records=1000, m=8, t_range=(24, 72),
            leak_strength={"age": 2.0}, seed=7,
        )
        assert _oracle_auc(generate_cohort(cfg), "age_class") >= 0.9

    def test_site_shift_moves_channel_means(self):
        base = SynthConfig(n_records=300, m=6, t_range=(24, 48), seed=5)
        shifted = SynthConfig(
            n_records=300, m=6, t_range=(24, 48), seed=6,
            structure_seed=5, site_shift=1.5, dataset_tag="siteB",
        )
        mean_a = np.mean([r.x.mean(axis=1) for r in generate_cohort(base)], axis=0)
        mean_b = np.mean([r.x.mean(axis=1) for r in generate_cohort(shifted)], axis=0)
        delta = mean_b - mean_a
        assert np.linalg.norm(delta) == pytest.approx(1.5, abs=0.25)

    def test_comorbidities_track_age(self):
        recs = generate_cohort(SynthConfig(n_records=1500, seed=11))
        ages = np.array([r.statics.age_years for r in recs])
        hyp = np.array([r.statics.comorbidities["hypertension"] for r in recs])
        old = ages >= np.percentile(ages, 67)
        young = ages <= np.percentile(ages, 33)
        assert hyp[old].mean() > hyp[young].mean() + 0.1

    def test_positive_control_shifts_sofa_not_x(self):
        kw = dict(n_records=400, m=4, t_range=(24, 48), seed=13)
        plain = generate_cohort(SynthConfig(**kw))
        ctl = generate_cohort(SynthConfig(**kw, static_target_effect=1.0))
        # x untouched, sofa shifted by a per-record static offset
        for a, b in zip(plain, ctl):
            np.testing.assert_array_equal(a.x, b.x)
        moved = sum(
            not np.array_equal(a.sofa, b.sofa) for a, b in zip(plain, ctl)
        )
        assert moved > len(plain) * 0.5
        # statics remain invisible in x
        assert 0.45 <= _oracle_auc(ctl, "sex") <= 0.58


class TestDatasetIO:
    def test_roundtrip_identity(self, tmp_path):
        recs = generate_cohort(SynthConfig(n_records=12, m=3, seed=4))
        path = tmp_path / "cohort.jsonl"
        save_dataset(recs, path)
        loaded = load_dataset(path)
        assert len(loaded) == len(recs)
        for a, b in zip(recs, loaded):
            assert a.record_id == b.record_id
            np.testing.assert_array_equal(a.x, b.x)
            np.testing.assert_array_equal(a.sofa, b.sofa)
            assert a.death_hour == b.death_hour
            assert a.statics == b.statics
            assert a.dataset_tag == b.dataset_tag

    def test_empty_file_gives_empty_list(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_dataset(path) == []

    def test_sofa_out_of_range_reports_line(self, tmp_path):
        recs = generate_cohort(SynthConfig(n_records=3, m=2, seed=4))
        path = tmp_path / "bad.jsonl"
        save_dataset(recs, path)
        lines = path.read_text().splitlines()
        lines[1] = lines[1].replace(f'"sofa": [{recs[1].sofa[0]}', '"sofa": [25')
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetFormatError, match="line 2"):
            load_dataset(path)

    def test_missing_field_reports_line(self, tmp_path):
        import json

        recs = generate_cohort(SynthConfig(n_records=1, m=2, seed=4))
        path = tmp_path / "missing.jsonl"
        save_dataset(recs, path)
        obj = json.loads(path.read_text())
        del obj["race"]
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(DatasetFormatError, match="line 1.*race"):
            load_dataset(path)

    def test_ragged_x_rejected(self, tmp_path):
        import json

        path = tmp_path / "ragged.jsonl"
        obj = {
            "record_id": "r", "x": [[0.0, 1.0], [0.0]], "sofa": [1, 2],
            "death_hour": None, "sex": "male", "age_years": 30.0,
            "race": "white", "comorbidities": _flags(), "dataset_tag": "t",
        }
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(DatasetFormatError, match="rectangular"):
            load_dataset(path)


class TestFilterAndLabels:
    def test_filter_boundaries(self):
        records = [
            _mk("short", T=23),
            _mk("young", T=30, age=17.9),
            _mk("edge", T=240, age=18.0),
            _mk("keep", T=100, age=50.0),
        ]
        kept = filter_cohort(records)
        assert [r.record_id for r in kept] == ["edge", "keep"]

    def test_filter_idempotent(self):
        recs = generate_cohort(SynthConfig(n_records=50, seed=2))
        once = filter_cohort(recs)
        assert filter_cohort(once) == once

    def test_ihm_exclusions_and_truncation(self):
        records = [
            _mk("early_death", T=60, death_hour=50),
            _mk("boundary_death", T=60, death_hour=54),
            _mk("late_death", T=120, death_hour=100),
            _mk("survivor", T=60),
            _mk("too_short", T=40),
        ]
        kept, labels = make_ihm_labels(records)
        assert [r.record_id for r in kept] == [
            "boundary_death", "late_death", "survivor",
        ]
        assert labels.tolist() == [1, 1, 0]
        assert all(r.T == 48 for r in kept)

    def test_ihm_matches_bruteforce_counts(self):
        recs = generate_cohort(SynthConfig(n_records=400, t_range=(24, 120), seed=21))
        kept, labels = make_ihm_labels(recs)
        expect = [
            r for r in recs
            if r.T >= 48 and (r.death_hour is None or r.death_hour >= 54)
        ]
        assert len(kept) == len(expect)
        assert labels.sum() == sum(1 for r in expect if r.death_hour is not None)

    def test_sofa_targets_minimal(self):
        rec = _mk(T=25)
        rec.sofa = np.arange(25) % 25
        targets = make_sofa_targets(rec, horizon_h=24)
        assert targets.shape == (1,)
        assert targets[0] == rec.sofa[24]

    def test_sofa_targets_length(self):
        assert make_sofa_targets(_mk(T=48), horizon_h=24).shape == (24,)

    def test_sofa_targets_constant(self):
        np.testing.assert_array_equal(
            make_sofa_targets(_mk(T=30, sofa_value=5), horizon_h=24), 5.0
        )

    def test_sofa_targets_too_short(self):
        with pytest.raises(ValueError):
            make_sofa_targets(_mk(T=24), horizon_h=24)

    def test_sofa_targets_causal_pairing(self):
        rec = _mk(T=40)
        rec.sofa = np.arange(40) % 25
        targets = make_sofa_targets(rec, horizon_h=24)
        for i in range(targets.size):
            assert targets[i] == rec.sofa[i + 24]


class TestBinarize:
    def test_age_at_median_is_class_e(self):
        recs = [_mk("a", age=67.0), _mk("b", age=60.0), _mk("c", age=80.0)]
        table = binarize_statics(recs, age_median=67.0)
        assert table.labels["age_class"].tolist() == [1, 0, 1]

    def test_frozen_median_reused(self):
        recs = [_mk("a", age=30.0), _mk("b", age=31.0)]
        table = binarize_statics(recs, age_median=90.0)
        assert table.age_median == 90.0
        assert table.labels["age_class"].tolist() == [0, 0]

    def test_race_other_excluded_only_from_race(self):
        recs = [_mk("a", race="other"), _mk("b", race="black"), _mk("c", race="white")]
        table = binarize_statics(recs)
        assert table.labels["race"].tolist() == [-1, 1, 0]
        assert (table.labels["sex"] >= 0).all()
        keep, y = table.pair("race")
        assert keep.tolist() == [1, 2] and y.tolist() == [1, 0]

    def test_unknown_sex_excluded(self):
        recs = [_mk("a", sex="unknown"), _mk("b", sex="male")]
        table = binarize_statics(recs)
        assert table.labels["sex"].tolist() == [-1, 0]

    def test_comorbidities_pass_through(self):
        rec = _mk("a")
        rec.statics.comorbidities["renal"] = True
        table = binarize_statics([rec])
        assert table.labels["renal"].tolist() == [1]
        assert table.labels["chf"].tolist() == [0]


class TestSplit:
    def test_exact_sizes(self):
        recs = [_mk(f"r{i}") for i in range(100)]
        parts = split(recs, (0.7, 0.15, 0.15), seed=0)
        assert {k: len(v) for k, v in parts.items()} == {
            "train": 70, "val": 15, "test": 15,
        }

    def test_deterministic(self):
        recs = [_mk(f"r{i}") for i in range(50)]
        a = split(recs, seed=4)
        b = split(recs, seed=4)
        for name in ("train", "val", "test"):
            assert [r.record_id for r in a[name]] == [r.record_id for r in b[name]]

    def test_disjoint_exhaustive(self):
        recs = [_mk(f"r{i}") for i in range(37)]
        parts = split(recs, seed=1)
        ids = [r.record_id for part in parts.values() for r in part]
        assert sorted(ids) == sorted(r.record_id for r in recs)

    def test_stratified_positive_rate(self):
        recs = [
            _mk(f"r{i}", T=60, death_hour=70 if i < 10 else None) for i in range(100)
        ]
        parts = split(recs, (0.7, 0.15, 0.15), seed=2, stratify_on="died")
        test_pos = sum(r.death_hour is not None for r in parts["test"])
        assert abs(test_pos - 1.5) <= 2.0

    def test_bad_ratios_rejected(self):
        with pytest.raises(ValueError):
            split([_mk()], (0.5, 0.25, 0.1))

    def test_missing_stratify_label(self):
        with pytest.raises(KeyError):
            split([_mk()], stratify_on="zodiac")

    def test_partition_hash_order_insensitive(self):
        recs = [_mk(f"r{i}") for i in range(20)]
        parts = split(recs, seed=3)
        reordered = {k: list(reversed(v)) for k, v in parts.items()}
        assert partition_hash(parts) == partition_hash(reordered)
        assert partition_hash(parts) != partition_hash(split(recs, seed=5))


class TestBatching:
    def test_padding_example(self):
        recs = [_mk("a", T=30, m=4), _mk("b", T=40, m=4)]
        (batch,) = make_batches(recs, batch_size=2)
        assert batch.x.shape == (2, 4, 40)
        assert batch.mask[1].all()
        assert batch.mask[0, 30:].sum() == 0
        assert np.all(batch.x[0, :, 30:] == 0.0)

    def test_batch_size_one_no_padding(self):
        recs = [_mk("a", T=30), _mk("b", T=40)]
        batches = list(make_batches(recs, batch_size=1))
        assert batches[0].x.shape[2] == 30 and batches[1].x.shape[2] == 40

    def test_last_batch_short(self):
        recs = [_mk(f"r{i}") for i in range(5)]
        batches = list(make_batches(recs, batch_size=2))
        assert [len(b) for b in batches] == [2, 2, 1]

    def test_coverage_exactly_once(self):
        recs = [_mk(f"r{i}", T=24 + i) for i in range(11)]
        batches = list(make_batches(recs, batch_size=3, shuffle_seed=9))
        seen = [rid for b in batches for rid in b.record_ids]
        assert sorted(seen) == sorted(r.record_id for r in recs)

    def test_sequence_targets_padded_and_masked(self):
        recs = [_mk("a", T=30), _mk("b", T=40)]
        (batch,) = make_batches(
            recs, batch_size=2, targets_fn=lambda r: make_sofa_targets(r, 24)
        )
        assert batch.targets.shape == (2, 16)
        assert batch.target_mask[0, :6].all() and not batch.target_mask[0, 6:].any()
        assert batch.target_mask[1].all()

    def test_scalar_targets(self):
        recs = [_mk("a", T=60, death_hour=70), _mk("b", T=60)]
        (batch,) = make_batches(
            recs, batch_size=2,
            targets_fn=lambda r: 1.0 if r.death_hour is not None else 0.0,
        )
        assert batch.targets.tolist() == [1.0, 0.0]
        assert batch.target_mask is None

    def test_bad_batch_size(self):
        with pytest.raises(ValueError):
            list(make_batches([_mk()], batch_size=0))


@settings(max_examples=20, deadline=None)
@given(
    st.lists(st.integers(min_value=24, max_value=60), min_size=1, max_size=12),
    st.integers(min_value=1, max_value=5),
)
def test_batching_mask_prefix_property(lengths, batch_size):
    recs = [_mk(f"r{i}", T=t) for i, t in enumerate(lengths)]
    total = 0
    for batch in make_batches(recs, batch_size=batch_size):
        total += len(batch)
        for j in range(len(batch)):
            n_on = int(batch.mask[j].sum())
            assert n_on == batch.lengths[j]
            assert np.array_equal(
                batch.mask[j], np.arange(batch.mask.shape[1]) < n_on
            )
            assert np.all(batch.x[j, :, n_on:] == 0.0)
    assert total == len(recs)
