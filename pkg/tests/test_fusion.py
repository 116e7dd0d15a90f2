import numpy as np
import pytest

from steerlab.autodiff import Tensor
from steerlab.data import SynthConfig, generate_cohort, make_batches, split
from steerlab.data.records import COMORBIDITY_KEYS
from steerlab.fusion import (
    FUSION_POINTS,
    FusedModel,
    FusionSpec,
    StaticScaler,
    STATIC_DIM,
    build_fused_model,
    default_study_specs,
    fusion_penalty,
    fusion_study,
    regularization_analysis,
    study_to_csv,
    study_to_text,
)
from steerlab.seqmodels import EncoderConfig, TaskModel
from steerlab.training import TrainConfig


def _enc(m=3, scale=0.0625):
    return EncoderConfig(kind="tcn", in_channels=m, scale=scale)


def _recs(n=24, m=3, seed=5, **kw):
    cfg = SynthConfig(n_records=n, m=m, t_range=(26, 32), seed=seed,
                      dataset_tag="fusion-test", **kw)
    return generate_cohort(cfg)


def _base(m=3, seed=0, task="sofa"):
    return TaskModel(_enc(m), task, np.random.default_rng(seed))


def _batch(recs, scaler, size=8):
    return next(make_batches(recs, size, statics_fn=scaler.vector))


class TestStaticVector:
    def test_dimension(self):
        assert STATIC_DIM == 6 + len(COMORBIDITY_KEYS) == 21

    def test_layout(self):
        recs = _recs(n=80, unknown_sex_rate=0.3, other_race_rate=0.3)
        scaler = StaticScaler.fit(recs)
        by_sex = {r.statics.sex: r for r in recs}
        assert set(by_sex) == {"female", "male", "unknown"}
        v = scaler.vector(by_sex["female"])
        assert (v[0], v[1]) == (1.0, 0.0)
        v = scaler.vector(by_sex["male"])
        assert (v[0], v[1]) == (0.0, 1.0)
        v = scaler.vector(by_sex["unknown"])
        assert (v[0], v[1]) == (0.0, 0.0)
        by_race = {r.statics.race: r for r in recs}
        for j, race in enumerate(("black", "white", "other")):
            v = scaler.vector(by_race[race])
            expected = np.zeros(3)
            expected[j] = 1.0
            np.testing.assert_array_equal(v[3:6], expected)

    def test_age_zscore_frozen_from_fit(self):
        recs = _recs(n=40)
        scaler = StaticScaler.fit(recs)
        ages = np.array([r.statics.age_years for r in recs])
        for r in recs[:5]:
            expected = (r.statics.age_years - ages.mean()) / ages.std()
            assert scaler.vector(r)[2] == pytest.approx(expected)
        other = _recs(n=10, seed=99)
        for r in other[:3]:
            expected = (r.statics.age_years - ages.mean()) / ages.std()
            assert scaler.vector(r)[2] == pytest.approx(expected)

    def test_comorbidity_flags(self):
        recs = _recs(n=12)
        scaler = StaticScaler.fit(recs)
        for r in recs[:4]:
            v = scaler.vector(r)
            for i, key in enumerate(COMORBIDITY_KEYS):
                assert v[6 + i] == float(r.statics.comorbidities[key])

    def test_empty_fit_rejected(self):
        with pytest.raises(ValueError, match="zero records"):
            StaticScaler.fit([])


class TestFusionSpec:
    def test_canonical_ordering(self):
        assert FusionSpec(("VI", "I", "III")).points == ("I", "III", "VI")

    def test_validation(self):
        with pytest.raises(ValueError, match="unknown fusion points"):
            FusionSpec(("VII",))
        with pytest.raises(ValueError, match="duplicate"):
            FusionSpec(("I", "I"))
        with pytest.raises(ValueError, match="regularization"):
            FusionSpec(("I",), regularization="dropout")

    def test_default_lambdas(self):
        assert FusionSpec(("V",), regularization="l1").lam == 1e-3
        assert FusionSpec(("V",), regularization="l2").lam == 1e-4
        assert FusionSpec(("V",), regularization="l1", lam=0.5).lam == 0.5
        assert FusionSpec(("V",)).lam is None

    def test_label(self):
        assert FusionSpec(()).label == "none"
        assert FusionSpec(("I", "V")).label == "I+V"
        lab = FusionSpec(("V",), regularization="l1").label
        assert lab == "V (l1, lam=0.001)"


class TestFusedModel:
    def test_no_points_matches_base_exactly(self):
        recs = _recs()
        scaler = StaticScaler.fit(recs)
        base = _base()
        fused = build_fused_model(base, FusionSpec(()), scaler,
                                  np.random.default_rng(1))
        base.eval()
        fused.eval()
        batch = _batch(recs, scaler)
        x = Tensor(batch.x)
        out_base = base(x, batch.mask)
        out_fused = fused(x, batch.mask)
        np.testing.assert_array_equal(out_base.data, out_fused.data)

    def test_all_points_zero_contribution_at_init(self):
        # every widened column starts at zero: statics cannot move the output
        # until training does
        recs = _recs()
        scaler = StaticScaler.fit(recs)
        base = _base()
        fused = build_fused_model(base, FusionSpec(FUSION_POINTS), scaler,
                                  np.random.default_rng(1))
        base.eval()
        fused.eval()
        batch = _batch(recs, scaler)
        x = Tensor(batch.x)
        out_base = base(x, batch.mask)
        out_fused = fused(x, batch.mask, statics=batch.statics)
        np.testing.assert_array_equal(out_base.data, out_fused.data)

    def test_statics_flow_once_columns_are_nonzero(self):
        recs = _recs()
        scaler = StaticScaler.fit(recs)
        fused = build_fused_model(_base(), FusionSpec(("VI",)), scaler,
                                  np.random.default_rng(1))
        fused.eval()
        batch = _batch(recs, scaler)
        x = Tensor(batch.x)
        before = fused(x, batch.mask, statics=batch.statics).data.copy()
        fused.mlp_VI.fc3.b.data[:] = 1.0
        fused.head.w.data[-fused.emb_dim :, :] = 0.2
        after = fused(x, batch.mask, statics=batch.statics).data
        assert np.all(np.abs(after - before) > 0.0)

    def test_forward_without_statics_rejected(self):
        recs = _recs()
        scaler = StaticScaler.fit(recs)
        fused = build_fused_model(_base(), FusionSpec(("I",)), scaler,
                                  np.random.default_rng(1))
        fused.eval()
        batch = _batch(recs, scaler)
        with pytest.raises(ValueError, match="statics"):
            fused(Tensor(batch.x), batch.mask)

    def test_widened_shapes(self):
        recs = _recs()
        scaler = StaticScaler.fit(recs)
        fused = build_fused_model(_base(), FusionSpec(FUSION_POINTS), scaler,
                                  np.random.default_rng(1))
        ch, emb = 16, 16  # 256 * 0.0625 for both trunk width and embedding
        assert fused.emb_dim == emb
        assert fused.blocks[0].conv1.w.shape == (ch, 3 + STATIC_DIM, 3)
        for i in (1, 2, 3):
            assert fused.blocks[i].conv1.w.shape == (ch, ch + emb, 3)
        assert fused.fc1.w.shape == (ch + emb, 8)
        assert fused.fc2.w.shape == (8, 8)
        assert fused.head.w.shape == (8 + emb, 1)
        assert set(fused.static_mlps()) == {"II", "III", "IV", "V", "VI"}

    def test_build_is_deterministic(self):
        recs = _recs()
        scaler = StaticScaler.fit(recs)
        a = build_fused_model(_base(seed=3), FusionSpec(FUSION_POINTS), scaler,
                              np.random.default_rng(7))
        b = build_fused_model(_base(seed=3), FusionSpec(FUSION_POINTS), scaler,
                              np.random.default_rng(7))
        sa, sb = a.state_dict(), b.state_dict()
        assert sa.keys() == sb.keys()
        for k in sa:
            np.testing.assert_array_equal(sa[k], sb[k])

    def test_base_left_untouched(self):
        recs = _recs()
        scaler = StaticScaler.fit(recs)
        base = _base()
        snap = {k: v.copy() for k, v in base.state_dict().items()}
        build_fused_model(base, FusionSpec(FUSION_POINTS), scaler,
                          np.random.default_rng(1))
        for k, v in base.state_dict().items():
            np.testing.assert_array_equal(v, snap[k])

    def test_non_tcn_base_rejected(self):
        cfg = EncoderConfig(kind="lstm", in_channels=3, scale=0.0625)
        base = TaskModel(cfg, "sofa", np.random.default_rng(0))
        with pytest.raises(ValueError, match="tcn"):
            build_fused_model(base, FusionSpec(("I",)),
                              StaticScaler(60.0, 10.0), np.random.default_rng(1))

    def test_wrong_depth_rejected(self):
        cfg = EncoderConfig(kind="tcn", in_channels=3, scale=0.0625, tcn_blocks=2)
        base = TaskModel(cfg, "sofa", np.random.default_rng(0))
        with pytest.raises(ValueError, match="4-block"):
            build_fused_model(base, FusionSpec(("I",)),
                              StaticScaler(60.0, 10.0), np.random.default_rng(1))


class TestFusionPenalty:
    def _fused(self, spec):
        recs = _recs()
        scaler = StaticScaler.fit(recs)
        return build_fused_model(_base(), spec, scaler, np.random.default_rng(1))

    def test_none_returns_none(self):
        assert fusion_penalty(FusionSpec(("I",), regularization="none")) is None

    def test_raw_point_only_rejected(self):
        with pytest.raises(ValueError, match="embedded"):
            fusion_penalty(FusionSpec(("I",), regularization="l1"))

    def test_l1_value(self):
        spec = FusionSpec(("II", "VI"), regularization="l1", lam=0.01)
        fused = self._fused(spec)
        val = float(fusion_penalty(spec)(fused).data)
        expected = 0.01 * sum(
            np.abs(lin.w.data).sum()
            for mlp in fused.static_mlps().values()
            for lin in mlp.linears()
        )
        assert val == pytest.approx(expected, rel=1e-12)

    def test_l2_value(self):
        spec = FusionSpec(("V",), regularization="l2", lam=0.5)
        fused = self._fused(spec)
        val = float(fusion_penalty(spec)(fused).data)
        expected = 0.5 * sum(
            (lin.w.data**2).sum()
            for lin in fused.static_mlps()["V"].linears()
        )
        assert val == pytest.approx(expected, rel=1e-12)

    def test_biases_exempt(self):
        spec = FusionSpec(("VI",), regularization="l1")
        fused = self._fused(spec)
        pen = fusion_penalty(spec)
        before = float(pen(fused).data)
        fused.mlp_VI.fc1.b.data[:] += 5.0
        assert float(pen(fused).data) == before

    def test_penalty_gradients_scoped_to_static_mlps(self):
        spec = FusionSpec(FUSION_POINTS, regularization="l1")
        fused = self._fused(spec)
        fused.zero_grad()
        fusion_penalty(spec)(fused).backward()
        for name, p in fused.named_parameters():
            if ".w" in name and name.startswith("mlp_"):
                assert p.grad is not None and np.any(p.grad != 0.0), name
            else:
                assert p.grad is None, name


class TestRegularizationAnalysis:
    def _setup(self, n=48, seed=5):
        recs = _recs(n=n, seed=seed)
        parts = split(recs, seed=0)
        scaler = StaticScaler.fit(parts["train"])
        base = _base()
        fused = build_fused_model(base, FusionSpec(FUSION_POINTS, "l1"),
                                  scaler, np.random.default_rng(1))
        return parts, fused

    def test_partial_point_model_rejected(self):
        recs = _recs()
        parts = split(recs, seed=0)
        scaler = StaticScaler.fit(parts["train"])
        fused = build_fused_model(_base(), FusionSpec(("V", "VI"), "l1"),
                                  scaler, np.random.default_rng(1))
        cfg = TrainConfig(lr=1e-3, epochs=1, batch_size=8, seed=0)
        with pytest.raises(ValueError, match="all-point"):
            regularization_analysis(fused, parts, cfg, "l1")

    def test_report_structure(self):
        parts, fused = self._setup()
        cfg = TrainConfig(lr=1e-3, epochs=1, batch_size=16, seed=0)
        rep = regularization_analysis(fused, parts, cfg, "l1")
        assert set(rep.fusion_blocks) == {"II", "III", "IV", "V", "VI"}
        assert set(rep.main_branch) == {
            "block1", "block2", "block3", "block4", "fc1", "fc2", "head"
        }
        assert rep.lam == 1e-3
        lines = rep.to_csv().strip().split("\n")
        assert lines[0].startswith("group,name,mean_abs_before")
        assert len(lines) == 15
        assert "selective l1 penalty" in rep.to_text()

    def test_zero_lambda_twins_identical(self):
        # with lam=0 the penalized and plain twins see identical gradients,
        # identical data order, identical dropout draws: bitwise-equal weights
        parts, fused = self._setup()
        cfg = TrainConfig(lr=1e-3, epochs=2, batch_size=16, seed=0)
        rep = regularization_analysis(fused, parts, cfg, "l1", lam=0.0)
        for row in list(rep.fusion_blocks.values()) + list(rep.main_branch.values()):
            assert row.after == row.twin_after

    def test_penalty_shrinks_fusion_blocks_only(self):
        parts, fused = self._setup(n=64)
        cfg = TrainConfig(lr=2e-3, epochs=8, batch_size=16, seed=0)
        rep = regularization_analysis(fused, parts, cfg, "l1", lam=0.1)
        gap = rep.pooled_fusion.reduction - rep.pooled_fusion.twin_reduction
        assert gap >= 0.05
        main_gap = abs(rep.pooled_main.reduction - rep.pooled_main.twin_reduction)
        assert main_gap <= 0.05

    def test_magnitude_row_arithmetic(self):
        from steerlab.fusion import MagnitudeRow

        row = MagnitudeRow(before=0.2, after=0.002, twin_after=0.19)
        assert row.reduction == pytest.approx(2.0)
        assert row.twin_reduction == pytest.approx(np.log10(0.2 / 0.19))


class TestFusionStudy:
    def test_default_specs(self):
        specs = default_study_specs("l1")
        assert len(specs) == 6
        assert specs[0].points == ()
        assert specs[1].points == ("I",)
        assert specs[1].regularization == "none"
        assert specs[-1].points == FUSION_POINTS

    def test_non_tcn_rejected(self):
        cfg = EncoderConfig(kind="lstm", in_channels=3, scale=0.0625)
        parts = split(_recs(), seed=0)
        with pytest.raises(ValueError, match="tcn"):
            fusion_study(parts, (FusionSpec(()),), cfg,
                         TrainConfig(lr=1e-3, epochs=1, batch_size=8, seed=0))

    def test_study_rows_and_tables(self):
        parts = split(_recs(n=32), seed=0)
        specs = (FusionSpec(()), FusionSpec(("VI",), regularization="l1"))
        cfg = TrainConfig(lr=1e-3, epochs=2, batch_size=16, seed=0)
        rows = fusion_study(parts, specs, _enc(), cfg, n_boot=25)
        assert [r.label for r in rows] == ["none", "VI (l1, lam=0.001)"]
        for row in rows:
            assert row.rmse.ci_low <= row.rmse.point <= row.rmse.ci_high
        csv = study_to_csv(rows)
        assert csv.startswith("config,rmse,ci_low,ci_high,n_boot\n")
        assert len(csv.strip().split("\n")) == 3
        text = study_to_text(rows)
        assert "VI (l1, lam=0.001)" in text

    def test_study_deterministic(self):
        parts = split(_recs(n=32), seed=0)
        specs = (FusionSpec(("V",)),)
        cfg = TrainConfig(lr=1e-3, epochs=2, batch_size=16, seed=0)
        r1 = fusion_study(parts, specs, _enc(), cfg, n_boot=10)
        r2 = fusion_study(parts, specs, _enc(), cfg, n_boot=10)
        assert r1[0].rmse.point == r2[0].rmse.point
