import numpy as np
import pytest

from steerlab.autodiff import Tensor, check_gradients, nn
from steerlab.seqmodels import (
    EncoderConfig,
    TaskHead,
    TaskModel,
    build_encoder,
    last_step_logits,
    load_checkpoint,
    save_checkpoint,
)

ALL_KINDS = ("lstm", "tcn", "transformer")


def _tiny_cfg(kind, m=3):
    """Widths scaled down to 8 so gradient checks stay cheap."""
    return EncoderConfig(
        kind=kind, in_channels=m, scale=0.125,
        lstm_hidden=64, lstm_layers=2, lstm_dropout=0.0,
        tcn_blocks=2, tcn_channels=64, tcn_fc=(64, 64), tcn_dropout=0.0,
        tr_d_model=64, tr_heads=2, tr_ffn=64, tr_layers=1,
    )


def _forward(encoder, x, lengths=None):
    encoder.eval()
    b_sz, _, t_len = x.shape
    if lengths is None:
        lengths = np.full(b_sz, t_len)
    mask = np.arange(t_len)[None, :] < np.asarray(lengths)[:, None]
    return encoder(Tensor(x), mask).data


class TestConfig:
    def test_non_integer_scaled_width_rejected(self):
        with pytest.raises(ValueError, match="integer"):
            EncoderConfig(kind="lstm", in_channels=3, scale=0.1)

    def test_width_floor_enforced(self):
        with pytest.raises(ValueError, match="below 8"):
            EncoderConfig(kind="lstm", in_channels=3, scale=0.125, lstm_hidden=32)

    def test_heads_must_divide_d_model(self):
        with pytest.raises(ValueError, match="heads"):
            EncoderConfig(
                kind="transformer", in_channels=3, scale=0.125,
                tr_d_model=96, tr_heads=7, tr_ffn=64,
            )

    def test_default_desk_scale_widths(self):
        cfg = EncoderConfig(kind="lstm", in_channels=8)
        assert cfg.scaled("lstm_hidden") == 64
        cfg = EncoderConfig(kind="tcn", in_channels=8)
        assert cfg.scaled("tcn_channels") == 32 and cfg.hidden_dim == 16
        cfg = EncoderConfig(kind="transformer", in_channels=8)
        assert cfg.scaled("tr_d_model") == 32 and cfg.scaled("tr_ffn") == 128

    def test_roundtrip_dict(self):
        cfg = EncoderConfig(kind="tcn", in_channels=5, scale=0.25)
        assert EncoderConfig.from_dict(cfg.to_dict()) == cfg


class TestCausality:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_future_perturbation_invisible(self, kind):
        rng = np.random.default_rng(0)
        enc = build_encoder(_tiny_cfg(kind), rng)
        x1 = rng.normal(size=(2, 3, 12))
        x2 = x1.copy()
        x2[:, :, 8:] = rng.normal(size=(2, 3, 4))
        out1 = _forward(enc, x1)
        out2 = _forward(enc, x2)
        np.testing.assert_array_equal(out1[:, :8], out2[:, :8])

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_no_perturbation_pure(self, kind):
        rng = np.random.default_rng(1)
        enc = build_encoder(_tiny_cfg(kind), rng)
        x = rng.normal(size=(1, 3, 10))
        np.testing.assert_array_equal(_forward(enc, x), _forward(enc, x.copy()))

    def test_tcn_first_step_randomized_probe(self):
        rng = np.random.default_rng(2)
        enc = build_encoder(_tiny_cfg("tcn"), rng)
        x = rng.normal(size=(1, 3, 15))
        ref = _forward(enc, x)[0, 0]
        for _ in range(100):
            trial = x.copy()
            trial[:, :, 1:] = rng.normal(size=(1, 3, 14))
            np.testing.assert_array_equal(_forward(enc, trial)[0, 0], ref)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_padding_values_never_leak(self, kind):
        rng = np.random.default_rng(3)
        enc = build_encoder(_tiny_cfg(kind), rng)
        lengths = [7, 12]
        x1 = rng.normal(size=(2, 3, 12))
        x2 = x1.copy()
        x2[0, :, 7:] = 99.0  # scribble on row 0's padding
        out1 = _forward(enc, x1, lengths)
        out2 = _forward(enc, x2, lengths)
        np.testing.assert_array_equal(out1[0, :7], out2[0, :7])
        np.testing.assert_array_equal(out1[1], out2[1])


class TestHeads:
    def test_zero_weight_head_constant_logits(self):
        rng = np.random.default_rng(4)
        head = TaskHead(4, "ihm", rng)
        head.lin.w.data[:] = 0.0
        head.lin.b.data[:] = (0.3, -0.3)
        out = head(Tensor(rng.normal(size=(2, 9, 4)))).data
        np.testing.assert_array_equal(out, np.broadcast_to((0.3, -0.3), (2, 9, 2)))

    def test_identity_sofa_head(self):
        rng = np.random.default_rng(5)
        head = TaskHead(1, "sofa", rng)
        head.lin.w.data[:] = 1.0
        head.lin.b.data[:] = 0.0
        h = rng.normal(size=(1, 6, 1))
        np.testing.assert_allclose(head(Tensor(h)).data, h)

    def test_ihm_shape(self):
        rng = np.random.default_rng(6)
        head = TaskHead(5, "ihm", rng)
        assert head(Tensor(rng.normal(size=(1, 10, 5)))).shape == (1, 10, 2)

    def test_unknown_task_rejected(self):
        with pytest.raises(ValueError):
            TaskHead(4, "los", np.random.default_rng(0))

    def test_last_step_selection(self):
        out = Tensor(np.arange(2 * 5 * 3, dtype=float).reshape(2, 5, 3))
        picked = last_step_logits(out, np.array([2, 5]))
        np.testing.assert_array_equal(picked.data[0], out.data[0, 1])
        np.testing.assert_array_equal(picked.data[1], out.data[1, 4])


class TestParameterCounts:
    def test_lstm_count_matches_formula(self):
        cfg = _tiny_cfg("lstm")  # hidden 8, 2 layers, m=3
        enc = build_encoder(cfg, np.random.default_rng(7))
        # layer 1: 3*32 + 8*32 + 32; layer 2: 8*32 + 8*32 + 32
        assert enc.param_count() == (96 + 256 + 32) + (256 + 256 + 32)

    def test_lstm_count_scales_quadratically(self):
        def count(scale):
            cfg = EncoderConfig(
                kind="lstm", in_channels=3, scale=scale,
                lstm_hidden=64, lstm_layers=2,
            )
            return build_encoder(cfg, np.random.default_rng(8)).param_count()

        ratio = count(0.25) / count(0.125)
        assert 3.4 <= ratio <= 4.2

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_count_deterministic(self, kind):
        cfg = _tiny_cfg(kind)
        a = build_encoder(cfg, np.random.default_rng(9)).param_count()
        b = build_encoder(cfg, np.random.default_rng(10)).param_count()
        assert a == b


class TestGradients:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_encoder_gradcheck(self, kind):
        rng = np.random.default_rng(11)
        model = TaskModel(_tiny_cfg(kind), "sofa", rng)
        model.eval()
        x = Tensor(rng.normal(size=(2, 3, 5)))
        mask = np.ones((2, 5), dtype=bool)

        def loss_fn():
            out = model(x, mask)
            return (out * out).sum()

        check_gradients(
            loss_fn, list(model.parameters()), rtol=1e-4,
            max_entries_per_param=4, seed=12,
        )


class TestCheckpoint:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(13)
        model = TaskModel(_tiny_cfg("tcn"), "sofa", rng)
        path = tmp_path / "model.npz"
        save_checkpoint(model, path, manifest_extra={"seed": 13})
        clone = TaskModel(_tiny_cfg("tcn"), "sofa", np.random.default_rng(99))
        manifest = load_checkpoint(clone, path)
        for (n1, p1), (n2, p2) in zip(
            model.named_parameters(), clone.named_parameters()
        ):
            assert n1 == n2
            np.testing.assert_array_equal(p1.data, p2.data)
        assert manifest["seed"] == 13
        assert manifest["param_count"] == model.param_count()

    def test_mismatched_model_rejected(self, tmp_path):
        rng = np.random.default_rng(14)
        model = TaskModel(_tiny_cfg("tcn"), "sofa", rng)
        path = tmp_path / "model.npz"
        save_checkpoint(model, path)
        other = TaskModel(_tiny_cfg("lstm"), "sofa", rng)
        with pytest.raises(KeyError):
            load_checkpoint(other, path)

    def test_outputs_identical_after_reload(self, tmp_path):
        rng = np.random.default_rng(15)
        model = TaskModel(_tiny_cfg("transformer"), "sofa", rng)
        model.eval()
        x = rng.normal(size=(2, 3, 8))
        mask = np.ones((2, 8), dtype=bool)
        before = model(Tensor(x), mask).data
        path = tmp_path / "model.npz"
        save_checkpoint(model, path)
        clone = TaskModel(_tiny_cfg("transformer"), "sofa", np.random.default_rng(77))
        load_checkpoint(clone, path)
        clone.eval()
        np.testing.assert_array_equal(clone(Tensor(x), mask).data, before)


class TestDropoutModes:
    def test_train_mode_uses_dropout(self):
        cfg = EncoderConfig(
            kind="tcn", in_channels=3, scale=0.125,
            tcn_blocks=1, tcn_channels=64, tcn_fc=(64, 64), tcn_dropout=0.5,
        )
        rng = np.random.default_rng(16)
        enc = build_encoder(cfg, rng)
        x = Tensor(rng.normal(size=(1, 3, 6)))
        mask = np.ones((1, 6), dtype=bool)
        enc.train()
        out1 = enc(x, mask, np.random.default_rng(1)).data
        out2 = enc(x, mask, np.random.default_rng(2)).data
        assert not np.array_equal(out1, out2)
        enc.eval()
        np.testing.assert_array_equal(
            enc(x, mask).data, enc(x, mask).data
        )
