"""Fusion configuration sweeps and the selective-regularization analysis.

`fusion_study` trains one SOFA-forecasting model per fusion configuration on
identical splits and seeds and reports test RMSE with bootstrap CIs, as a
machine-readable table.

`regularization_analysis` trains an all-point fused model twice from one
shared initialization: once with the selective penalty on the static MLPs,
once without. It reports mean |w| per static-MLP block and per main-branch
layer, before and after each run, with order-of-magnitude reductions
(reduction = log10(before) - log10(after)).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from ..data.records import TimeSeriesRecord
from ..seqmodels.config import EncoderConfig
from ..seqmodels.heads import TaskModel
from ..training.loop import SOFA_HORIZON_H, TrainConfig, evaluate_task, train_task
from ..training.metrics import MetricReport
from .model import FUSION_POINTS, FusedModel, FusionSpec, build_fused_model, fusion_penalty
from .statics import StaticScaler

_BASE_SALT = 0xBA5E
_FUSE_SALT = 0xF05E


def default_study_specs(regularization: str = "none") -> tuple[FusionSpec, ...]:
    """The six canonical configurations: none, I, V, VI, I+V+VI, I..VI."""
    return (
        FusionSpec(()),
        FusionSpec(("I",), regularization="none"),
        FusionSpec(("V",), regularization=regularization),
        FusionSpec(("VI",), regularization=regularization),
        FusionSpec(("I", "V", "VI"), regularization=regularization),
        FusionSpec(FUSION_POINTS, regularization=regularization),
    )


@dataclass
class FusionRow:
    label: str
    spec: FusionSpec
    rmse: MetricReport
    history: dict = field(repr=False)


def fusion_study(
    parts: dict[str, list[TimeSeriesRecord]],
    specs: tuple[FusionSpec, ...],
    enc_cfg: EncoderConfig,
    train_cfg: TrainConfig,
    n_boot: int = 1000,
    eval_seed: int = 0,
    horizon_h: int = SOFA_HORIZON_H,
) -> list[FusionRow]:
    """Train one model per spec on identical data/seeds; report test RMSE.

    Every run rebuilds the same base-model initialization from
    train_cfg.seed, so rows differ only through their fusion spec.
    """
    if enc_cfg.kind != "tcn":
        raise ValueError("the fusion study is defined for the tcn backbone")
    scaler = StaticScaler.fit(parts["train"])
    rows = []
    for spec in specs:
        base = TaskModel(enc_cfg, "sofa", np.random.default_rng([train_cfg.seed, _BASE_SALT]))
        fused = build_fused_model(
            base, spec, scaler, np.random.default_rng([train_cfg.seed, _FUSE_SALT])
        )
        history = train_task(
            fused, parts, "sofa", train_cfg,
            penalty_fn=fusion_penalty(spec), horizon_h=horizon_h,
        )
        report = evaluate_task(
            fused, parts["test"], "sofa", n_boot=n_boot, seed=eval_seed,
            horizon_h=horizon_h,
        )
        rows.append(FusionRow(spec.label, spec, report, history))
    return rows


def study_to_csv(rows: list[FusionRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["config", "rmse", "ci_low", "ci_high", "n_boot"])
    for row in rows:
        r = row.rmse
        writer.writerow(
            [row.label, f"{r.point:.6f}", f"{r.ci_low:.6f}", f"{r.ci_high:.6f}", r.n_boot]
        )
    return out.getvalue()


def study_to_text(rows: list[FusionRow]) -> str:
    width = max(len(r.label) for r in rows)
    lines = [f"{'config':<{width}}  rmse    95% CI"]
    for row in rows:
        r = row.rmse
        lines.append(
            f"{row.label:<{width}}  {r.point:.4f}  [{r.ci_low:.4f}, {r.ci_high:.4f}]"
        )
    return "\n".join(lines) + "\n"


@dataclass
class MagnitudeRow:
    """Mean |w| of one weight group at init and after each twin run."""

    before: float
    after: float
    twin_after: float

    @staticmethod
    def _log10(x: float) -> float:
        return float(np.log10(max(x, 1e-300)))

    @property
    def reduction(self) -> float:
        """Orders of magnitude lost under the penalty: log10(before/after)."""
        return self._log10(self.before) - self._log10(self.after)

    @property
    def twin_reduction(self) -> float:
        """Same quantity for the unregularized twin run."""
        return self._log10(self.before) - self._log10(self.twin_after)


@dataclass
class WeightMagnitudeReport:
    regularization: str
    lam: float
    fusion_blocks: dict[str, MagnitudeRow]
    main_branch: dict[str, MagnitudeRow]
    pooled_fusion: MagnitudeRow
    pooled_main: MagnitudeRow

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("group,name,mean_abs_before,mean_abs_after,mean_abs_twin,"
                  "reduction_orders,twin_reduction_orders\n")
        sections = (
            [("fusion", k, v) for k, v in self.fusion_blocks.items()]
            + [("fusion", "pooled", self.pooled_fusion)]
            + [("main", k, v) for k, v in self.main_branch.items()]
            + [("main", "pooled", self.pooled_main)]
        )
        for group, name, row in sections:
            out.write(
                f"{group},{name},{row.before:.8g},{row.after:.8g},"
                f"{row.twin_after:.8g},{row.reduction:.4f},{row.twin_reduction:.4f}\n"
            )
        return out.getvalue()

    def to_text(self) -> str:
        lines = [
            f"selective {self.regularization} penalty (lam={self.lam:g}) on static MLPs",
            f"{'group':<8}{'name':<10}{'before':>12}{'after':>12}{'orders':>9}"
            f"{'twin orders':>13}",
        ]

        def fmt(group, name, row):
            return (f"{group:<8}{name:<10}{row.before:>12.3e}{row.after:>12.3e}"
                    f"{row.reduction:>9.2f}{row.twin_reduction:>13.2f}")

        for name, row in self.fusion_blocks.items():
            lines.append(fmt("fusion", name, row))
        lines.append(fmt("fusion", "pooled", self.pooled_fusion))
        for name, row in self.main_branch.items():
            lines.append(fmt("main", name, row))
        lines.append(fmt("main", "pooled", self.pooled_main))
        return "\n".join(lines) + "\n"


def _weight_groups(model: FusedModel) -> tuple[dict[str, list[np.ndarray]], dict[str, list[np.ndarray]]]:
    """(fusion groups, main-branch groups), weight matrices only, no biases."""
    fusion = {
        point: [lin.w.data for lin in mlp.linears()]
        for point, mlp in model.static_mlps().items()
    }
    main: dict[str, list[np.ndarray]] = {}
    for i, blk in enumerate(model.blocks):
        arrays = [blk.conv1.w.data, blk.conv2.w.data]
        if blk.proj is not None:
            arrays.append(blk.proj.w.data)
        main[f"block{i + 1}"] = arrays
    main["fc1"] = [model.fc1.w.data]
    main["fc2"] = [model.fc2.w.data]
    main["head"] = [model.head.w.data]
    return fusion, main


def _mean_abs(arrays: list[np.ndarray]) -> float:
    total = sum(float(np.abs(a).sum()) for a in arrays)
    count = sum(a.size for a in arrays)
    return total / count


def _snapshot(model: FusedModel) -> tuple[dict[str, float], dict[str, float]]:
    fusion, main = _weight_groups(model)
    return (
        {k: _mean_abs(v) for k, v in fusion.items()},
        {k: _mean_abs(v) for k, v in main.items()},
    )


def _pooled(model: FusedModel) -> tuple[float, float]:
    fusion, main = _weight_groups(model)
    return (
        _mean_abs([a for arrays in fusion.values() for a in arrays]),
        _mean_abs([a for arrays in main.values() for a in arrays]),
    )


def _structural_twin(fused: FusedModel, spec: FusionSpec, seed: int) -> FusedModel:
    """Fresh model with `spec` carrying exactly `fused`'s parameter values."""
    base = TaskModel(fused.cfg, fused.task, np.random.default_rng([seed, _BASE_SALT]))
    twin = FusedModel(base, spec, fused.scaler, np.random.default_rng([seed, _FUSE_SALT]))
    twin.load_state_dict(fused.state_dict())
    return twin


def regularization_analysis(
    fused: FusedModel,
    parts: dict[str, list[TimeSeriesRecord]],
    train_cfg: TrainConfig,
    regularization: str = "l1",
    lam: float | None = None,
    horizon_h: int = SOFA_HORIZON_H,
) -> WeightMagnitudeReport:
    """Train regularized and unregularized twins of `fused`; compare weights.

    `fused` must be an untrained all-point fusion model; it provides the
    shared initialization and is not modified. Both twins see identical
    data order and dropout draws, so any magnitude gap is the penalty's.
    """
    if set(fused.spec.points) != set(FUSION_POINTS):
        raise ValueError(
            f"analysis expects an all-point fusion model, got {fused.spec.points}"
        )
    reg_spec = FusionSpec(FUSION_POINTS, regularization=regularization, lam=lam)
    plain_spec = FusionSpec(FUSION_POINTS, regularization="none")

    fusion_before, main_before = _snapshot(fused)
    pooled_fusion_before, pooled_main_before = _pooled(fused)

    reg_model = _structural_twin(fused, reg_spec, train_cfg.seed)
    plain_model = _structural_twin(fused, plain_spec, train_cfg.seed)
    # final-epoch weights, not the best-val snapshot, and no early stopping:
    # the object of study is where the penalty drives the weights over the
    # full epoch budget, not the best predictive state along the way
    full_cfg = replace(train_cfg, early_stop_patience=train_cfg.epochs)
    train_task(reg_model, parts, "sofa", full_cfg,
               penalty_fn=fusion_penalty(reg_spec), horizon_h=horizon_h,
               restore_best=False)
    train_task(plain_model, parts, "sofa", full_cfg,
               penalty_fn=fusion_penalty(plain_spec), horizon_h=horizon_h,
               restore_best=False)

    fusion_reg, main_reg = _snapshot(reg_model)
    fusion_plain, main_plain = _snapshot(plain_model)
    pooled_fusion_reg, pooled_main_reg = _pooled(reg_model)
    pooled_fusion_plain, pooled_main_plain = _pooled(plain_model)

    return WeightMagnitudeReport(
        regularization=regularization,
        lam=reg_spec.lam if reg_spec.lam is not None else 0.0,
        fusion_blocks={
            k: MagnitudeRow(fusion_before[k], fusion_reg[k], fusion_plain[k])
            for k in fusion_before
        },
        main_branch={
            k: MagnitudeRow(main_before[k], main_reg[k], main_plain[k])
            for k in main_before
        },
        pooled_fusion=MagnitudeRow(
            pooled_fusion_before, pooled_fusion_reg, pooled_fusion_plain
        ),
        pooled_main=MagnitudeRow(pooled_main_before, pooled_main_reg, pooled_main_plain),
    )
