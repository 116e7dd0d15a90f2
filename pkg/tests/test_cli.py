"""End-to-end tests for the command line front end.

A module-scoped fixture executes one tiny run of every subcommand through
main(argv) and the tests assert on the artifacts: manifests that reproduce
runs bit-identically, partition hashes on every metrics row, merge tables,
and machine readable error records with exit code 2.
"""

import csv
import json

import pytest

from steerlab.cli.config import ConfigError, parse_config_file, resolve
from steerlab.cli.main import main

GEN_CFG = """\
experiment = generate
n_records = 48
m = 3
t_min = 26
t_max = 32
leak_strength = {"sex": 1.5}
seed = 5
dataset_tag = "cli-test"
"""

TRAIN_KEYS = """\
task = sofa
encoder = tcn
scale = 0.0625
epochs = 1
batch_size = 16
lr = 0.002
n_boot = 16
seed = 7
"""


def _run(*argv):
    rc = main([str(a) for a in argv])
    assert rc == 0, f"command failed: {argv}"


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "gen.cfg").write_text(GEN_CFG)
    _run("generate", "--config", root / "gen.cfg", "--out", root / "gen")
    _run("generate", "--config", root / "gen.cfg",
         "--set", "site_shift=1.0", "--set", "dataset_tag=cli-foreign",
         "--out", root / "gen-foreign")
    dataset = root / "gen" / "dataset.jsonl"

    (root / "train.cfg").write_text(
        f"experiment = train-task\ndataset = {dataset}\n" + TRAIN_KEYS)
    _run("train-task", "--config", root / "train.cfg", "--out", root / "train")

    (root / "audit.cfg").write_text(
        f"experiment = audit\ndataset = {dataset}\n" + TRAIN_KEYS
        + 'attributes = ["sex"]\nprobe_epochs = 4\n')
    _run("audit", "--config", root / "audit.cfg", "--out", root / "audit")
    _run("audit", "--config", root / "audit.cfg",
         "--set", "encoder=lstm", "--set", "scale=0.03125",
         "--out", root / "audit-lstm")
    _run("audit", "--config", root / "audit.cfg", "--set", "split_seed=9",
         "--out", root / "audit-othersplit")

    (root / "transfer.cfg").write_text(
        f"experiment = transfer\ndataset = {dataset}\n"
        f"foreign_dataset = {root / 'gen-foreign' / 'dataset.jsonl'}\n"
        + TRAIN_KEYS + 'attributes = ["sex"]\nprobe_epochs = 4\n')
    _run("transfer", "--config", root / "transfer.cfg", "--out", root / "transfer")

    (root / "fuse.cfg").write_text(
        f"experiment = fuse-study\ndataset = {dataset}\n"
        "scale = 0.0625\nepochs = 1\nbatch_size = 16\nn_boot = 16\nseed = 7\n")
    _run("fuse-study", "--config", root / "fuse.cfg", "--out", root / "fuse")

    (root / "steer.cfg").write_text(
        f"experiment = steer-train\ndataset = {dataset}\n"
        "scale = 0.0625\nepochs = 1\nbatch_size = 16\nnz = 4\nn_boot = 16\nseed = 7\n")
    _run("steer-train", "--config", root / "steer.cfg", "--out", root / "steer")

    (root / "sweep.cfg").write_text(
        f"experiment = steer-eval\ndataset = {dataset}\n"
        "scale = 0.0625\nepochs = 1\nbatch_size = 16\nnz = 4\nn_boot = 16\n"
        "probe_epochs = 4\nsweep = theta\nsweep_grid = [1, 5]\nseed = 7\n")
    _run("steer-eval", "--config", root / "sweep.cfg", "--out", root / "sweep")
    return root


class TestConfigParsing:
    def test_unknown_key_names_key_and_line(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = generate\nn_records = 10\nbogus_key = 3\n")
        with pytest.raises(ConfigError) as exc:
            resolve("generate", cfg)
        assert exc.value.key == "bogus_key"
        assert exc.value.line == 3
        assert "bogus_key" in str(exc.value)

    def test_duplicate_key_names_both_lines(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = generate\nseed = 1\n\nseed = 2\n")
        with pytest.raises(ConfigError, match=r"lines 2 and 4"):
            resolve("generate", cfg)

    def test_type_error_names_key_and_line(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text('experiment = generate\nn_records = "sixty"\n')
        with pytest.raises(ConfigError, match=r"n_records.*line 2"):
            resolve("generate", cfg)

    def test_int_key_rejects_fractional_float(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = generate\nn_records = 10.5\n")
        with pytest.raises(ConfigError, match="n_records"):
            resolve("generate", cfg)

    def test_bool_key_is_strict(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = steer-train\ndataset = d\nscale_elbo_by_T = 1\n")
        with pytest.raises(ConfigError, match="scale_elbo_by_T"):
            resolve("steer-train", cfg)

    def test_experiment_mismatch_rejected(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = generate\n")
        with pytest.raises(ConfigError, match="generate"):
            resolve("audit", cfg)

    def test_set_override_wins_over_file(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = generate\nn_records = 10\n")
        out = resolve("generate", cfg, ["n_records=99"])
        assert out["n_records"] == 99

    def test_set_cannot_change_experiment(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = generate\n")
        with pytest.raises(ConfigError, match="experiment"):
            resolve("generate", cfg, ["experiment=audit"])

    def test_bare_string_values_allowed(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = generate\ndataset_tag = plainword\n")
        assert resolve("generate", cfg)["dataset_tag"] == "plainword"

    def test_nullable_structure_seed(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = generate\nstructure_seed = null\n")
        assert resolve("generate", cfg)["structure_seed"] is None
        cfg.write_text("experiment = generate\nstructure_seed = 4\n")
        assert resolve("generate", cfg)["structure_seed"] == 4

    def test_non_assignment_line_rejected(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = generate\njust some words\n")
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_file(cfg)

    def test_error_record_is_machine_readable(self):
        err = ConfigError("bad key", key="k", line=7)
        rec = err.record()
        assert rec["type"] == "ConfigError"
        assert rec["key"] == "k" and rec["line"] == 7
        json.dumps(rec)


class TestManifests:
    def test_manifest_is_a_valid_config(self, runs):
        manifest = runs / "gen" / "manifest.cfg"
        cfg = resolve("generate", manifest)
        assert cfg["n_records"] == 48
        assert cfg["leak_strength"] == {"sex": 1.5}

    def test_generate_rerun_from_manifest_bit_identical(self, runs, tmp_path):
        _run("generate", "--config", runs / "gen" / "manifest.cfg",
             "--out", tmp_path / "again")
        first = (runs / "gen" / "dataset.jsonl").read_bytes()
        again = (tmp_path / "again" / "dataset.jsonl").read_bytes()
        assert first == again

    def test_rerun_overwrites_identically(self, runs):
        before = (runs / "train" / "metrics.csv").read_bytes()
        _run("train-task", "--config", runs / "train.cfg", "--out", runs / "train")
        assert (runs / "train" / "metrics.csv").read_bytes() == before

    def test_sweep_child_manifest_reproduces_run(self, runs, tmp_path):
        child = runs / "sweep" / "sweep-theta-5"
        cfg = resolve("steer-train", child / "manifest.cfg")
        assert cfg["theta"] == 5.0
        _run("steer-train", "--config", child / "manifest.cfg",
             "--out", tmp_path / "child")
        assert ((tmp_path / "child" / "history.csv").read_bytes()
                == (child / "history.csv").read_bytes())


class TestArtifacts:
    def test_generate_outputs(self, runs):
        assert (runs / "gen" / "dataset.jsonl").exists()
        report = (runs / "gen" / "report.txt").read_text()
        assert "48 records" in report
        first = (runs / "gen" / "manifest.cfg").read_text().splitlines()[0]
        assert first.startswith("# manifest:")

    def test_metrics_embed_partition_hash(self, runs):
        for run in ("train", "audit", "fuse", "steer", "sweep", "transfer"):
            rows = _read_csv(runs / run / "metrics.csv")
            hashes = {r["partition_hash"] for r in rows}
            assert len(hashes) == 1 and len(hashes.pop()) == 64, run

    def test_audit_rows_cover_sources(self, runs):
        rows = _read_csv(runs / "audit" / "metrics.csv")
        assert {(r["source"], r["attribute"]) for r in rows} == {
            ("raw", "sex"), ("hidden", "sex")}
        for row in rows:
            assert 0.0 <= float(row["auc"]) <= 1.0

    def test_transfer_rows_cover_both_cohorts(self, runs):
        rows = _read_csv(runs / "transfer" / "metrics.csv")
        assert {r["cohort"] for r in rows} == {"home-test", "foreign"}

    def test_fuse_rows_cover_default_specs(self, runs):
        rows = _read_csv(runs / "fuse" / "metrics.csv")
        assert len(rows) == 6
        assert rows[0]["config"] == "none"

    def test_steer_train_history(self, runs):
        header = (runs / "steer" / "history.csv").read_text().splitlines()[0]
        assert header.startswith("epoch,recon,kl,")
        assert (runs / "steer" / "checkpoint.npz").exists()

    def test_sweep_metrics_shape(self, runs):
        rows = _read_csv(runs / "sweep" / "metrics.csv")
        assert [r["value"] for r in rows] == ["1", "5"]
        for row in rows:
            assert row["sweep"] == "theta"
            assert row["task_metric"] == "rmse"
            assert "auc_b_sex" in row and "auc_z_sex" in row

    def test_split_seed_changes_partition_hash(self, runs):
        base = _read_csv(runs / "audit" / "metrics.csv")[0]["partition_hash"]
        other = _read_csv(runs / "audit-othersplit" / "metrics.csv")[0]["partition_hash"]
        assert base != other


class TestReportMerge:
    def test_two_audits_merge_into_matrix(self, runs, tmp_path, capsys):
        rc = main(["report", str(runs / "audit"), str(runs / "audit-lstm"),
                   "--out", str(tmp_path)])
        assert rc == 0
        text = (tmp_path / "report.txt").read_text()
        assert "probe source: hidden" in text
        assert "tcn" in text and "lstm" in text
        rows = _read_csv(tmp_path / "report.csv")
        assert len(rows) == 4
        assert {r["run"] for r in rows} == {"audit", "audit-lstm"}

    def test_mismatched_partitions_refused(self, runs, tmp_path, capsys):
        rc = main(["report", str(runs / "audit"), str(runs / "audit-othersplit"),
                   "--out", str(tmp_path)])
        assert rc == 2
        assert "refusing to merge" in capsys.readouterr().err
        rec = json.loads((tmp_path / "error.json").read_text())
        assert rec["type"] == "MergeError"
        assert not (tmp_path / "report.csv").exists()

    def test_single_run_passthrough(self, runs, tmp_path):
        rc = main(["report", str(runs / "train"), "--out", str(tmp_path)])
        assert rc == 0
        rows = _read_csv(tmp_path / "report.csv")
        assert len(rows) == 1 and rows[0]["run"] == "train"

    def test_sweep_runs_merge_sorted(self, runs, tmp_path):
        rc = main(["report", str(runs / "sweep"), "--out", str(tmp_path)])
        assert rc == 0
        text = (tmp_path / "report.txt").read_text()
        assert "steer-eval" in text and "theta" in text

    def test_unfinished_dir_rejected(self, runs, tmp_path, capsys):
        rc = main(["report", str(tmp_path), "--out", str(tmp_path)])
        assert rc == 2
        assert "manifest" in capsys.readouterr().err


class TestErrorHandling:
    def test_malformed_config_exits_2_with_record(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text('experiment = generate\nn_records = "sixty"\n')
        rc = main(["generate", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "n_records" in capsys.readouterr().err
        rec = json.loads((tmp_path / "o" / "error.json").read_text())
        assert rec["key"] == "n_records" and rec["line"] == 2

    def test_missing_dataset_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = train-task\ndataset = /nonexistent.jsonl\n")
        rc = main(["train-task", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "dataset" in capsys.readouterr().err

    def test_bad_sweep_name_exits_2(self, runs, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(
            f"experiment = steer-eval\ndataset = {runs / 'gen' / 'dataset.jsonl'}\n"
            "sweep = kappa\n")
        rc = main(["steer-eval", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "sweep" in capsys.readouterr().err

    def test_env_var_supplies_output_root(self, runs, tmp_path, monkeypatch):
        monkeypatch.setenv("STEERLAB_OUT_ROOT", str(tmp_path / "root"))
        monkeypatch.chdir(tmp_path)
        (tmp_path / "gen.cfg").write_text(GEN_CFG)
        _run("generate", "--config", tmp_path / "gen.cfg")
        assert (tmp_path / "root" / "generate" / "dataset.jsonl").exists()

    def test_no_out_and_no_env_var_fails(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv("STEERLAB_OUT_ROOT", raising=False)
        (tmp_path / "gen.cfg").write_text(GEN_CFG)
        rc = main(["generate", "--config", str(tmp_path / "gen.cfg")])
        assert rc == 2
        assert "out" in capsys.readouterr().err.lower()
