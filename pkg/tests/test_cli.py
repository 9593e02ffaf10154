"""End-to-end command-line pipeline tests on a small synthetic corpus."""

import os

import numpy as np
import pytest

from hgtul.cli import main
from hgtul.evaluation import read_report_tsv
from hgtul.training import read_history

SMALL_CONFIG = """
# quick desk-scale settings
dim = 16
layers = 2
epochs = 4
batch_size = 32
dropout = 0.1
lr_init = 5e-3
seed = 13
split_seed = 5
min_user_checkins = 10
min_poi_visits = 5
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> preprocess -> train, shared by the read-only tests below."""
    root = tmp_path_factory.mktemp("pipeline")
    cfg = root / "run.cfg"
    cfg.write_text(SMALL_CONFIG)
    corpus = root / "corpus"
    assert main([
        "synth", "--out", str(corpus), "--users", "8", "--pois", "24",
        "--weeks", "8", "--seed", "3",
    ]) == 0
    data = root / "data"
    assert main([
        "preprocess", "--input", str(corpus / "checkins.tsv"),
        "--config", str(cfg), "--out", str(data),
    ]) == 0
    run = root / "run"
    assert main([
        "train", "--data", str(data), "--config", str(cfg), "--out", str(run),
    ]) == 0
    return root, cfg, corpus, data, run


def test_preprocess_artifacts_match_truth(pipeline):
    root, cfg, corpus, data, run = pipeline
    truth_users = [l.split("\t")[0] for l in (corpus / "truth.tsv").read_text().splitlines()]
    vocab_users = [
        l.split("\t")[0] for l in (data / "vocab_user.tsv").read_text().splitlines()
    ]
    assert vocab_users == sorted(truth_users)
    manifest = (data / "manifest.tsv").read_text().splitlines()
    by_split = {"train": 0, "valid": 0, "test": 0}
    for line in manifest:
        by_split[line.split("\t")[3]] += 1
    stats = dict(
        l.split("\t") for l in (data / "stats.txt").read_text().splitlines()
    )
    assert int(stats["users"]) == len(truth_users)
    assert int(stats["train"]) == by_split["train"]
    assert int(stats["valid"]) == by_split["valid"]
    assert int(stats["test"]) == by_split["test"]


def test_preprocess_rerun_byte_identical(pipeline, tmp_path):
    root, cfg, corpus, data, run = pipeline
    again = tmp_path / "data2"
    assert main([
        "preprocess", "--input", str(corpus / "checkins.tsv"),
        "--config", str(cfg), "--out", str(again),
    ]) == 0
    for name in sorted(os.listdir(data)):
        assert (data / name).read_bytes() == (again / name).read_bytes(), name


def test_missing_input_exits_with_io_code(tmp_path):
    code = main(["preprocess", "--input", str(tmp_path / "nope.tsv"),
                 "--out", str(tmp_path / "out")])
    assert code == 11


def test_bad_config_key_exits_with_config_code(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("not_a_key = 3\n")
    code = main(["preprocess", "--input", "x", "--config", str(cfg),
                 "--out", str(tmp_path / "out")])
    assert code == 10


def test_history_capped_and_formatted(pipeline):
    root, cfg, corpus, data, run = pipeline
    history = read_history(run / "history.tsv")
    assert 1 <= len(history) <= 4
    assert [h.epoch for h in history] == list(range(1, len(history) + 1))


def test_evaluate_writes_reports(pipeline, tmp_path):
    root, cfg, corpus, data, run = pipeline
    out = tmp_path / "eval"
    assert main([
        "evaluate", "--data", str(data), "--checkpoint", str(run / "checkpoint.bin"),
        "--config", str(cfg), "--out", str(out),
    ]) == 0
    report = read_report_tsv(out / "report.tsv")
    assert ("acc@1", "all") in report
    assert report[("acc@1", "all")] <= report[("acc@5", "all")]
    assert (out / "report.txt").exists()


def test_evaluate_valid_split_matches_history(pipeline, tmp_path):
    root, cfg, corpus, data, run = pipeline
    history = read_history(run / "history.tsv")
    best = max(history, key=lambda h: h.valid_acc1)
    out = tmp_path / "eval_valid"
    assert main([
        "evaluate", "--data", str(data), "--checkpoint", str(run / "checkpoint.bin"),
        "--config", str(cfg), "--out", str(out), "--split", "valid",
    ]) == 0
    report = read_report_tsv(out / "report_valid.tsv")
    assert report[("acc@1", "all")] == best.valid_acc1


def test_variant_flag_tags_report(pipeline, tmp_path):
    root, cfg, corpus, data, run = pipeline
    out = tmp_path / "eval_h"
    assert main([
        "evaluate", "--data", str(data), "--checkpoint", str(run / "checkpoint.bin"),
        "--config", str(cfg), "--out", str(out), "--variant", "h",
    ]) == 0
    first = (out / "report.tsv").read_text().splitlines()[0]
    assert first == "# variant=H"


def test_repeat_writes_three_checkpoints_and_summary(pipeline, tmp_path):
    root, cfg, corpus, data, run = pipeline
    out = tmp_path / "rep"
    assert main([
        "train", "--data", str(data), "--config", str(cfg),
        "--out", str(out), "--repeat", "3",
    ]) == 0
    blobs = [(out / f"checkpoint_r{r}.bin").read_bytes() for r in range(3)]
    assert len({b for b in blobs}) == 3  # distinct init seeds -> distinct params
    summary = dict(
        l.split("\t") for l in (out / "summary.tsv").read_text().splitlines()
    )
    assert set(summary) == {"valid_acc1_mean", "valid_acc1_std"}


def test_checkpoint_manifest_mismatch_detected(pipeline, tmp_path):
    root, cfg, corpus, data, run = pipeline
    other_corpus = tmp_path / "corpus2"
    assert main([
        "synth", "--out", str(other_corpus), "--users", "6", "--pois", "18",
        "--weeks", "8", "--seed", "4",
    ]) == 0
    other_data = tmp_path / "data2"
    assert main([
        "preprocess", "--input", str(other_corpus / "checkins.tsv"),
        "--config", str(cfg), "--out", str(other_data),
    ]) == 0
    code = main([
        "evaluate", "--data", str(other_data),
        "--checkpoint", str(run / "checkpoint.bin"),
        "--config", str(cfg), "--out", str(tmp_path / "eval_bad"),
    ])
    assert code == 8


def test_train_rejects_wrong_artifact_version(pipeline, tmp_path):
    root, cfg, corpus, data, run = pipeline
    import shutil

    broken = tmp_path / "broken"
    shutil.copytree(data, broken)
    meta = (broken / "meta.tsv").read_text().replace(
        "format_version\t1", "format_version\t99"
    )
    (broken / "meta.tsv").write_text(meta)
    code = main(["train", "--data", str(broken), "--config", str(cfg),
                 "--out", str(tmp_path / "run2")])
    assert code == 2


def test_ablate_runs_all_variants(pipeline, tmp_path):
    root, cfg, corpus, data, run = pipeline
    out = tmp_path / "ablation"
    assert main(["ablate", "--data", str(data), "--config", str(cfg),
                 "--out", str(out)]) == 0
    rows = (out / "ablation.tsv").read_text().splitlines()
    variants = [r.split("\t")[0] for r in rows]
    assert variants == ["full", "a", "ap", "s", "l", "h", "d"]
    for v in variants:
        assert (out / f"report_{v}.tsv").exists()
        assert (out / f"checkpoint_{v}.bin").exists()
        first = (out / f"report_{v}.tsv").read_text().splitlines()[0]
        assert first == f"# variant={v.upper()}"


def test_balancing_report_reflects_traj_multiset(pipeline):
    root, cfg, corpus, data, run = pipeline
    manifest_train = {}
    for line in (data / "manifest.tsv").read_text().splitlines():
        tid, user, week, part, count = line.split("\t")
        if part == "train":
            manifest_train[int(tid)] = user
    balanced = [int(l) for l in (data / "balanced_train.tsv").read_text().split()]
    from collections import Counter

    per_user_balanced = Counter(manifest_train[t] for t in balanced)
    per_user_before = Counter(manifest_train.values())
    for line in (data / "balance_report.tsv").read_text().splitlines():
        user, before, after = line.split("\t")
        assert per_user_before[user] == int(before)
        assert per_user_balanced[user] == int(after)


def test_console_entry_point(tmp_path):
    import subprocess

    proc = subprocess.run(
        ["hgtul", "synth", "--out", str(tmp_path / "c"), "--users", "4",
         "--pois", "8", "--weeks", "2", "--seed", "1"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "c" / "checkins.tsv").exists()
