import json
import os
import sys

import pytest

sys.path.append("../")

from omi_rdsgan import __version__
from omi_rdsgan._exit_code import exit_codes
from omi_rdsgan.cli import run

from test.mock.mock_corpus import write_run_config

SYNTH_ARGS = ["--n-relations", "4", "--n-pairs", "16", "--n-test-pairs", "10", "--vocab-size", "20",
              "--instances-per-bag", "3", "--noise-rate", "0.2", "--sentence-len", "12"]


@pytest.fixture(scope='module')
def workspace(request, tmpdir_factory):
    root = str(tmpdir_factory.mktemp("cli"))
    data = os.path.join(root, "data")
    assert run(["synth", "--output-dir", data, "--seed", "3"] + SYNTH_ARGS) == exit_codes.OK
    config = write_run_config(root, os.path.join(data, "train.jsonl"), os.path.join(data, "test.jsonl"),
                              model={"max_len": 12})

    def teardown_module():
        print("teardown_module called.")

    request.addfinalizer(teardown_module)
    return root, data, config


def _read(path, mode="r"):
    with open(path, mode) as fp:
        return fp.read()


def test_synth_writes_corpus_and_sidecars(workspace):
    _, data, _ = workspace
    for name in ("train.jsonl", "test.jsonl", "train.noise.jsonl", "test.noise.jsonl", "relation2id.txt",
                 "synth.json"):
        assert os.path.exists(os.path.join(data, name)), name
    train_lines = _read(os.path.join(data, "train.jsonl")).splitlines()
    noise_lines = _read(os.path.join(data, "train.noise.jsonl")).splitlines()
    assert len(train_lines) == len(noise_lines) == 16 * 3
    assert json.loads(noise_lines[0])["index"] == 0
    assert _read(os.path.join(data, "relation2id.txt")).splitlines()[0] == "NA 0"


def test_synth_is_deterministic(workspace, tmpdir):
    _, data, _ = workspace
    again = os.path.join(str(tmpdir), "again")
    assert run(["synth", "--output-dir", again, "--seed", "3"] + SYNTH_ARGS) == exit_codes.OK
    assert _read(os.path.join(again, "train.jsonl"), "rb") == _read(os.path.join(data, "train.jsonl"), "rb")


def test_train_eval_generate(workspace, capsys):
    root, _, config = workspace
    run_dir = os.path.join(root, "run")
    assert run(["train", "--config", config]) == exit_codes.OK
    for name in ("config.json", "vocab.json", "checkpoint.bin", "train_log.jsonl", "manifest.json"):
        assert os.path.exists(os.path.join(run_dir, name)), name

    records = [json.loads(line) for line in _read(os.path.join(run_dir, "train_log.jsonl")).splitlines()]
    assert len(records) == 3 * 3
    assert [r["phase"] for r in records[:3]] == ["discriminator", "generator_adv", "generator_rank"]

    manifest = json.loads(_read(os.path.join(run_dir, "manifest.json")))
    assert manifest["package_version"] == __version__
    assert manifest["checkpoint_format_version"] == 1
    assert manifest["seed"] == 0
    assert len(manifest["corpora"]) == 2

    capsys.readouterr()
    assert run(["eval", "--run-dir", run_dir, "--attention"]) == exit_codes.OK
    printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    metrics = json.loads(_read(os.path.join(run_dir, "metrics.json")))
    assert printed == metrics
    assert set(metrics["p_at"]) == {"100", "200", "300"}
    assert 0.0 <= metrics["auc"] <= 1.0
    assert _read(os.path.join(run_dir, "pr_curve.csv")).startswith("rank,score,precision,recall\n")

    out = os.path.join(root, "gen.jsonl")
    assert run(["generate", "--run-dir", run_dir, "--output", out, "--threads", "2"]) == exit_codes.OK
    generated = [json.loads(line) for line in _read(out).splitlines()]
    assert generated
    assert all(1 <= g["rank"] <= g["bag_size"] for g in generated)


def _jsonl_to_nyt(src, dst):
    with open(src, encoding="utf-8") as fp, open(dst, "w", encoding="utf-8") as out:
        for line in fp:
            record = json.loads(line)
            fields = [record["head_id"], record["tail_id"], record["head"], record["tail"], record["relation"]]
            out.write("\t".join(fields + [" ".join(record["tokens"]), "###END###"]) + "\n")


def test_pipeline_ranks_test_facts_above_chance(tmpdir, capsys):
    root = str(tmpdir)
    data = os.path.join(root, "data")
    assert run(["synth", "--output-dir", data, "--seed", "5", "--n-relations", "4", "--n-pairs", "40",
                "--n-test-pairs", "20", "--vocab-size", "20", "--instances-per-bag", "3", "--noise-rate", "0.0",
                "--sentence-len", "12"]) == exit_codes.OK
    corpora = []
    for split in ("train", "test"):
        nyt = os.path.join(root, f"{split}.txt")
        _jsonl_to_nyt(os.path.join(data, f"{split}.jsonl"), nyt)
        corpora.append(os.path.join(root, f"{split}.converted.jsonl"))
        assert run(["convert", "--input", nyt, "--output", corpora[-1]]) == exit_codes.OK

    config = write_run_config(
        root, corpora[0], corpora[1], model={"max_len": 12, "filters": 32, "dropout": 0.0},
        train=dict(outer_iterations=300, batch_size=160, lr_g=0.05, lr_d=1e-2, lambda1=0.1, lambda2=10.0,
                   gen_in_class_loss=False))
    run_dir = os.path.join(root, "run")
    assert run(["train", "--config", config]) == exit_codes.OK
    capsys.readouterr()
    assert run(["eval", "--run-dir", run_dir]) == exit_codes.OK
    metrics = json.loads(_read(os.path.join(run_dir, "metrics.json")))
    assert metrics["auc"] > 0.5
    assert run(["generate", "--run-dir", run_dir]) == exit_codes.OK
    assert os.path.exists(os.path.join(run_dir, "generated.jsonl"))


def test_training_twice_gives_identical_checkpoints(workspace):
    root, _, config = workspace
    dirs = [os.path.join(root, f"repeat{i}") for i in range(2)]
    for d in dirs:
        assert run(["train", "--config", config, "--output-dir", d, "--seed", "11"]) == exit_codes.OK
    assert _read(os.path.join(dirs[0], "checkpoint.bin"), "rb") == _read(os.path.join(dirs[1], "checkpoint.bin"), "rb")
    assert _read(os.path.join(dirs[0], "train_log.jsonl"), "rb") == _read(os.path.join(dirs[1], "train_log.jsonl"),
                                                                           "rb")
    assert json.loads(_read(os.path.join(dirs[0], "manifest.json")))["seed"] == 11


def test_eval_without_checkpoint_is_a_usage_error(workspace, capsys):
    root, _, config = workspace
    run_dir = os.path.join(root, "no_ckpt")
    assert run(["train", "--config", config, "--output-dir", run_dir]) == exit_codes.OK
    os.remove(os.path.join(run_dir, "checkpoint.bin"))
    capsys.readouterr()
    assert run(["eval", "--run-dir", run_dir]) == exit_codes.USAGE_ERROR
    assert "checkpoint not found" in capsys.readouterr().err


def test_corrupt_checkpoint_is_a_data_error(workspace, tmpdir):
    root, _, config = workspace
    run_dir = os.path.join(str(tmpdir), "corrupt")
    assert run(["train", "--config", config, "--output-dir", run_dir]) == exit_codes.OK
    path = os.path.join(run_dir, "checkpoint.bin")
    payload = _read(path, "rb")
    with open(path, "wb") as fp:
        fp.write(payload[:-9])
    assert run(["eval", "--run-dir", run_dir]) == exit_codes.DATA_ERROR


def test_bad_config_is_a_usage_error(tmpdir, capsys):
    path = os.path.join(str(tmpdir), "bad.json")
    with open(path, "w", encoding="utf-8") as fp:
        json.dump({"train_corpus": "x.jsonl", "train": {"lr_g": -1}}, fp)
    assert run(["train", "--config", path]) == exit_codes.USAGE_ERROR
    assert "invalid RunConfigFile" in capsys.readouterr().err
    assert run(["train", "--config", os.path.join(str(tmpdir), "absent.json")]) == exit_codes.USAGE_ERROR


def test_missing_corpus_is_a_data_error(tmpdir):
    config = write_run_config(str(tmpdir), os.path.join(str(tmpdir), "absent.jsonl"))
    assert run(["train", "--config", config]) == exit_codes.DATA_ERROR


def test_gradcheck_command(capsys):
    assert run(["gradcheck", "--suite", "core", "--suite", "encoder"]) == exit_codes.OK
    results = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert set(results) == {"core", "encoder"}
    assert all(v < 1e-5 for v in results.values())


def test_parser_errors_and_help(capsys):
    assert run(["--help"]) == exit_codes.OK
    assert "gradcheck" in capsys.readouterr().out

    assert run(["train"]) == exit_codes.USAGE_ERROR
    assert "error:" in capsys.readouterr().err

    assert run(["eval", "--run-dir", ".", "--threads", "0"]) == exit_codes.USAGE_ERROR
    assert "--threads must be at least 1" in capsys.readouterr().err


if __name__ == "__main__":
    pytest.main(["test_integration_cli.py"])
