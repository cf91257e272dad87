import hashlib
import json
import subprocess
import sys

import pytest

from ttma.cli import cap_test, main

SMALL = """\
[dataset]
preset = confusion-similarity
samples_per_class = 60
test_fraction = 0.25
[train]
epochs = 15
[ttma]
k = 6
[baselines]
passes = 8
"""


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    lines = [json.loads(line) for line in out.splitlines() if line.startswith("{")]
    return code, lines, err


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return path


@pytest.fixture
def trained(tmp_path, config, capsys):
    out = tmp_path / "run"
    out.mkdir()
    assert run(capsys, "gen", "--config", config, "--out", out)[0] == 0
    assert run(capsys, "train", "--config", config, "--out", out)[0] == 0
    return out


def test_gen_writes_manifest_and_echoes_config(tmp_path, config, capsys):
    code, lines, _ = run(capsys, "gen", "--config", config, "--out", tmp_path, "--seed", 11)
    assert code == 0
    assert lines[0]["command"] == "gen"
    assert lines[0]["config"]["run"]["seed"] == "11"
    assert lines[0]["config"]["ttma"]["alpha"] == "0.2"
    assert lines[1]["result"]["classes"] == 4
    assert lines[1]["result"]["spec"]["name"] == "confusion-similarity"
    assert (tmp_path / "dataset.manifest").exists() and (tmp_path / "dataset.bin").exists()


def test_gen_rerun_is_byte_identical(tmp_path, config, capsys):
    run(capsys, "gen", "--config", config, "--out", tmp_path)
    first = sha(tmp_path / "dataset.bin")
    run(capsys, "gen", "--config", config, "--out", tmp_path)
    assert sha(tmp_path / "dataset.bin") == first


def test_gen_missing_output_dir(tmp_path, config, capsys):
    code, _, err = run(capsys, "gen", "--config", config, "--out", tmp_path / "nope")
    assert code == 3
    assert "I/O" in err


def test_train_blobs_defaults(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("UQ_DATASET_PRESET", "blobs")
    monkeypatch.setenv("UQ_DATASET_SAMPLES_PER_CLASS", "100")
    assert run(capsys, "gen", "--out", tmp_path)[0] == 0
    code, lines, _ = run(capsys, "train", "--out", tmp_path)
    assert code == 0
    assert lines[0]["config"]["dataset"]["preset"] == "blobs"
    assert lines[1]["result"]["train_accuracy"] >= 0.9
    first = sha(tmp_path / "weights.bin")
    run(capsys, "train", "--out", tmp_path)
    assert sha(tmp_path / "weights.bin") == first


def test_train_corrupt_dataset(tmp_path, config, capsys):
    (tmp_path / "dataset.manifest").write_text("garbage")
    assert run(capsys, "train", "--config", config, "--out", tmp_path)[0] == 3


def test_train_missing_dataset(tmp_path, config, capsys):
    assert run(capsys, "train", "--config", config, "--out", tmp_path)[0] == 3


def test_train_divergence_exit_4(tmp_path, config, capsys, monkeypatch):
    run(capsys, "gen", "--config", config, "--out", tmp_path)
    monkeypatch.setenv("UQ_TRAIN_LEARNING_RATE", "1e6")
    assert run(capsys, "train", "--config", config, "--out", tmp_path)[0] == 4


def test_bad_config_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[ttma]\nk = -1\n")
    assert run(capsys, "gen", "--config", path, "--out", tmp_path)[0] == 2
    assert run(capsys, "gen", "--config", tmp_path / "missing.ini", "--out", tmp_path)[0] == 2


def test_estimate_row_counts(trained, config, capsys, monkeypatch):
    monkeypatch.setenv("UQ_DATASET_MAX_TEST", "50")
    code, lines, _ = run(capsys, "estimate", "ttma-du", "--config", config, "--out", trained)
    assert code == 0 and lines[1]["result"]["rows"] == 50
    code, lines, _ = run(capsys, "estimate", "ttma-cdu", "--config", config, "--out", trained)
    assert code == 0 and lines[1]["result"]["rows"] == 200
    assert len((trained / "records_ttma_cdu.csv").read_text().splitlines()) == 201


def test_estimate_unknown_method(trained, config, capsys):
    code, _, err = run(capsys, "estimate", "bogus", "--config", config, "--out", trained)
    assert code == 2
    assert "usage" in err


def test_estimate_missing_weights(tmp_path, config, capsys):
    run(capsys, "gen", "--config", config, "--out", tmp_path)
    assert run(capsys, "estimate", "tta", "--config", config, "--out", tmp_path)[0] == 3


def test_reports(trained, config, capsys):
    for method in ("ttma-du", "ttma-cdu", "tta", "mcdo"):
        assert run(capsys, "estimate", method, "--config", config, "--out", trained)[0] == 0
    du = trained / "records_ttma_du.csv"

    assert run(capsys, "report", "curve", du, "--config", config, "--out", trained)[0] == 0
    rows = (trained / "curve_ttma_du.csv").read_text().splitlines()
    assert rows[0] == "rate,accuracy,retained"
    assert [round(float(r.split(",")[0]), 2) for r in rows[1:]] == [round(0.05 * i, 2) for i in range(20)]

    assert run(capsys, "report", "ece", du, "--config", config, "--out", trained)[0] == 0
    doc = json.loads((trained / "ece_ttma_du.json").read_text())
    assert isinstance(doc["ece"], float) and len(doc["bins"]) == 10
    assert "vote fraction" in doc["confidence"]

    assert run(capsys, "report", "hist", du, "--config", config, "--out", trained)[0] == 0
    assert (trained / "hist_ttma_du.csv").exists()

    code, lines, _ = run(capsys, "report", "matrix", trained / "records_ttma_cdu.csv", "--out", trained)
    assert code == 0
    assert len((trained / "matrix.csv").read_text().splitlines()) == 5

    code, lines, _ = run(capsys, "report", "summary", du, trained / "records_tta.csv",
                         trained / "records_mcdo.csv", "--config", config, "--out", trained)
    assert code == 0
    summary = json.loads((trained / "summary.json").read_text())
    assert set(summary["methods"]) == {"ttma_du", "tta", "mcdo", "single"}
    assert all("ece" in s for s in summary["methods"].values())
    assert summary["config"]["ttma"]["k"] == "6"
    assert "curve" in summary["methods"]["ttma_du"] and "curve" not in summary["methods"]["single"]


def test_report_empty_records(tmp_path, capsys):
    from ttma.records import COLUMNS
    path = tmp_path / "empty.csv"
    path.write_text(",".join(COLUMNS) + "\n")
    assert run(capsys, "report", "curve", path, "--out", tmp_path)[0] == 2


def test_report_missing_records(tmp_path, capsys):
    assert run(capsys, "report", "curve", tmp_path / "nope.csv", "--out", tmp_path)[0] == 3


def test_report_matrix_needs_cdu(trained, config, capsys):
    run(capsys, "estimate", "tta", "--config", config, "--out", trained)
    assert run(capsys, "report", "matrix", trained / "records_tta.csv", "--out", trained)[0] == 2


def test_outputs_independent_of_workers(tmp_path, config, capsys):
    digests = []
    for workers in (1, 4):
        out = tmp_path / f"w{workers}"
        out.mkdir()
        run(capsys, "gen", "--config", config, "--out", out)
        run(capsys, "train", "--config", config, "--out", out)
        for method in ("ttma-du", "ttma-cdu", "tta", "mcdo"):
            run(capsys, "estimate", method, "--config", config, "--out", out, "--workers", workers)
        run(capsys, "report", "curve", out / "records_ttma_du.csv", "--config", config, "--out", out)
        digests.append({p.name: sha(p) for p in sorted(out.glob("*.csv"))})
    assert digests[0] == digests[1]
    assert len(digests[0]) >= 5


def test_cap_test_round_robin(tmp_path):
    from conftest import gaussian_dataset
    ds = gaussian_dataset([[0, 0], [1, 1], [2, 2]], 10)
    capped = cap_test(ds, 7)
    assert len(capped) == 7
    assert sorted(capped.labels.tolist()) == [0, 0, 0, 1, 1, 2, 2]
    assert list(capped.ids) == sorted(capped.ids)


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "ttma.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "estimate" in proc.stdout
