import csv
import io
import json

import numpy as np
import pytest

from peaqlab import cli, earmodel
from peaqlab.audio import Signal, save_wav
from peaqlab.evalharness import BootstrapReport
from peaqlab.mov import MOV_NAMES
from peaqlab.regression.ann import synthetic_ann
from peaqlab.synthetic import tonal_reference


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.fixture(scope="module")
def wavs(tmp_path_factory):
    d = tmp_path_factory.mktemp("wav")
    ref = tonal_reference(2.0, seed=4)
    noisy = ref + 0.03 * np.random.default_rng(0).standard_normal(ref.shape[0])
    save_wav(d / "ref.wav", Signal(ref, 48000), subtype="float32")
    save_wav(d / "ref_copy.wav", Signal(ref, 48000), subtype="float32")
    save_wav(d / "noisy.wav", Signal(noisy, 48000), subtype="float32")
    return d


def test_extract_identical_files(wavs, capsys):
    code, out, _ = run(["extract", wavs / "ref.wav", wavs / "ref_copy.wav", "--item-id", "a"], capsys)
    assert code == 0
    assert out.startswith("# manifest: ")
    (row,) = read_csv(out)
    assert row["item_id"] == "a"
    assert all(float(row[n]) <= 1e-6 for n in MOV_NAMES)


def test_extract_noise_json(wavs, capsys):
    code, out, _ = run(["extract", wavs / "ref.wav", wavs / "noisy.wav", "--format", "json"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["movs"]["RmsNoiseLoudness_A"] > 0
    assert data["manifest"]["command"] == "extract"
    assert data["manifest"]["config"]["level_dbspl"] == 92.0


def test_extract_missing_file(tmp_path, capsys):
    code, out, err = run(["extract", tmp_path / "nope.wav", tmp_path / "nope2.wav"], capsys)
    assert code == 2 and out == ""
    record = json.loads(err.strip().splitlines()[-1])
    assert record["exit_code"] == 2 and record["error"] == "FileNotFoundError"


def test_batch_extract(wavs, tmp_path, capsys):
    pairs = wavs / "pairs.csv"
    pairs.write_text("item_id,condition_id,reference,test\na,c0,ref.wav,ref_copy.wav\na,c1,ref.wav,noisy.wav\n")
    out_file = tmp_path / "features.csv"
    code, _, _ = run(["batch-extract", pairs, "-o", out_file, "--threads", "2"], capsys)
    assert code == 0
    rows = read_csv(out_file.read_text())
    assert [r["condition_id"] for r in rows] == ["c0", "c1"]
    assert float(rows[0]["RmsNoiseLoudness_A"]) <= 1e-6 < float(rows[1]["RmsNoiseLoudness_A"])
    manifest = json.loads(out_file.read_text().splitlines()[0][len("# manifest: "):])
    assert len(manifest["inputs"]) == 5 and all(len(i["sha256"]) == 64 for i in manifest["inputs"])


def test_ear_config_from_config_dir(wavs, tmp_path, monkeypatch, capsys):
    earmodel.write_config(earmodel.default_config(), tmp_path / "ear.json")
    monkeypatch.setenv(cli.CONFIG_DIR_ENV, str(tmp_path))
    code, _, _ = run(["extract", wavs / "ref.wav", wavs / "ref_copy.wav", "--ear-config", "ear.json"], capsys)
    assert code == 0
    monkeypatch.delenv(cli.CONFIG_DIR_ENV)
    code, _, err = run(["extract", wavs / "ref.wav", wavs / "ref.wav", "--ear-config", "ear.json"], capsys)
    assert code == 2 and "config file not found" in err


def test_bootstrap_smoke(synth_files, tmp_path, capsys):
    scores, features = synth_files
    code, out, _ = run(["bootstrap", scores, features, "--features", "RmsNoiseLoudAsym_A", "--iterations", 20,
                        "-o", tmp_path / "out"], capsys)
    assert code == 0
    body = json.loads((tmp_path / "out" / "bootstrap_report.json").read_text())
    assert body["schema_version"] == cli.REPORT_SCHEMA_VERSION
    assert body["manifest"]["command"] == "bootstrap"
    (rep,) = body["reports"]
    assert all(np.isfinite(v) for v in rep["means"].values())
    assert all(np.isfinite(v) and v >= 0 for v in rep["ci95"].values())
    table = (tmp_path / "out" / "table.csv").read_text()
    assert table.startswith("# manifest: ")
    (row,) = read_csv(table)
    assert row["feature_set"] == "RmsNoiseLoudAsym_A" and float(row["all_R_pm"]) > 0.5
    assert "All Samples R_pm" in out


def _bootstrap_bytes(synth_files, outdir, capsys, threads=1):
    scores, features = synth_files
    argv = ["bootstrap", scores, features, "--features", "informative", "--features", "noise,AvgLinDist_A",
            "--content", "music", "--content", "all", "--iterations", 1, "--seed", 7, "--threads", threads,
            "--figure-data", "-o", outdir]
    assert run(argv, capsys)[0] == 0
    return {p.name: p.read_bytes() for p in sorted(outdir.iterdir())}


def test_bootstrap_byte_identical(synth_files, tmp_path, capsys):
    a = _bootstrap_bytes(synth_files, tmp_path / "a", capsys)
    b = _bootstrap_bytes(synth_files, tmp_path / "b", capsys)
    c = _bootstrap_bytes(synth_files, tmp_path / "c", capsys, threads=2)
    assert a == b == c
    assert "scatter_all_informative.csv" in a


def test_bootstrap_unknown_feature(synth_files, tmp_path, capsys):
    scores, features = synth_files
    code, _, err = run(["bootstrap", scores, features, "--features", "nonexistent", "--iterations", 1,
                        "-o", tmp_path / "x"], capsys)
    assert code == 2
    assert json.loads(err.strip().splitlines()[-1])["error"] == "FeatureMismatch"
    assert not (tmp_path / "x" / "bootstrap_report.json").exists()


def test_bootstrap_with_ann_di(synth_files, tmp_path, capsys):
    scores, features = synth_files
    ann = synthetic_ann(MOV_NAMES, seed=2)
    (tmp_path / "ann.json").write_text(json.dumps(ann.to_dict()))
    code, _, _ = run(["bootstrap", scores, features, "--ann-weights", tmp_path / "ann.json",
                      "--features", cli.DI_FEATURE, "--iterations", 3, "-o", tmp_path / "o"], capsys)
    assert code == 0
    body = json.loads((tmp_path / "o" / "bootstrap_report.json").read_text())
    assert body["reports"][0]["feature_set"] == [cli.DI_FEATURE]
    assert len(body["manifest"]["inputs"]) == 3


def test_train_writes_model_and_predictions(synth_files, tmp_path, capsys):
    scores, features = synth_files
    code, _, _ = run(["train", scores, features, "--features", "informative,noise", "--content", "speech",
                      "-o", tmp_path / "model.json", "--predictions", tmp_path / "pred.csv"], capsys)
    assert code == 0
    body = json.loads((tmp_path / "model.json").read_text())
    assert body["model"]["format"] == "peaqlab.mars/1"
    assert body["manifest"]["config"]["content"] == "speech"
    assert len(read_csv((tmp_path / "pred.csv").read_text())) == 108


def _report(features, content, rp, aes_value):
    return BootstrapReport(tuple(features), content, 100, 80, 20, 10, {"R_p": rp, "R_s": rp, "AES": aes_value},
                           {"R_p": 0.01, "R_s": 0.01, "AES": 0.1})


def _write_report(path, reports, version=1):
    body = {"schema_version": version, "manifest": {}, "reports": [r.to_dict() for r in reports]}
    path.write_text(json.dumps(body))
    return path


def test_report_layout(tmp_path, capsys):
    reports = [_report(["a"], c, 0.5, 2.0) for c in ("music", "speech", "all")]
    reports += [_report(["b", "c"], c, 0.9, 1.0) for c in ("music", "speech", "all")]
    path = _write_report(tmp_path / "r.json", reports)
    code, out, _ = run(["report", path, "--format", "markdown"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    header = [c.strip() for c in lines[0].strip("|").split("|")]
    assert header[1:] == ["Music Only R_pm", "Music Only AES_m", "Speech Only R_pm", "Speech Only AES_m",
                          "All Samples R_pm", "All Samples AES_m"]
    body = lines[2:]
    assert len(body) == 2
    assert body[1].startswith("| b + c |")
    # the multi-feature row is never bolded even though it is better
    assert "**" not in body[1] and body[0].count("**") == 12


def test_report_one_bold_per_column_with_ties(tmp_path, capsys):
    reports = []
    for name, rp, err in (("x", 0.7, 1.5), ("y", 0.8, 1.5), ("z", 0.8, 1.2)):
        reports += [_report([name], c, rp, err) for c in ("music", "speech", "all")]
    marked = cli.bold_cells(reports)
    for content in ("music", "speech", "all"):
        for metric in ("R_p", "AES"):
            winners = [row for row, c, m in marked if c == content and m == metric]
            assert len(winners) == 1
        assert ((("y",), content, "R_p")) in marked  # tie with z goes to the earlier row
        assert ((("z",), content, "AES")) in marked
    path = _write_report(tmp_path / "r.json", reports)
    code, out, _ = run(["report", path], capsys)
    assert code == 0
    assert out.count("**") == 2 * 6


def test_report_newer_schema(tmp_path, capsys):
    path = _write_report(tmp_path / "r.json", [_report(["a"], "all", 0.5, 2.0)], version=99)
    code, _, err = run(["report", path], capsys)
    assert code == 2
    assert json.loads(err.strip())["error"] == "SchemaVersionMismatch"


def test_report_csv(tmp_path, capsys):
    path = _write_report(tmp_path / "r.json", [_report(["a"], "all", 0.5, 2.0)])
    code, out, _ = run(["report", path, "--format", "csv"], capsys)
    assert code == 0
    (row,) = read_csv(out)
    assert float(row["all_R_pm"]) == 0.5 and float(row["all_AES_m_ci95"]) == 0.1


def test_internal_error_exit_code(synth_files, tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise RuntimeError("kaboom")

    monkeypatch.setattr(cli, "bootstrap_run", boom)
    scores, features = synth_files
    code, _, err = run(["bootstrap", scores, features, "--iterations", 1, "-o", tmp_path / "o"], capsys)
    assert code == 1
    assert json.loads(err.strip())["message"] == "kaboom"


def test_failed_run_leaves_existing_output_untouched(synth_files, tmp_path, capsys):
    out = tmp_path / "model.json"
    out.write_text("previous")
    scores, features = synth_files
    code, _, _ = run(["train", scores, features, "--features", "bogus", "-o", out], capsys)
    assert code == 2
    assert out.read_text() == "previous"
    assert [p.name for p in tmp_path.iterdir()] == ["model.json"]


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["bootstrap"])
    assert exc.value.code == 2
