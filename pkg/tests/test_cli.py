import json
from pathlib import Path

import numpy as np
import pytest

from pvanomaly.attacks import AttackLabels
from pvanomaly.cli import main
from pvanomaly.evaluation import REPORT_COLUMNS
from pvanomaly.pipeline import MANIFEST, read_manifest, write_manifest

SMALL = {"seed": 5, "n_houses": 4, "days": 3}

# m1 has rank 4, so --pca-dims 5 is trimmed with a warning
pytestmark = pytest.mark.filterwarnings("ignore::pvanomaly.errors.RankDeficientWarning")


def _json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def normal(work):
    assert main(["simulate", "-c", str(_json(work / "sc.json", SMALL)), "-o", str(work / "normal")]) == 0
    return work / "normal"


@pytest.fixture(scope="module")
def attacked(work, normal):
    cfg = _json(work / "at.json", {"seed": 2, "four_attack_day": 2})
    assert main(["attack", "-i", str(normal), "-c", str(cfg), "-o", str(work / "attacked")]) == 0
    return work / "attacked"


@pytest.fixture(scope="module")
def models(work, normal):
    out = work / "models"
    assert main(["train", "-i", str(normal), "-o", str(out), "-d", "pca-ch", "--pca-dims", "5",
                 "--train-days", "2"]) == 0
    return out


def _detect_and_evaluate(models, data, out, *extra):
    assert main(["detect", "-m", str(models), "-i", str(data), "-o", str(out / "det"), *extra]) == 0
    return main(["evaluate", "-i", str(out / "det"), "-o", str(out / "ev"), "--timing", "none"])


def test_simulate_outputs(normal):
    names = sorted(p.name for p in normal.iterdir())
    assert names == sorted(["house_0.csv", "house_1.csv", "house_2.csv", "house_3.csv", "node.csv",
                            "labels.csv", "scenario.json", MANIFEST])
    m = read_manifest(normal, "simulate")
    assert m["seeds"] == {"scenario": 5}
    assert m["tool"] == "pvanomaly"


def test_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 1,\n  "days": }')
    assert main(["simulate", "-c", str(bad), "-o", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "column 11" in err


def test_missing_seed(tmp_path, capsys):
    assert main(["simulate", "-c", str(_json(tmp_path / "s.json", {"days": 1})), "-o", str(tmp_path / "o")]) == 2
    assert "seed" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_config(tmp_path):
    assert main(["simulate", "-c", str(tmp_path / "nope.json"), "-o", str(tmp_path / "o")]) == 2


def test_power_flow_divergence(tmp_path):
    cfg = _json(tmp_path / "s.json", {"seed": 1, "days": 1, "feeder": {"series_impedance": [2.0, 4.0]}})
    assert main(["simulate", "-c", str(cfg), "-o", str(tmp_path / "o")]) == 3


def test_attack_labels_every_house(tmp_path, normal):
    cfg = _json(tmp_path / "a.json", {"seed": 1, "kind": "disconnect", "intervals": [[1320, 1350]]})
    assert main(["attack", "-i", str(normal), "-c", str(cfg), "-o", str(tmp_path / "a")]) == 0
    labels = AttackLabels.from_csv(tmp_path / "a" / "labels.csv")
    assert labels.attacked[:, 1320:1350].all()
    assert labels.attacked.sum() == 4 * 30
    m = read_manifest(tmp_path / "a", "attack")
    assert Path(m["parents"]["normal"]) == normal.resolve()
    assert m["scenario_sha256"] == read_manifest(normal)["scenario_sha256"]


def test_attack_interval_out_of_range(tmp_path, normal):
    cfg = _json(tmp_path / "a.json", {"seed": 1, "kind": "disconnect", "intervals": [[4300, 4400]]})
    assert main(["attack", "-i", str(normal), "-c", str(cfg), "-o", str(tmp_path / "a")]) == 4


def test_attack_needs_manifest(tmp_path, normal):
    cfg = _json(tmp_path / "a.json", {"seed": 1, "kind": "disconnect", "intervals": [[0, 1]]})
    assert main(["attack", "-i", str(tmp_path), "-c", str(cfg), "-o", str(tmp_path / "a")]) == 2


def test_attack_quarter_penetration(tmp_path):
    cfg = _json(tmp_path / "s.json", {"seed": 3, "n_houses": 20, "days": 1})
    assert main(["simulate", "-c", str(cfg), "-o", str(tmp_path / "n")]) == 0
    at = _json(tmp_path / "a.json", {"seed": 4, "kind": "reverse_power_flow", "intervals": [[720, 750]]})
    assert main(["attack", "-i", str(tmp_path / "n"), "-c", str(at), "-o", str(tmp_path / "a"),
                 "--penetration", "0.25"]) == 0
    # PV voltage and current move everywhere once the feeder is re-solved; net power only where attacked
    changed = []
    for h in range(20):
        before = np.loadtxt(tmp_path / "n" / f"house_{h}.csv", delimiter=",", skiprows=1)[:, 6:8]
        after = np.loadtxt(tmp_path / "a" / f"house_{h}.csv", delimiter=",", skiprows=1)[:, 6:8]
        if not np.array_equal(before, after):
            changed.append(h)
    labels = AttackLabels.from_csv(tmp_path / "a" / "labels.csv")
    assert len(changed) == 5
    assert sorted(np.flatnonzero(labels.attacked.any(axis=1))) == changed


def test_train_detect_evaluate_shapes(tmp_path, models, attacked):
    assert _detect_and_evaluate(models, attacked, tmp_path) == 0
    lines = (tmp_path / "ev" / "report.csv").read_text().splitlines()
    assert len(lines) == 6
    header = lines[0].split(",")
    assert header == list(REPORT_COLUMNS) and len(header[1:]) == 5
    assert (tmp_path / "ev" / "roc_pca-ch.csv").exists()
    assert (tmp_path / "ev" / "roc_pca-ch.svg").exists()
    scores = (tmp_path / "det" / "scores.csv").read_text().splitlines()
    assert scores[0] == "timestamp,house_id,m1_score,m2_score,m3_score,fused_score,decision"
    th = json.loads((tmp_path / "det" / "thresholds.json").read_text())
    assert th["orientation"] == "high"


def test_models_written_per_group(models, normal):
    names = {p.name for p in models.iterdir()}
    assert "m3.json" in names and "models.json" in names
    pv = json.loads((models / "models.json").read_text())["houses"]
    assert names >= {f"m{g}_house{h}.json" for g in (1, 2) for h in pv}
    m = read_manifest(models, "train")
    assert m["hyperparameters"]["pca_dims"] == 5
    assert m["detector"] == "pca-ch"


def test_every_artifact_in_manifest(tmp_path, models, attacked, normal):
    _detect_and_evaluate(models, attacked, tmp_path)
    for d in (normal, attacked, models, tmp_path / "det", tmp_path / "ev"):
        files = {p.name for p in d.iterdir() if p.is_file()}
        m = json.loads((d / MANIFEST).read_text())
        assert set(m["outputs"]) == files - {MANIFEST}
        assert [p.name for p in d.iterdir()].count(MANIFEST) == 1


def test_linear_fusion_and_weights(tmp_path, models, attacked):
    assert _detect_and_evaluate(models, attacked, tmp_path, "--fusion", "linear", "--weights", "1,0,0") == 0
    th = json.loads((tmp_path / "det" / "thresholds.json").read_text())
    assert th["fusion"] == "linear" and th["weights"] == [1.0, 0.0, 0.0]
    assert main(["detect", "-m", str(models), "-i", str(attacked), "-o", str(tmp_path / "x"),
                 "--fusion", "linear", "--weights", "1,0"]) == 2


def test_detect_schema_mismatch(tmp_path, models, attacked):
    import shutil

    bad = tmp_path / "models"
    shutil.copytree(models, bad)
    doc = json.loads((bad / "m3.json").read_text())
    doc["n_channels"] = 3
    (bad / "m3.json").write_text(json.dumps(doc))
    # stale manifest: the tampered file no longer matches its hash
    assert main(["detect", "-m", str(bad), "-i", str(attacked), "-o", str(tmp_path / "d")]) == 5
    meta = read_manifest(models)
    write_manifest(bad, "train", {"data": Path(meta["parents"]["data"])}, detector="pca-ch")
    assert main(["detect", "-m", str(bad), "-i", str(attacked), "-o", str(tmp_path / "d")]) == 5


def test_detect_model_version_mismatch(tmp_path, models, attacked):
    import shutil

    bad = tmp_path / "models"
    shutil.copytree(models, bad)
    doc = json.loads((bad / "m3.json").read_text())
    doc["model"]["version"] = 2
    (bad / "m3.json").write_text(json.dumps(doc))
    write_manifest(bad, "train", {"data": Path(read_manifest(models)["parents"]["data"])}, detector="pca-ch")
    assert main(["detect", "-m", str(bad), "-i", str(attacked), "-o", str(tmp_path / "d")]) == 5


def test_evaluate_all_normal(tmp_path, models, normal, capsys):
    assert _detect_and_evaluate(models, normal, tmp_path) == 6
    assert "attacked" in capsys.readouterr().err


def test_window_min_validation(tmp_path, normal):
    assert main(["train", "-i", str(normal), "-o", str(tmp_path / "m"), "-d", "nn", "--window-min", "0"]) == 2


def test_unknown_detector_rejected(normal, tmp_path):
    with pytest.raises(SystemExit) as ei:
        main(["train", "-i", str(normal), "-o", str(tmp_path / "m"), "-d", "knn"])
    assert ei.value.code == 2


def test_report_is_reproducible(tmp_path, work, attacked):
    reports = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["train", "-i", str(work / "normal"), "-o", str(out / "m"), "-d", "ocsvm",
                     "--train-days", "2", "--seed", "4"]) == 0
        assert _detect_and_evaluate(out / "m", attacked, out) == 0
        reports.append((out / "ev" / "report.csv").read_bytes())
    assert reports[0] == reports[1]


def test_evaluate_writes_timing(tmp_path, models, attacked):
    assert main(["detect", "-m", str(models), "-i", str(attacked), "-o", str(tmp_path / "det")]) == 0
    assert main(["evaluate", "-i", str(tmp_path / "det"), "-o", str(tmp_path / "ev")]) == 0
    lines = (tmp_path / "ev" / "timing.csv").read_text().splitlines()
    assert lines[0] == "detector,train_us_per_sample,test_us_per_sample"
    assert lines[1].startswith("pca-ch,")
    assert (tmp_path / "ev" / "timing.svg").exists()
