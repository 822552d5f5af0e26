import json
import os

import pytest

from okounkov_lab.cli import main
from okounkov_lab.config import ConfigError, load_config
from okounkov_lab.runner import shipped_configs, verify


def files(d):
    return sorted(os.listdir(d))


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_config(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


def test_body_run(workdir, capsys):
    assert main(["body", "--variety", "p2:1", "--flag", "coord", "--kmax", "3", "--out", "body.json"]) == 0
    rep = json.loads((workdir / "body.json").read_text())
    case = rep["results"]["cases"][0]
    assert case["body"]["vertices"] == [["0", "0"], ["1", "0"], ["0", "1"]]
    assert rep["verdict"] == "pass"
    assert (workdir / "graded_points_0.csv").read_text().startswith("# manifest {")
    assert "PASS body" in capsys.readouterr().out


def test_chebyshev_run(workdir):
    argv = ["chebyshev", "--variety", "p1:1", "--weight", "fs", "--kladder", "16,32,64,128", "--out", "cheb.json"]
    assert main(argv) == 0
    assert {"cheb.csv", "convergence.json", "cheb.json", "manifest.json"} <= set(files(workdir))
    conv = json.loads((workdir / "convergence.json").read_text())
    assert conv["manifest"]["config_hash"].startswith("sha256:")


def test_custom_report_name_prefixes_siblings(workdir):
    assert main(["d1demo", "--out", "out/demo.json"]) == 0
    assert "demo_hinge.csv" in files(workdir / "out")


@pytest.mark.parametrize(
    "argv,pointer",
    [
        (["body", "--variety", "p2:1", "--kmax", "-1"], "/cases/0/kmax"),
        (["chebyshev", "--variety", "p1:1", "--weight", "fs", "--kladder", "16,-2"], "/kladder/1"),
        (["geodesic", "--resolution", "1"], "/resolution"),
    ],
)
def test_invalid_config_exits_1_without_artifacts(workdir, capsys, argv, pointer):
    assert main(argv + ["--out", "runs"]) == 1
    assert not (workdir / "runs").exists()
    assert f"config error at {pointer}" in capsys.readouterr().err


def test_unknown_config_key_and_missing_file(workdir, capsys):
    path = write_config(workdir / "c.json", {"experiment": "d1demo", "resolutoin": 64})
    assert main(["d1demo", "--config", path]) == 1
    assert main(["d1demo", "--config", "nope.json"]) == 1
    err = capsys.readouterr().err
    assert "resolutoin" in err and "cannot read config" in err


def test_config_kind_mismatch(workdir, capsys):
    path = write_config(workdir / "c.json", {"experiment": "d1demo"})
    assert main(["geodesic", "--config", path]) == 1
    assert "/experiment" in capsys.readouterr().err


def test_usage_error_exits_1():
    with pytest.raises(SystemExit) as exc:
        main(["chebyshev", "--kladder", "a,b"])
    assert exc.value.code == 1


def test_runtime_spec_error_exits_1(workdir, capsys):
    assert main(["chebyshev", "--variety", "p1:1", "--weight", "nonsense", "--kladder", "4,8"]) == 1
    assert "error" in capsys.readouterr().err


def test_config_hash_ignores_runtime_keys():
    a = load_config({"experiment": "d1demo", "threads": 4, "svg": True, "out": "x"})
    b = load_config({"experiment": "d1demo"})
    assert a.hash == b.hash and a.threads == 4
    assert load_config({"experiment": "d1demo", "seed": 3}).hash != b.hash


def test_config_error_carries_pointer():
    with pytest.raises(ConfigError) as exc:
        load_config({"experiment": "flatness", "variety": "p1:1", "ps": [0.5]})
    assert exc.value.pointer == "/ps/0"


# --- verify --------------------------------------------------------------------


@pytest.fixture(scope="module")
def acceptance_runs(tmp_path_factory):
    from okounkov_lab.runner import run_acceptance

    out = tmp_path_factory.mktemp("acc")
    code = run_acceptance(str(out), threads=1, svg=False)
    return out, code


def test_verify_shipped_acceptance_runs(acceptance_runs, capsys):
    out, code = acceptance_runs
    assert code == 0
    capsys.readouterr()
    assert main(["verify", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    labels = [line.split()[1] for line in lines]
    assert labels[:8] == [f"AC{i}" for i in range(1, 9)]
    assert all(not label.startswith("AC") for label in labels[8:])  # unlabelled diagnostics, per experiment
    assert all(line.startswith("PASS") for line in lines)


def test_verify_flags_hand_edited_residual(acceptance_runs, tmp_path, capsys):
    out, _ = acceptance_runs
    rep = json.loads((out / "ac2_ac4_chebyshev" / "cheb.json").read_text())
    for check in rep["checks"]:
        if check["name"] == "gram_rel_err":
            check["value"] = 1.0
    edited = tmp_path / "edited.json"
    edited.write_text(json.dumps(rep))
    assert main(["verify", str(edited)]) == 2
    text = capsys.readouterr().out
    assert "FAIL AC2: gram_rel_err=1.0 violates <= 1e-10" in text
    assert "PASS AC4" in text


def test_verify_rejects_hash_mismatch(acceptance_runs, tmp_path, capsys):
    out, _ = acceptance_runs
    rep = json.loads((out / "ac7_d1demo" / "d1demo.json").read_text())
    rep["config"]["resolution"] = 512
    edited = tmp_path / "tampered.json"
    edited.write_text(json.dumps(rep))
    assert main(["verify", str(edited)]) == 1
    assert "config hash mismatch" in capsys.readouterr().out


def test_verify_empty_and_missing(tmp_path, capsys):
    assert main(["verify"]) == 1
    assert main(["verify", str(tmp_path)]) == 1
    assert main(["verify", str(tmp_path / "missing.json")]) == 1
    out = capsys.readouterr().out
    assert "no reports" in out and "not found" in out


def test_verify_reports_unknown_tolerance_key(tmp_path):
    rep = load_config({"experiment": "d1demo"})
    doc = {
        "manifest": rep.manifest(),
        "config": rep.data,
        "checks": [{"criterion": None, "experiment": "d1demo", "name": "made_up", "value": 0.0}],
    }
    path = tmp_path / "r.json"
    path.write_text(json.dumps(doc))
    assert verify([str(path)]) == 2


# --- determinism ---------------------------------------------------------------


def _artifact_bytes(d):
    return {f: (d / f).read_bytes() for f in files(d) if f != "manifest.json"}


@pytest.mark.parametrize("stem", ["ac1_body", "ac8_separators", "ac6_geodesic"])
def test_byte_identical_across_runs_and_threads(tmp_path, stem):
    raw = dict(shipped_configs())[stem]
    outputs = []
    for i, threads in enumerate((1, 4, 1)):
        path = write_config(tmp_path / f"{stem}.json", raw)
        d = tmp_path / f"run{i}"
        assert main([raw["experiment"], "--config", path, "--out", str(d), "--threads", str(threads), "--svg"]) == 0
        outputs.append(_artifact_bytes(d))
    assert outputs[0] == outputs[1] == outputs[2]
    if stem != "ac8_separators":  # random pairs only, nothing to plot
        assert any(name.endswith(".svg") for name in outputs[0])


def test_csv_cells_are_plain_numbers(acceptance_runs):
    out, _ = acceptance_runs
    for path in out.rglob("*.csv"):
        body = path.read_text().split("\n", 1)[1]
        assert "np." not in body and "array(" not in body, path.name


def test_pair_keys_follow_the_experiment():
    with pytest.raises(ConfigError) as exc:
        load_config({"experiment": "flatness", "variety": "p1:1", "pairs": [{"id": "a", "u0": "fs", "u1": "zero"}]})
    assert exc.value.pointer == "/pairs/0"
    with pytest.raises(ConfigError):
        load_config({"experiment": "geodesic", "pairs": [{"id": "a", "psi0": "fs", "psi1": "fs"}]})


def test_documented_schemas_match_the_package():
    from pathlib import Path

    from okounkov_lab.config import load_schema

    docs = Path(__file__).resolve().parents[1] / "docs" / "schemas"
    for name in ("config", "report"):
        assert json.loads((docs / f"{name}.schema.json").read_text()) == load_schema(name)
