import hashlib
import json
import subprocess
import sys

import pytest

from dohfed.cli import build_report, main, parse_k_range


def digest_dir(path, skip=("manifest.json",)):
    return {p.relative_to(path).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(path.rglob("*")) if p.is_file() and p.name not in skip}


@pytest.fixture(scope="module")
def prepared(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "syn"), "--seed", "2", "--benign", "300", "--attack", "300"]) == 0
    assert main(["prepare", "--csv", str(root / "syn" / "flows.csv"), "--partition", str(root / "syn" / "partition.json"),
                 "--schema", str(root / "syn" / "schema.json"), "--seed", "2", "--out", str(root / "prep")]) == 0
    cfg = {"data": "prep", "scenario": "DFL_GOSSIP", "model_kind": "dt", "rounds": 6, "batch_size": 40, "pca_k": 4}
    (root / "run.json").write_text(json.dumps(cfg))
    return root


def test_prepare_prints_count_table(tmp_path, prepared, capsys):
    main(["prepare", "--csv", str(prepared / "syn" / "flows.csv"), "--partition", str(prepared / "syn" / "partition.json"),
          "--schema", str(prepared / "syn" / "schema.json"), "--seed", "2", "--out", str(tmp_path / "p")])
    out = capsys.readouterr().out
    assert "DNS Provider" in out and "Malicious" in out
    assert out.count("600") >= 4
    assert digest_dir(tmp_path / "p") == digest_dir(prepared / "prep")
    manifest = json.loads((tmp_path / "p" / "manifest.json").read_text())
    for key in ("config", "inputs", "seed", "version", "outputs", "duration_s"):
        assert key in manifest
    flows = prepared / "syn" / "flows.csv"
    assert manifest["inputs"][str(flows)] == hashlib.sha256(flows.read_bytes()).hexdigest()


def test_prepare_missing_label_is_schema_exit(tmp_path, prepared, capsys):
    text = (prepared / "syn" / "flows.csv").read_text().replace(",Label\n", ",Verdict\n", 1)
    bad = tmp_path / "bad.csv"
    bad.write_text(text)
    code = main(["prepare", "--csv", str(bad), "--partition", str(prepared / "syn" / "partition.json"),
                 "--schema", str(prepared / "syn" / "schema.json"), "--out", str(tmp_path / "o")])
    assert code == 4
    assert capsys.readouterr().err.startswith("error: SchemaError: ")


def test_run_outputs_and_cardinality(prepared):
    out = prepared / "r_gossip"
    assert main(["run", "--config", str(prepared / "run.json"), "--out", str(out)]) == 0
    rows = [json.loads(line) for line in (out / "metrics.jsonl").read_text().splitlines()]
    assert len(rows) == 6 * 4 * 2
    for key in ("round", "entity", "scope", "tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "f1"):
        assert key in rows[0]
    ledger = (out / "ledger.csv").read_text().splitlines()
    assert ledger[0] == "round,sender,receiver,bytes" and len(ledger) == 1 + 6 * 4
    assert sorted(p.name for p in (out / "models").iterdir()) == [f"entity_{e}.json" for e in range(4)]
    assert json.loads((out / "manifest.json").read_text())["config"]["scenario"] == "DFL_GOSSIP"


def test_nfl_ledger_is_header_only(prepared):
    out = prepared / "r_nfl"
    assert main(["run", "--config", str(prepared / "run.json"), "--scenario", "NFL", "--out", str(out)]) == 0
    assert (out / "ledger.csv").read_text() == "round,sender,receiver,bytes\n"


def test_flags_override_config(prepared):
    out = prepared / "r_flags"
    assert main(["run", "--config", str(prepared / "run.json"), "--model", "svm", "--rounds", "2",
                 "--batch-size", "30", "--pca-k", "3", "--seed", "4", "--eta0", "0.05", "--out", str(out)]) == 0
    cfg = json.loads((out / "manifest.json").read_text())["config"]
    assert (cfg["model_kind"], cfg["rounds"], cfg["batch_size"], cfg["pca_k"], cfg["seed"], cfg["eta0"]) == \
        ("svm", 2, 30, 3, 4, 0.05)
    model = json.loads((out / "models" / "entity_0.json").read_text())
    assert len(model["weights"]) == 3


def test_run_is_repeatable_across_thread_counts(prepared):
    outs = []
    for i, threads in enumerate(("1", "4", "1")):
        out = prepared / f"det{i}"
        assert main(["run", "--config", str(prepared / "run.json"), "--model", "rf", "--n-trees", "4",
                     "--threads", threads, "--out", str(out)]) == 0
        outs.append(digest_dir(out))
    assert outs[0] == outs[1] == outs[2]


@pytest.mark.parametrize("argv,code", [
    (["--rounds", "0"], 3),
    (["--rounds", "500"], 5),
    (["--data", "/nonexistent/prepared"], 5),
])
def test_run_error_codes(prepared, tmp_path, capsys, argv, code):
    assert main(["run", "--config", str(prepared / "run.json"), *argv, "--out", str(tmp_path / "x")]) == code
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: ") and "\n" not in err
    assert not (tmp_path / "x" / "metrics.jsonl").exists()


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"data": "x", "colour": 3}')
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    cfg.write_text("{not json")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_usage_errors_exit_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--scenario", "STAR", "--out", str(tmp_path)])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_k_range_parsing():
    assert parse_k_range("1-4") == [1, 2, 3, 4]
    assert parse_k_range("5,10, 22") == [5, 10, 22]
    assert parse_k_range("") == []
    assert parse_k_range("3-1") == []


def test_sweep_outputs(prepared, capsys):
    out = prepared / "sweep"
    assert main(["sweep-pca", "--config", str(prepared / "run.json"), "--k", "1-4", "--models", "svm,dt",
                 "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "k,model,entity,accuracy" and len(lines) == 1 + 4 * 2 * 4
    stats = (out / "sweep_stats.csv").read_text().splitlines()
    assert stats[0] == "k,mean,spread,norm_mean,norm_spread,score" and len(stats) == 5
    selected = json.loads((out / "selection.json").read_text())["selected_k"]
    assert f"selected k = {selected}" in capsys.readouterr().out


def test_sweep_empty_range_is_usage_error(prepared, tmp_path):
    assert main(["sweep-pca", "--config", str(prepared / "run.json"), "--k", "", "--out", str(tmp_path)]) == 2
    assert main(["sweep-pca", "--config", str(prepared / "run.json"), "--k", "4-1", "--out", str(tmp_path)]) == 2


def test_report_layouts(prepared, tmp_path, capsys):
    runs = {}
    for scenario in ("NFL", "CFL", "DFL", "DFL_GOSSIP"):
        out = prepared / f"rep_{scenario}"
        main(["run", "--config", str(prepared / "run.json"), "--scenario", scenario, "--out", str(out)])
        runs[scenario] = out / "metrics.jsonl"
    capsys.readouterr()
    assert main(["report", *map(str, runs.values()), "--out", str(tmp_path / "t.csv"),
                 "--curves", str(tmp_path / "c.csv")]) == 0
    text = capsys.readouterr().out
    header = [line for line in text.splitlines() if line.strip().startswith("entity")][0]
    assert header.split() == ["entity", "NFL", "CFL", "DFL", "DFL_GOSSIP"]
    assert "DT accuracy" in text and "DT f1" in text
    table = (tmp_path / "t.csv").read_text().splitlines()
    assert len(table) == 1 + 2 * 4 * 4
    curves = (tmp_path / "c.csv").read_text().splitlines()
    assert len(curves) == 1 + 4 * 6 * 4

    single, _ = build_report([runs["NFL"]])
    header = [line for line in single.splitlines() if line.strip().startswith("entity")][0]
    assert header.split() == ["entity", "NFL"]


def test_report_names_bad_line(tmp_path, prepared, capsys):
    good = (prepared / "r_gossip" / "metrics.jsonl").read_text().splitlines()
    bad = tmp_path / "m.jsonl"
    bad.write_text("\n".join(good[:3] + ['{"round": 1'] + good[3:]) + "\n")
    assert main(["report", str(bad)]) == 5
    assert "line 4" in capsys.readouterr().err
    bad.write_text('{"round": 1, "entity": 0}\n')
    assert main(["report", str(bad)]) == 5


def test_module_entry_point(prepared, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dohfed", "run", "--config", str(prepared / "run.json"),
                           "--rounds", "2", "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "m" / "metrics.jsonl").exists()
    proc = subprocess.run([sys.executable, "-m", "dohfed", "run", "--config", str(prepared / "run.json"),
                           "--rounds", "0", "--out", str(tmp_path / "n")], capture_output=True, text=True)
    assert proc.returncode == 3 and proc.stderr.startswith("error: ConfigError:")
