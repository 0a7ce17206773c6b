import json


from poolroutes.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main


def read_report(out):
    doc = json.loads((out / "report.json").read_text())
    assert doc["schema_version"] == 1
    return doc


def test_routes_command(tmp_path, capsys):
    assert main(["routes", "--stack", "MP3,AP2", "--trials", "50", "--seed", "1",
                 "--out", str(tmp_path)]) == EXIT_OK
    assert "count 4, delocalized" in capsys.readouterr().out
    doc = read_report(tmp_path)
    assert doc["result"]["count_histogram"] == {"4": 50}
    assert doc["config"]["seed"] == 1


def test_routes_usage_errors(tmp_path, capsys):
    assert main(["routes", "--stack", "QP2", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["routes", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["routes", "--stack", "AP2", "--window", "4", "--out", str(tmp_path)]) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_gradcheck_command(tmp_path):
    assert main(["gradcheck", "--only", "fc", "AP3,MP2", "--trials", "3",
                 "--out", str(tmp_path)]) == EXIT_OK
    rows = read_report(tmp_path)["result"]["checks"]
    assert [r["passed"] for r in rows] == [True, True]
    assert main(["gradcheck", "--only", "bogus", "--out", str(tmp_path)]) == EXIT_USAGE


def test_gradcheck_failure_exit(tmp_path, monkeypatch):
    from poolroutes import gradcheck
    monkeypatch.setattr(gradcheck, "LAYER_TOL", 0.0)
    monkeypatch.setattr(gradcheck, "check_fc",
                        lambda trials: gradcheck.CheckResult("fc", 1.0, 1e-4, trials))
    assert main(["gradcheck", "--only", "fc", "--out", str(tmp_path)]) == EXIT_FAIL


def test_tree_command(tmp_path):
    assert main(["tree", "--trials", "2000", "--seed", "0", "--out", str(tmp_path)]) == EXIT_OK
    res = read_report(tmp_path)["result"]
    assert res["trials"] == 2000 and 0 < res["p"] < 1


def test_sptp_command_writes_curve(tmp_path):
    assert main(["sptp", "--extent", "32", "--ns", "1", "2", "--samples", "3", "--seed", "0",
                 "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "curve.csv").read_text().splitlines()
    assert lines[0] == "# schema_version: 1" and lines[1] == "x,p,stderr"
    assert len(lines) == 4
    assert main(["sptp", "--extent", "30", "--ns", "2", "--out", str(tmp_path)]) == EXIT_USAGE


def test_train_missing_data_exit_2(tmp_path, monkeypatch):
    monkeypatch.delenv("POOLROUTES_CIFAR10", raising=False)
    assert main(["train", "--arch", "A-LeNet5-a", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["train", "--arch", "nope", "--out", str(tmp_path)]) == EXIT_USAGE


def test_train_dry_run_and_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"arch": "A-LeNet5-b", "epochs": 7, "lr": 0.5}))
    out = tmp_path / "o"
    assert main(["train", "--config", str(cfg), "--epochs", "3", "--dry-run", "--seed", "4",
                 "--out", str(out)]) == EXIT_OK
    conf = read_report(out)["config"]
    assert conf["arch"] == "A-LeNet5-b"
    assert conf["epochs"] == 3          # flag wins
    assert conf["hypers"]["groups"]["ALL"]["lr"] == 0.5
    assert conf["seed"] == 4


def test_bad_config_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"arch": "A-VGG6",\n "epochs": }')
    assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_USAGE
    assert f"{bad}:2:" in capsys.readouterr().err
    bad.write_text('{"learning_rate": 1}')
    assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "unknown field" in capsys.readouterr().err


def test_train_end_to_end_on_mini_cifar(cifar_dir, tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--arch", "A-LeNet5-a", "--data", str(cifar_dir), "--epochs", "1",
                 "--batch-size", "20", "--seed", "0", "--out", str(out)]) == EXIT_OK
    res = read_report(out)["result"]
    assert len(res["train_loss"]) == 1 and res["initial_test_acc"] is not None
    assert (out / "checkpoint.npz").exists() and (out / "curve.csv").exists()
