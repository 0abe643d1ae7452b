import json

import pytest

from circleforge import __version__
from circleforge.cli import main
from circleforge.config import ConfigError, config_hash, load


def _run(tmp_path, *argv):
    out = tmp_path / "out"
    code = main([*argv, "--out", str(out)])
    return code, out


def _doc(path):
    return json.loads(path.read_text(encoding="utf-8"))


# -- config ---------------------------------------------------------------------


def test_load_defaults_and_overrides():
    cfg = load(None, ["set.kind=primes", "X=50", "tolerances.outer=1e-6", "n.values=[3,4]"])
    assert cfg["set"] == {"kind": "primes"} and cfg["X"] == 50
    assert cfg["tolerances"] == {"quad": 1e-10, "outer": 1e-6}
    assert cfg["n"] == {"values": [3, 4]}


def test_load_rejects_bad_input(tmp_path):
    with pytest.raises(ConfigError):
        load(None, ["bogus=1"])
    with pytest.raises(ConfigError):
        load(None, ["X=1"])
    with pytest.raises(ConfigError):
        load(None, ["noequals"])
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load(bad)


def test_config_file_and_hash(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"k": 3, "s": 3}))
    a = load(path)
    b = load(None, ["s=3", "k=3"])
    assert a == b and config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(load(None, ["k=3"]))


# -- subcommands ------------------------------------------------------------------


def test_count_csv_row(tmp_path):
    code, out = _run(tmp_path, "count", "--set", "X=10", "--set", "nMax=100", "--format", "csv")
    assert code == 0
    lines = (out / "count.csv").read_text().splitlines()
    assert lines[0] == f"# circleforge {__version__} config {config_hash({k: v for k, v in load(None, ['X=10', 'nMax=100']).items() if k != 'output'})}"
    assert "25,2" in lines and "50,3" in lines


def test_count_json_has_header(tmp_path):
    code, out = _run(tmp_path, "count", "--set", "X=4", "--set", "nMax=32", "--seed", "7")
    assert code == 0
    doc = _doc(out / "count.json")
    assert doc["version"] == __version__ and doc["command"] == "count" and doc["seed"] == 7
    assert doc["configHash"] == config_hash(doc["config"])
    assert doc["result"]["R"]["values"][25] == "2"
    assert doc["result"]["meanValues"][0]["I"] in (28, "28")


def test_dist_primes(tmp_path):
    code, out = _run(tmp_path, "dist", "--set", "set.kind=primes", "--set", "X=1000", "--set", "qMax=5")
    assert code == 0
    kappa = _doc(out / "dist.json")["result"]["kappa"]
    assert kappa["3"] == {"0": "0/1", "1": "1/2", "2": "1/2"}
    assert kappa["5"]["0"] == "0/1"


def test_set_command(tmp_path):
    code, out = _run(tmp_path, "set", "--set", "set.kind=ellipsephic", "--set", "set.p=3", "--set", "set.digits=[0,1]", "--set", "X=27")
    assert code == 0
    res = _doc(out / "set.json")["result"]
    assert [n for n, _ in res["elements"]] == [1, 3, 4, 9, 10, 12, 13, 27]


def test_predict_unit_constants(tmp_path):
    code, out = _run(tmp_path, "predict", "--set", "s=4", "--set", "n.values=[100,400]", "--set", "series=1", "--set", "integral=1")
    assert code == 0
    preds = _doc(out / "predict.json")["result"]["predictions"]
    # with both constants set to one the main term is n^{s/k - 1}
    assert [p["mainTerm"] for p in preds] == pytest.approx([100.0, 400.0], rel=1e-12)


def test_weyl_command(tmp_path):
    code, out = _run(tmp_path, "weyl", "--set", "X=500", "--set", "QList=[4,8,16]")
    assert code == 0
    res = _doc(out / "weyl.json")["result"]
    assert len(res["sweep"]) == 3 and "rhoFit" in res


def test_compare_is_byte_deterministic(tmp_path):
    args = ["compare", "--set", "s=4", "--set", "n.values=[100,200,300]", "--set", "Q=20"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    for name in ("compare.json", "compare.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = (tmp_path / "a" / "compare.csv").read_text().splitlines()
    assert rows[1] == "n,exact,predicted,ratio" and rows[2].startswith("100,43,")


# -- exit codes ---------------------------------------------------------------------


def test_exit_config_error(tmp_path, capsys):
    code, _ = _run(tmp_path, "count", "--set", "bogus=1")
    assert code == 2 and "config error" in capsys.readouterr().err
    assert _run(tmp_path, "predict")[0] == 2
    assert _run(tmp_path, "count", "--threads", "0")[0] == 2


def test_exit_non_convergence_keeps_partial(tmp_path):
    code, out = _run(
        tmp_path, "singular", "--set", "s=4", "--set", "n.values=[1]", "--set", "Q=20",
        "--set", "tolerances.outer=1e-300", "--set", "T=[4]", "--set", "samples=1000",
    )
    assert code == 3
    partial = _doc(out / "singular.partial.json")["result"]["partial"]
    assert "series" in partial and "localFactors" in partial


def test_exit_budget(tmp_path, monkeypatch):
    monkeypatch.setenv("CIRCLEFORGE_BUDGET_MB", "0.001")
    assert _run(tmp_path, "count", "--set", "X=40", "--set", "nMax=1000")[0] == 4
