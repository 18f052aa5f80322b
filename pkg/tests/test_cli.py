import json

import pytest

from cubelab.cli import config_hash, main, run


def _json_out(capsys, argv):
    code = main(argv)
    return code, json.loads(capsys.readouterr().out)


@pytest.fixture(scope="module")
def tower_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "tower.json"
    code, _, _ = run(["tower", "build", "--widths", "4,6", "--k", "2", "--delta", "1/4", "--save", str(path)])
    assert code == 0
    return path


@pytest.fixture(scope="module")
def tower88_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "tower88.json"
    argv = ["tower", "build", "--widths", "8,8", "--k", "2", "--delta", "1/8", "--epsilon", "1/16,1/32", "--save", str(path)]
    code, _, _ = run(argv)
    assert code == 0
    return path


def test_bounds_reports_desk_value(capsys):
    code, rep = _json_out(capsys, ["bounds", "--width", "16", "--k", "2", "--delta", "1/4"])
    assert code == 0
    assert rep["verdict"] == "pass"
    assert float(rep["result"]["log_bound"]) == pytest.approx(-156.2, abs=0.05)
    assert rep["command"] == "bounds"
    assert rep["config_hash"] == config_hash(rep["config"])
    assert "timing" not in rep


def test_reports_are_byte_identical(capsys):
    argv = ["partition", "find", "--width", "8", "--k", "2", "--delta", "1/4", "--seed", "3"]
    main(argv)
    first = capsys.readouterr().out
    main(argv)
    assert capsys.readouterr().out == first


def test_timing_only_on_request(capsys):
    _, rep = _json_out(capsys, ["bounds", "--width", "10", "--delta", "1/4", "--timing"])
    assert rep["timing"]["wall_seconds"] >= 0


@pytest.mark.parametrize(
    "argv",
    [
        ["bounds", "--width", "16"],
        ["bounds", "--width", "16", "--delta", "0.25"],
        ["partition", "find", "--width", "8", "--k", "2"],
        ["nonsense"],
        ["tower", "build"],
    ],
)
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "usage error" in capsys.readouterr().err


def test_budget_refusal_exits_3(capsys):
    code, rep = _json_out(capsys, ["partition", "find", "--width", "12", "--k", "2", "--delta", "1/4", "--budget", "10"])
    assert code == 3
    assert rep["verdict"] == "refused"
    assert rep["refusal"]["estimate"] > rep["refusal"]["budget"] == 10


def test_failed_verification_exits_2(tmp_path, capsys):
    path = tmp_path / "p.json"
    assert main(["partition", "find", "--width", "6", "--k", "1", "--delta", "1/4", "--save", str(path)]) == 0
    capsys.readouterr()
    # pairs of translates in a width-6 cube cannot all sit within 1/1024 of 1/4
    argv = ["partition", "verify", "--partition", str(path), "--k", "2", "--delta", "1/1024"]
    code, rep = _json_out(capsys, argv)
    assert code == 2 and rep["verdict"] == "fail"


def test_partition_round_trip(tmp_path, capsys):
    path = tmp_path / "p.json"
    assert main(["partition", "find", "--width", "8", "--k", "2", "--delta", "1/4", "--save", str(path)]) == 0
    capsys.readouterr()
    code, rep = _json_out(capsys, ["partition", "verify", "--partition", str(path), "--k", "2", "--delta", "1/4"])
    assert code == 0
    assert rep["result"]["prop1"]["pass"] is True


def test_config_file_matches_flags(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"width": 16, "k": 2, "delta": "1/4"}))
    _, via_cfg = _json_out(capsys, ["bounds", "--config", str(cfg)])
    _, via_flags = _json_out(capsys, ["bounds", "--width", "16", "--k", "2", "--delta", "1/4"])
    assert via_cfg == via_flags


def test_explicit_flag_beats_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"width": 16, "delta": "1/4"}))
    _, rep = _json_out(capsys, ["bounds", "--config", str(cfg), "--width", "12"])
    assert rep["config"]["width"] == 12


@pytest.mark.parametrize("cfg", [{"width": 16, "delta": 0.25}, {"width": 16, "delta": "1/4", "bogus": 1}])
def test_bad_config_is_usage_error(tmp_path, cfg, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["bounds", "--config", str(path)]) == 1


def test_config_hash_tracks_config(capsys):
    _, a = _json_out(capsys, ["bounds", "--width", "16", "--delta", "1/4"])
    _, b = _json_out(capsys, ["bounds", "--width", "16", "--delta", "1/8"])
    assert a["config_hash"] != b["config_hash"]


def test_output_file_and_text_format(tmp_path, capsys):
    out = tmp_path / "r.txt"
    assert main(["bounds", "--width", "16", "--delta", "1/4", "--format", "text", "--output", str(out)]) == 0
    assert capsys.readouterr().out == ""
    assert out.read_text().startswith("bounds: pass")


def test_tower_covering_clean(tower_file, capsys):
    code, rep = _json_out(capsys, ["tower", "check-covering", "--tower", str(tower_file), "--unions", "5"])
    assert code == 0
    assert all(not r["report"]["counterexamples"] for r in rep["result"]["runs"])
    assert len(rep["result"]["runs"]) == 5


def test_dist_theorem8_then_verify(tmp_path, capsys):
    cert = tmp_path / "cert.json"
    knobs = ["--bin-delta", "1/128", "--bin-density-loss", "1/32"]
    argv = ["dist", "theorem8", "--width", "12", "--delta", "1/8", *knobs, "--save", str(cert), "--seed", "1"]
    code, rep = _json_out(capsys, argv)
    assert code == 0 and rep["result"]["verification"]["pass"] is True
    code, rep = _json_out(capsys, ["dist", "verify", "--certificate", str(cert)])
    assert code == 0
    # a zero bound is refuted by the same data
    code, _ = _json_out(capsys, ["dist", "verify", "--certificate", str(cert), "--bound", "0"])
    assert code == 2


def test_lemma5_build_and_verify(tower88_file, tmp_path, capsys):
    cert = tmp_path / "tj.json"
    knobs = ["--bin-delta", "1/32", "--bin-threshold", "1/64", "--bin-density-loss", "1/4"]
    base = ["--tower", str(tower88_file), "--slice", "0..1"]
    code, rep = _json_out(capsys, ["lemma5", "build", *base, "--J-density", "1/8", "--save", str(cert), *knobs])
    assert code == 0
    assert rep["result"]["certificate"]["verified_all_t"] is True
    code, rep = _json_out(capsys, ["lemma5", "verify", *base, "--certificate", str(cert), "--all-patterns"])
    assert code == 0 and rep["result"]["verification"]["pass"] is True


def test_jxz_report(tower88_file, capsys):
    knobs = ["--bin-delta", "1/32", "--bin-threshold", "1/64", "--bin-density-loss", "1/4"]
    code, rep = _json_out(capsys, ["jxz", "--tower", str(tower88_file), "--groups", "0..0,1..1", *knobs])
    assert code in (0, 2)
    assert rep["verdict"] in ("pass", "fail")
    assert rep["result"]["groups"] == [[0, 1], [1, 2]]
