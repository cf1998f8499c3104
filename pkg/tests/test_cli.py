import csv
import json
import math
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wulfflab import svgplot
from wulfflab.cli import run
from wulfflab.config import (ConfigError, config_hash, parse_config, parse_masses, serialize_config,
                             validate)
from wulfflab.shapes import ball, read_off, save_shape


def _read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _record(d):
    with open(os.path.join(d, "record.json")) as fh:
        return json.load(fh)


# -- config -------------------------------------------------------------------------------


def test_round_trip_is_idempotent():
    cfg = parse_config({"version": 1, "subcommand": "minimize", "mass": 2.0, "tolerances": {"max_iters": 50}})
    text = serialize_config(cfg)
    again = parse_config(text)
    assert serialize_config(again) == text
    assert config_hash(again) == config_hash(cfg)
    assert cfg["tolerances"]["residual_tol"] == 0.03 and cfg["tolerances"]["max_iters"] == 50


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["wulff", "minimize", "sweep", "modulus", "graphpde", "align", "report"]),
       st.floats(1e-3, 1e3), st.integers(0, 2 ** 31), st.sampled_from([2, 3]))
def test_round_trip_property(sub, mass, seed, dim):
    cfg = parse_config({"version": 1, "subcommand": sub, "mass": mass, "seed": seed, "dim": dim})
    text = serialize_config(cfg)
    assert serialize_config(parse_config(text)) == text


def test_unknown_keys_are_rejected_with_line_numbers():
    text = '{\n  "version": 1,\n  "subcommand": "wulff",\n  "colour": "red"\n}\n'
    with pytest.raises(ConfigError) as err:
        parse_config(text, name="run.json")
    assert any(d.startswith("run.json:4") and "colour" in d for d in err.value.diagnostics)


def test_bad_values_and_syntax():
    text = '{\n  "version": 1,\n  "subcommand": "wulff",\n  "mass": -1\n}\n'
    with pytest.raises(ConfigError) as err:
        parse_config(text, name="c")
    assert err.value.diagnostics[0].startswith("c:4")
    with pytest.raises(ConfigError) as err:
        parse_config('{"version": 1,\n "subcommand": }', name="c")
    assert err.value.diagnostics[0].startswith("c:2")
    with pytest.raises(ConfigError):
        validate({"version": 2, "subcommand": "wulff"})
    with pytest.raises(ConfigError):
        validate({"version": 1, "subcommand": "fly"})


def test_parse_masses():
    ms = parse_masses("0.1:10:5")
    assert np.allclose(ms, [0.1, 10 ** -0.5, 1.0, 10 ** 0.5, 10.0])
    assert parse_masses([1, 2]) == [1.0, 2.0]
    for bad in ("1:0.5:3", "0.1:1", "a:b:3", "0.1:1:1"):
        with pytest.raises(Exception):
            parse_masses(bad)


# -- subcommands --------------------------------------------------------------------------


def test_wulff_writes_mesh_and_report(tmp_path):
    out = str(tmp_path / "w")
    assert run(["wulff", "--tension", "euclidean", "--mass", "4.18879", "--out", out]) == 0
    rows = {r["quantity"]: float(r["value"]) for r in _read_csv(os.path.join(out, "report.csv"))}
    assert rows["surface_energy"] == pytest.approx(4 * math.pi, rel=1e-3)
    assert rows["identity_ratio"] == pytest.approx(1.0, abs=5e-3)
    mesh = read_off(os.path.join(out, "wulff.off"))
    # flat facets are inscribed in the curved radial surface
    assert 0.99 * 4.18879 < mesh.volume() < 4.18879
    rec = _record(out)
    assert rec["exit_code"] == 0 and rec["subcommand"] == "wulff"
    assert rec["input_hash"] == config_hash(rec["config"])
    assert {"report.csv", "wulff.off", "wulff.svg", "wulff.json"} <= set(rec["outputs"])
    for key in ("started", "finished", "warnings", "results", "tool_version"):
        assert key in rec


def test_graphpde_manufactured_order(tmp_path):
    out = str(tmp_path / "g")
    assert run(["graphpde", "--case", "manufactured-paraboloid", "--h", "0.02", "--levels", "2", "--out", out]) == 0
    rows = _read_csv(os.path.join(out, "convergence.csv"))
    assert len(rows) == 2
    assert abs(float(rows[1]["order"]) - 2.0) < 0.15
    rec = _record(out)
    assert rec["results"]["diagnostic"]["kind"] == "all_positive"


def test_sweep_defects_small(tmp_path):
    out = str(tmp_path / "s")
    code = run(["sweep", "--potential", "radial-quadratic", "--masses", "0.1:10:12", "--dim", "2",
                "--resolution", "64", "--starts", "ball,random_2", "--out", out])
    assert code == 0
    rows = _read_csv(os.path.join(out, "sweep.csv"))
    assert len(rows) == 12
    assert all(float(r["defect"]) < 1e-2 for r in rows)


def test_minimize_nonconvergence_exit_code(tmp_path):
    out = str(tmp_path / "m")
    code = run(["minimize", "--dim", "2", "--resolution", "32", "--mass", "3.0", "--starts", "random_1",
                "--max-iters", "1", "--out", out])
    assert code == 2
    assert _record(out)["exit_code"] == 2
    assert os.path.exists(os.path.join(out, "history_random0.csv"))


def test_domain_error_exit_code(tmp_path):
    out = str(tmp_path / "e")
    assert run(["wulff", "--tension", "ellipsoidal", "--tension-params", '{"axes": [1, -2, 1]}', "--out", out]) == 1
    assert run(["wulff", "--mass", "-3", "--out", out]) == 1
    assert run(["nonsense"]) == 1


def test_bad_config_file_reports_lines(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n  "version": 1,\n  "subcommand": "wulff",\n  "typo": 3\n}\n')
    assert run(["wulff", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert f"{cfg}:4" in capsys.readouterr().err


def test_align_subcommand(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    save_shape(ball(1.0, resolution=64), str(a))
    save_shape(ball(1.0, center=(0.4, -0.3), resolution=64), str(b))
    out = str(tmp_path / "al")
    assert run(["align", "--shape-a", str(a), "--shape-b", str(b), "--group", "translations", "--out", out]) == 0
    assert _record(out)["results"]["relative_residual"] < 1e-3


def test_report_single_run_and_empty_dir(tmp_path):
    runs = tmp_path / "runs"
    assert run(["wulff", "--dim", "2", "--out", str(runs / "one")]) == 0
    assert run(["report", str(runs)]) == 0
    summary = (runs / "summary.md").read_text()
    body = [line for line in summary.splitlines() if line.startswith("| one")]
    assert len(body) == 1 and "wulff" in body[0]
    (runs / "broken").mkdir()
    (runs / "broken" / "record.json").write_text("{not json")
    assert run(["report", str(runs)]) == 0
    assert "skipped" in (runs / "summary.md").read_text()
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run(["report", str(empty)]) == 1


def test_report_slope_table(tmp_path):
    runs = tmp_path / "runs"
    assert run(["modulus", "--dim", "2", "--resolution", "64", "--starts", "ball", "--masses", "0.05,0.1,0.2,0.5",
                "--budget", "30", "--out", str(runs / "mod")]) == 0
    assert run(["report", str(runs)]) == 0
    text = (runs / "summary.md").read_text()
    assert "## Mass exponents" in text
    assert (runs / "slopes.svg").exists()


def test_identical_runs_give_identical_csv(tmp_path):
    argv = ["minimize", "--dim", "2", "--resolution", "48", "--mass", "2.0", "--starts", "ball,random_2",
            "--seed", "7"]
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert run(argv + ["--out", a]) == 0
    assert run(argv + ["--out", b]) == 0
    names = sorted(n for n in os.listdir(a) if n.endswith(".csv"))
    assert "results.csv" in names
    for n in names:
        with open(os.path.join(a, n), "rb") as fa, open(os.path.join(b, n), "rb") as fb:
            assert fa.read() == fb.read(), n


# -- svg ----------------------------------------------------------------------------------


def test_svg_outputs_parse():
    docs = [svgplot.line_chart({"a": ([1, 2, 3], [1, 4, 9])}, "t<&>", "x", "y", logx=True, logy=True),
            svgplot.heatmap(np.arange(12.0).reshape(3, 4), title="h"),
            svgplot.outline({"c": np.array([[0, 0], [1, 0], [0, 1]])}, "o")]
    for doc in docs:
        root = ET.fromstring(doc)
        assert root.tag.endswith("svg")
