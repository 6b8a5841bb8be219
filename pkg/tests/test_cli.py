import json
import subprocess
import sys

import pytest

from qacert import cli
from qacert.errors import PrecisionError


def run(tmp_path, *argv):
    out = tmp_path / argv[0]
    code = cli.main([*argv, "--out", str(out)])
    return code, out


def load(path):
    return json.loads(path.read_text())


def test_seq_log_power(tmp_path):
    code, out = run(tmp_path, "seq", "--catalog", "log_power", "--delta", "1", "--kmax", "512")
    assert code == 0
    rep = load(out / "seq_report.json")
    assert rep["quasianalyticity"]["growth_classification"] == "diverging"
    assert rep["regularity"]["log_convex_ok"] and rep["regularity"]["roots_strictly_increasing"]


def test_seq_gevrey(tmp_path):
    code, out = run(tmp_path, "seq", "--catalog", "gevrey", "--s", "2")
    assert code == 0
    qa = load(out / "seq_report.json")["quasianalyticity"]
    assert qa["growth_classification"] == "plateauing"
    assert abs(qa["final_partial_sum"]["log10"] - 0.2161) < 0.01  # log10(pi^2/6) = 0.2162


def test_seq_bad_table_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("[1, -2, 3]")
    assert run(tmp_path, "seq", "--table", str(bad))[0] == 2
    missing = tmp_path / "missing.json"
    assert run(tmp_path, "seq", "--table", str(missing))[0] == 2


def test_counterexample_n1_exit_2(tmp_path, capsys):
    code, _ = run(tmp_path, "counterexample", "--n", "1", "--kmax", "2")
    assert code == 2
    assert "n >= 2" in capsys.readouterr().err


def test_precondition_exit_3(tmp_path, capsys):
    code, _ = run(tmp_path, "counterexample", "--M", "constant_one", "--kmax", "2", "--no-seminorm")
    assert code == 3
    assert "counterexample" in capsys.readouterr().err


def test_precision_exit_4(tmp_path, monkeypatch):
    def boom(args):
        raise PrecisionError("forced")
    parser = cli._build_parser()
    monkeypatch.setattr(cli, "_build_parser", lambda: _patched(parser, boom))
    assert run(tmp_path, "seq", "--spec", "gevrey:2")[0] == 4


def _patched(parser, func):
    for action in parser._subparsers._group_actions:
        action.choices["seq"].set_defaults(func=func)
    return parser


def test_bad_precision_exit_2(tmp_path):
    assert run(tmp_path, "seq", "--spec", "gevrey:2", "--precision", "300")[0] == 2


def test_counterexample_bundle(tmp_path):
    code, out = run(tmp_path, "counterexample", "--kmax", "3", "--alpha-max", "3", "--no-independence")
    assert code == 0
    names = {p.name for p in out.iterdir()}
    assert {"centers.csv", "constants.csv", "blowup.json", "blowup.csv", "nonmembership.json",
            "seminorm.json", "manifest.json"} <= names
    assert load(out / "blowup.json")["all_pass"]
    manifest = load(out / "manifest.json")
    assert set(manifest["files"]) == names - {"manifest.json"}
    for name in names - {"manifest.json"}:
        text = (out / name).read_text()
        if name.endswith(".json"):
            assert json.loads(text)["inputs"] == manifest["inputs"]
        else:
            assert text.startswith("# inputs: ")


def test_counterexample_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    args = ["counterexample", "--kmax", "3", "--no-seminorm"]
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b)]) == 0
    for p in a.iterdir():
        if p.name == "manifest.json":
            assert load(p)["files"] == load(b / p.name)["files"]
        else:
            assert p.read_bytes() == (b / p.name).read_bytes()


def test_arc_cusp(tmp_path):
    plot = tmp_path / "cusp.json"
    plot.write_text(json.dumps({"m": 1, "exponents": [[2], [3]]}))
    code, out = run(tmp_path, "arc", "--plot", str(plot), "--n", "2", "--tmin", "2^-20")
    assert code == 0
    rep = load(out / "arc.json")
    assert rep["all_pass"] and len(rep["rows"]) == 18


def test_arc_unsupported_exit_3(tmp_path):
    plot = tmp_path / "bad.json"
    plot.write_text(json.dumps({"m": 2, "exponents": [[1, 0], [0, 1], [1, 1]]}))
    assert run(tmp_path, "arc", "--plot", str(plot))[0] == 3


def test_omega_identity(tmp_path):
    code, out = run(tmp_path, "omega", "--catalog", "identity")
    assert code == 0
    assert load(out / "omega_report.json")["qa_integral"]["growth_classification"] == "diverging"


def test_compose_line(tmp_path):
    plot = tmp_path / "line.json"
    plot.write_text(json.dumps({"m": 1, "exponents": [[1], [0]], "units": [1, 1.25]}))
    code, out = run(tmp_path, "compose", "--plot", str(plot), "--base", "0.5", "--kmax", "3", "--order", "8")
    assert code == 0
    rep = load(out / "compose.json")
    assert rep["all_pass"] and rep["tau_found"] is not None


def test_gadget_command(tmp_path):
    code, out = run(tmp_path, "gadget", "--jmax", "6")
    assert code == 0
    assert load(out / "gadget_bounds.json")["all_pass"]
    header = (out / "derivatives.csv").read_text().splitlines()[1]
    assert header == "x,order,re,im,modulus_log10,tail_log10,cancellation_bits"


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "qacert", "seq", "--spec", "gevrey:2", "--kmax", "64",
                          "--out", str(tmp_path / "s")], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["command"] == "seq"
