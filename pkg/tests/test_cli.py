import json
import subprocess
import sys

import pytest

from conftest import SPEC_DIR
from hxz.cli import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, EXIT_PRECISION, build_parser, main

EXP = str(SPEC_DIR / "exp_inv_z.json")
POLE = str(SPEC_DIR / "exp_inv_z_pole.json")
FIG2 = str(SPEC_DIR / "fig2.json")


def result(path):
    return json.loads(path.read_text())["result"]


def test_analyze(tmp_path):
    assert main(["analyze", EXP, "-o", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "analyze.json").read_text())
    assert (doc["result"]["d"], doc["result"]["kappa"]) == (2, 1)
    assert doc["config"]["command"] == "analyze" and len(doc["content_hash"]) == 64


def test_invalid_input_exit_code(tmp_path):
    assert main(["analyze", str(tmp_path / "missing.json"), "-o", str(tmp_path)]) == EXIT_INPUT
    diag = json.loads((tmp_path / "error.json").read_text())
    assert diag["exit_code"] == EXIT_INPUT and diag["error"] == "InvalidInputError"
    bad = tmp_path / "bad.json"
    bad.write_text('{"P": [["1", "0"]], "Q": [["1", "0"]], "S": [["0", "0"], ["1", "0"]], "T": [["0", "0"], ["1", "0"]]}')
    assert main(["analyze", str(bad), "-o", str(tmp_path)]) == EXIT_INPUT


def test_numerical_failure_exit_code(tmp_path):
    # below the saddle threshold n_min = 16
    code = main(["predict", EXP, "--n", "8", "--z=-1,0.5", "-o", str(tmp_path)])
    assert code == EXIT_NUMERICAL
    assert json.loads((tmp_path / "error.json").read_text())["error"] == "SaddleFailureError"


def test_precision_exit_code(tmp_path):
    code = main(["analyze", FIG2, "--refine", "2000", "-o", str(tmp_path)])
    assert code == EXIT_PRECISION


def test_n_guard(tmp_path):
    assert main(["derive", EXP, "--n", "501", "-o", str(tmp_path)]) == EXIT_INPUT
    assert "allow-large-n" in json.loads((tmp_path / "error.json").read_text())["message"]


def test_precision_bounds(tmp_path, monkeypatch):
    assert main(["analyze", EXP, "--precision-bits", "32", "-o", str(tmp_path)]) == EXIT_INPUT
    monkeypatch.setenv("HXZ_PRECISION_BITS", "384")
    assert main(["analyze", EXP, "-o", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "analyze.json").read_text())["config"]["precision_bits"] == 384
    # the flag still wins over the environment
    assert main(["analyze", EXP, "--precision-bits", "320", "-o", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "analyze.json").read_text())["config"]["precision_bits"] == 320
    monkeypatch.setenv("HXZ_PRECISION_BITS", "lots")
    assert main(["analyze", EXP, "-o", str(tmp_path)]) == EXIT_INPUT


def test_negative_z_needs_equals_syntax():
    parser = build_parser()
    args = parser.parse_args(["predict", EXP, "--n", "64", "--z=-1,0.5"])
    assert args.z == "-1,0.5"
    with pytest.raises(SystemExit):
        parser.parse_args(["predict", EXP, "--n", "64", "--z", "-1,0.5"])


def test_predict_report(tmp_path):
    assert main(["predict", EXP, "--n", "64", "--z=-1,0.5", "-o", str(tmp_path)]) == EXIT_OK
    res = result(tmp_path / "predict.json")
    assert res["cell"]["theta"] == "-3/4"
    assert res["report"]["regime"] == "WrightOneSaddle"
    assert res["report"]["rel_error"] < 0.1
    assert main(["predict", POLE, "--n", "50", "--site", "1", "--z=2", "-o", str(tmp_path)]) == EXIT_OK
    assert result(tmp_path / "predict.json")["report"]["regime"] == "Darboux"


def test_derive_jsonl_and_report(tmp_path):
    assert main(["derive", POLE, "--n", "6", "-o", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "derive.jsonl").read_text().splitlines()
    head = json.loads(lines[0])
    assert "content_hash" in head and "config" in head
    rows = [json.loads(x) for x in lines[1:]]
    assert [r["deg"] for r in rows] == [0, 2, 4, 6, 8, 10, 12]
    rep = result(tmp_path / "derive_report.json")
    assert rep["degree_law_ok"] and rep["identities_ok"]


def test_reconstruct(tmp_path):
    assert main(["reconstruct", str(SPEC_DIR / "logderiv.json"), "-o", str(tmp_path)]) == EXIT_OK
    res = result(tmp_path / "reconstruct.json")
    assert all(isinstance(e["exponent"], int) for e in res["exponents"])


def _artifacts(tmp_path, argv):
    assert main(argv + ["-o", str(tmp_path)]) == EXIT_OK
    return {p.name: p.read_bytes() for p in sorted(tmp_path.iterdir())}


@pytest.mark.parametrize("argv, names", [
    (["compare", FIG2, "--n", "12", "--svg"], {"compare.json", "zeros.csv", "compare.svg"}),
    (["voronoi", POLE, "--n", "10", "--svg"], {"voronoi.json", "voronoi.svg"}),
    (["localmodel", "--alpha", "-1", "--m", "2", "--n", "30", "--lambda=1,-0.5", "--svg"],
     {"localmodel.json", "localmodel_zeros.csv", "localmodel_pushforward.csv", "localmodel.svg"}),
    (["l1rate", EXP, "--rect=-2,-1,-0.25,0.25", "--n-list", "8,16", "--grid", "10", "--svg"],
     {"l1rate.csv", "l1rate.json", "l1rate.svg"}),
    (["derive", EXP, "--n", "10", "--svg"], {"derive.jsonl", "derive_report.json", "degree_law.svg"}),
])
def test_artifacts_are_deterministic(tmp_path, argv, names):
    first = _artifacts(tmp_path / "a", argv)
    second = _artifacts(tmp_path / "b", argv)
    assert set(first) == names
    assert first == second
    for name, body in first.items():
        if name.endswith(".svg"):
            assert body.lstrip().startswith(b"<?xml") and b"<svg" in body
        elif name.endswith(".csv"):
            assert body.startswith(b"# config:") and b"# content_hash:" in body


def test_content_hash_covers_result(tmp_path):
    import hashlib
    main(["analyze", EXP, "-o", str(tmp_path)])
    doc = json.loads((tmp_path / "analyze.json").read_text())
    body = json.dumps(doc["result"], sort_keys=True, indent=1, ensure_ascii=False)
    assert hashlib.sha256(body.encode()).hexdigest() == doc["content_hash"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hxz", "analyze", EXP, "-o", str(tmp_path)],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["status"] == "ok"
