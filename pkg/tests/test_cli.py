import csv
import io
import json
import math

import pytest

from skewperiodic.cli import main
from skewperiodic.reports import reemit_csv, reemit_json


def run(argv):
    out = io.StringIO()
    code = main(argv, out=out)
    return code, out.getvalue()


def test_pressure_lueroth_zero():
    code, text = run(["pressure", "--system", "lueroth:0.5", "--s", "1", "--q", "0"])
    assert code == 0
    rep = json.loads(text)
    assert abs(rep["results"]["value"]) < 1e-14
    assert "remainder_bound" in rep["tolerances"]


def test_pressure_divergent_exit_2():
    code, text = run(["pressure", "--system", "lueroth:0.5", "--s", "1", "--q", "0.7"])
    assert code == 2
    assert json.loads(text)["results"]["value"] == "inf"


def test_pressure_gauss_bracket():
    code, text = run(["pressure", "--system", "gauss", "--s", "1", "--q", "0", "--depth", "4"])
    res = json.loads(text)["results"]
    assert code == 0 and res["lower"] <= 0 <= res["upper"]


def test_usage_errors_exit_1(capsys):
    assert run(["pressure", "--system", "nosuch", "--s", "1"])[0] == 1
    with pytest.raises(SystemExit) as e:
        main(["pressure", "--s", "1"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--system", "lueroth:0.5"])
    assert e.value.code == 1


def test_json_roundtrip_byte_identical():
    _, text = run(["classify", "--system", "lueroth:0.5"])
    assert reemit_json(text) == text
    _, text = run(["pressure", "--system", "lueroth:0.5", "--s", "1", "--q", "0.7"])
    assert reemit_json(text) == text


def test_csv_roundtrip_and_spectrum():
    code, text = run(["spectrum", "--system", "lueroth", "--param", "lambda", "--range", "0.05:0.95:0.05"])
    assert code == 0
    assert reemit_csv(text) == text
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 19
    for r in rows:
        lam = float(r["param"])
        want = 1.0 if lam <= 0.5 else -math.log(4) / math.log(lam * (1 - lam))
        assert float(r["deltaN"]) == pytest.approx(want, abs=1e-9)
        assert r["tol"]


def test_spectrum_simple_walk_fixed_param():
    code, text = run(["spectrum", "--system", "simplewalk", "--param", "c1", "--range", "0.1:0.3:0.1", "--fixed", "c2=0.5"])
    assert code == 0
    assert len(list(csv.DictReader(io.StringIO(text)))) == 3
    assert run(["spectrum", "--system", "simplewalk", "--param", "c1", "--range", "0.1:0.3:0.1"])[0] == 1


def test_hessenberg_compare():
    code, text = run(["hessenberg", "--geometric", "0.75", "--compare", "10,100,400"])
    res = json.loads(text)["results"]
    assert code == 0
    assert res["log_rho_variational"] == pytest.approx(math.log(3.0), abs=1e-12)
    gaps = [r["gap"] for r in res["compare"]]
    assert gaps == sorted(gaps, reverse=True)


def test_hessenberg_array():
    code, text = run(["hessenberg", "--array", "[0.2, 0.0, 0.6]", "--k", "3"])
    res = json.loads(text)["results"]
    assert code == 0 and res["log_rho_truncated"] <= res["log_rho_variational"] + 1e-12
    assert run(["hessenberg", "--array", "[0.2,"])[0] == 1


def test_simulate_reproducible():
    argv = ["simulate", "--system", "simplewalk:0.5,0.25", "--runs", "100", "--steps", "10000", "--seed", "7"]
    code, a = run(argv)
    _, b = run(argv)
    ra, rb = json.loads(a), json.loads(b)
    assert code == 0 and ra["results"]["lemma_checks_pass"]
    ra.pop("wall_clock_s"), rb.pop("wall_clock_s")
    assert ra == rb


def test_delta_and_phase_commands():
    code, text = run(["delta", "--system", "lueroth:0.75", "--extension", "Z"])
    assert code == 0
    assert json.loads(text)["results"]["delta_Z"] == pytest.approx(-math.log(4) / math.log(0.1875), abs=1e-10)
    code, text = run(["phase", "--system", "lueroth:0.5", "--format", "csv"])
    assert code == 0
    row = next(csv.DictReader(io.StringIO(text)))
    assert float(row["s0"]) == pytest.approx(1.0, abs=1e-10)


def test_file_system_address(tmp_path):
    data = {
        "name": "two",
        "M": 1,
        "branches": [
            {"k": 1, "log_weight_sup": math.log(0.5), "psi": -1, "psi1": 0},
            {"k": 2, "log_weight_sup": math.log(0.25), "psi": 1, "psi1": 1},
        ],
        "tail": {"kind": "none"},
    }
    p = tmp_path / "two.json"
    p.write_text(json.dumps(data))
    code, text = run(["classify", "--system", f"file:{p}"])
    assert code == 0 and json.loads(text)["results"]["label"] == "lean"
