import json

import numpy as np
import pytest

from entdistill import matcore as mc
from entdistill.checks import WERNER_GRID
from entdistill.cli import emit_csv, main, parse_csv
from entdistill.exponents import werner_exponent
from entdistill.fileio import write_instrument, write_matrix
from entdistill.instruments import DilSubchannel, IsoSubchannel


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def werner_rows():
    import io
    from contextlib import redirect_stdout

    buf = io.StringIO()
    with redirect_stdout(buf):
        assert main(["werner", "--threads", "4"]) == 0
    return buf.getvalue()


def test_werner_csv(werner_rows):
    lines = werner_rows.splitlines()
    assert lines[0] == "p,closed_form,sdp_lower,sdp_upper"
    rows = parse_csv(werner_rows)
    assert len(rows) == 19
    assert [r["p"] for r in rows] == list(WERNER_GRID)
    for r in rows:
        assert r["closed_form"] == max(0.0, np.log2((1 - r["p"]) / r["p"]))
        assert r["closed_form"] == werner_exponent(r["p"])
        assert r["sdp_lower"] - 1e-9 <= r["closed_form"] <= r["sdp_upper"] + 1e-9
    cf = [r["closed_form"] for r in rows]
    assert all(a >= b for a, b in zip(cf, cf[1:]))


def test_csv_round_trip_is_exact():
    rows = [{"x": 0.1 + 0.2, "y": np.log2(3)}]
    assert parse_csv(emit_csv(rows, ("x", "y"))) == rows


def test_werner_rejects_bad_p(capsys):
    with pytest.raises(SystemExit):
        main(["werner", "--p", "1.5"])


def test_werner_json(capsys):
    code, out, _ = run(capsys, "werner", "--p", "0.25", "--format", "json")
    assert code == 0
    obj = json.loads(out)
    assert obj["rows"][0]["closed_form"] == werner_exponent(0.25)


def test_divergence_commands(tmp_path, capsys, rng):
    r = mc.full_rank_state(4, rng)
    write_matrix(tmp_path / "r.json", r)
    write_matrix(tmp_path / "w.json", mc.werner_state(0.25, 2))
    code, out, _ = run(capsys, "divergence", "domega", "--rho", str(tmp_path / "r.json"), "--sigma", str(tmp_path / "r.json"))
    assert code == 0 and abs(json.loads(out)["value"]) <= 1e-12
    code, out, _ = run(capsys, "divergence", "dmax", "--rho", str(tmp_path / "r.json"),
                       "--sigma", str(tmp_path / "w.json"), "--method", "sdp")
    assert code == 0 and json.loads(out)["method"] == "sdp"
    code, out, _ = run(capsys, "divergence", "domega_sep", "--rho", str(tmp_path / "w.json"))
    obj = json.loads(out)
    assert obj["lower"] - 1e-9 <= np.log2(3) <= obj["upper"] + 1e-9
    code, out, _ = run(capsys, "divergence", "beta", "--rho", str(tmp_path / "w.json"), "--eps", "0.5")
    obj = json.loads(out)
    # log2(1 + Omega) with Omega = 3
    assert obj["lower"] - 1e-6 <= 2.0 <= obj["upper"] + 1e-6


def test_divergence_missing_sigma(tmp_path, capsys):
    write_matrix(tmp_path / "r.json", np.eye(4) / 4)
    with pytest.raises(SystemExit):
        main(["divergence", "dmax", "--rho", str(tmp_path / "r.json")])


def test_exponent_command(tmp_path, capsys):
    write_matrix(tmp_path / "w.json", mc.werner_state(0.25, 2))
    code, out, _ = run(capsys, "exponent", "--rho", str(tmp_path / "w.json"))
    obj = json.loads(out)
    assert code == 0 and obj["epsilon"] == 0.5
    assert abs(obj["bracket"]["lower"] - np.log2(3)) <= 1e-5
    code, out, _ = run(capsys, "exponent", "--rho", str(tmp_path / "w.json"), "--measured")
    assert json.loads(out)["bracket"]["upper"] <= obj["bracket"]["upper"] + 1e-8


def test_instrument_check_exit_codes(tmp_path, capsys):
    psi = mc.max_entangled(2)
    eye = np.eye(4)
    path = tmp_path / "s.json"
    write_instrument(path, IsoSubchannel(2, 0 * eye, eye))
    assert run(capsys, "instrument-check", str(path), "--delta", "0.5")[0] == 0
    write_instrument(path, IsoSubchannel(2, psi, (eye - psi) / 3))
    assert run(capsys, "instrument-check", str(path), "--delta", "1.0")[0] == 1
    # separable distance exactly at eps: the strict dilution condition is undecided
    w = mc.werner_state(0.25, 2)
    write_instrument(path, DilSubchannel(2, w, w))
    code, out, _ = run(capsys, "instrument-check", str(path), "--eps", repr(float(np.log2(3))))
    assert code == 2 and json.loads(out)["verdict"] == "unknown"


def test_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"dim_a": 2, "dim_b": 1, "re": [[1, 0], [0]]}')
    code, _, err = run(capsys, "divergence", "domega_sep", "--rho", str(p))
    assert code == 3 and "row 1" in err


def test_verify_deterministic(capsys):
    a = run(capsys, "verify", "werner", "--seed", "3")
    b = run(capsys, "verify", "werner", "--seed", "3")
    assert a == b
    assert a[0] == 0
    assert a[1].splitlines()[0] == "suite,check,instances,failures,worst"
    assert "PASS werner/" in a[2]
