import csv
import json
import subprocess
import sys
from dataclasses import replace

import jsonschema
import numpy as np
import pytest

from pdmp_moments import distributions as dists
from pdmp_moments import files
from pdmp_moments.cli import main
from pdmp_moments.gene_expression import PRESETS, build_protein_model, protein_cv2

from conftest import two_state_model


def _protein_doc(J=0.5, gamma=0.5):
    return {
        "dimension": 1,
        "dynamics": {"a_hat": [0.0], "A": [[-gamma]]},
        "poisson_resets": [{"rate": 10.0, "J": [[1.0]], "R_mean": [1.0]}],
        "general_reset": {
            "distribution": {"type": "gamma", "shape": 4.0, "scale": 0.25},
            "J": [[J]], "B": [[0.125]], "C": [1.0],
        },
    }


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "protein.json"
    path.write_text(json.dumps(_protein_doc()))
    return path


def _write(tmp_path, doc, name="m.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(path)


def test_validate_ok(model_file, capsys):
    assert main(["validate", str(model_file)]) == 0
    assert "valid" in capsys.readouterr().err


def test_validate_missing_J(tmp_path, capsys):
    doc = _protein_doc()
    del doc["general_reset"]["J"]
    assert main(["validate", _write(tmp_path, doc)]) == 2
    err = capsys.readouterr().err
    assert "general_reset" in err and "'J'" in err


def test_validate_unknown_key(tmp_path, capsys):
    doc = _protein_doc()
    doc["general_reset"]["Q2"] = [[0.0]]
    assert main(["validate", _write(tmp_path, doc)]) == 2
    assert "Q2" in capsys.readouterr().err


def test_validate_malformed_json(tmp_path, capsys):
    path = _write(tmp_path, '{"dimension": 1,\n  "dynamics": {"a_hat": [0.0] "A": [[0]]}}')
    assert main(["validate", path]) == 2
    err = capsys.readouterr().err
    assert ":2:" in err and "malformed JSON" in err


def test_validate_nan_literal(tmp_path, capsys):
    text = json.dumps(_protein_doc()).replace("-0.5", "NaN")
    assert main(["validate", _write(tmp_path, text)]) == 2


def test_validate_dimension_mismatch(tmp_path, capsys):
    doc = _protein_doc()
    doc["general_reset"]["J"] = [[0.5, 0.0], [0.0, 0.5]]
    assert main(["validate", _write(tmp_path, doc)]) == 2
    assert "general_reset.J" in capsys.readouterr().err


def test_validate_missing_file(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nope.json")]) == 2


def test_validate_bad_distribution(tmp_path, capsys):
    doc = _protein_doc()
    doc["general_reset"]["distribution"] = {"type": "gamma", "shape": 4.0}
    assert main(["validate", _write(tmp_path, doc)]) == 2
    assert "distribution" in capsys.readouterr().err


def test_solve_matches_case_study(model_file, tmp_path):
    out = tmp_path / "r.json"
    assert main(["solve", str(model_file), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, files.load_schema("result"))
    p = replace(PRESETS["protein"], gamma=0.5, T_dist=dists.Gamma(4.0, 0.25))
    assert doc["cv2"][0] == pytest.approx(protein_cv2(p).total_cv2, rel=1e-9)
    assert doc["stability"]["stable"] is True
    assert doc["input_digest"].startswith("sha256:")


def test_result_round_trip(model_file, tmp_path):
    out = tmp_path / "r.json"
    main(["solve", str(model_file), "--out", str(out)])
    back = files.read_result(out)
    doc = json.loads(out.read_text())
    assert np.array_equal(back["second_moment"], np.array(doc["second_moment"]))
    again = tmp_path / "r2.json"
    files.write_atomic(again, files.dumps({**doc}))
    assert json.loads(again.read_text()) == doc


def test_solve_to_stdout_and_order_one(model_file, capsys):
    assert main(["solve", str(model_file), "--order", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["order"] == 1 and doc["second_moment"] is None


def test_solve_unstable_exits_3(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["solve", _write(tmp_path, _protein_doc(J=2.5, gamma=0.01)), "--out", str(out)]) == 3
    assert "spectral radius" in capsys.readouterr().err
    assert not out.exists()
    assert not list(tmp_path.glob(".r.json.*"))


def test_solve_zero_forcing(tmp_path, capsys):
    doc = _protein_doc()
    doc["poisson_resets"] = []
    assert main(["solve", _write(tmp_path, doc), "--order", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["mean"] == [0.0]


def test_tol_is_recorded(model_file, capsys):
    assert main(["solve", str(model_file), "--tol", "1e-8"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["tolerances"]["quad_atol"] == 1e-8
    assert main(["solve", str(model_file), "--tol", "-1"]) == 2


def test_model_dict_round_trip():
    m = two_state_model()
    back = files.model_from_dict(json.loads(json.dumps(files.model_to_dict(m))))
    assert np.array_equal(back.general.Q, m.general.Q)
    assert back.dist == m.dist


def test_simulate_compare(model_file, tmp_path, capsys):
    out = tmp_path / "s.json"
    events = tmp_path / "ev.csv"
    assert main(["simulate", str(model_file), "--n-traj", "10000", "--seed", "7", "--compare",
                 "--events-csv", str(events), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert all(abs(z) <= 3 for z in doc["z_scores"]["mean"] + doc["z_scores"]["cv2"])
    with open(events) as fh:
        header = next(csv.reader(fh))
    assert header == ["time", "event_kind", "before_0", "after_0"]


def test_simulate_is_deterministic(model_file, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert main(["simulate", str(model_file), "--n-traj", "500", "--seed", "3", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_too_few(model_file):
    assert main(["simulate", str(model_file), "--n-traj", "50"]) == 2


def test_simulate_binomial(model_file, capsys):
    assert main(["simulate", str(model_file), "--n-traj", "200", "--sampler", "binomial-partition"]) == 0


def test_casestudy_cvT(tmp_path):
    out = tmp_path / "cvT.csv"
    assert main(["casestudy", "--sweep", "cvT", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    part = [float(r["part"]) for r in rows]
    assert all(b < a for a, b in zip(part, part[1:]))


def test_casestudy_default_row(capsys):
    assert main(["casestudy", "--b", "0"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert float(rows[0]["cc"]) == pytest.approx(1 / 27, rel=1e-12)


def test_casestudy_gamma_grid(capsys):
    assert main(["casestudy", "--sweep", "gamma", "--grid", "0,10,100,1000", "--no-hold-mean"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    last = rows[-1]
    assert float(last["total"]) == pytest.approx(1.0 / (2 * float(last["mean"])), rel=1e-2)


@pytest.mark.parametrize("argv", [["casestudy", "--k", "-1"], ["casestudy", "--cv2T", "-0.5"],
                                  ["casestudy", "--sweep", "gamma", "--grid", "a,b"], ["casestudy", "--sweep", "x"]])
def test_casestudy_bad_input(argv):
    assert main(argv) == 2


def test_module_entry_point(model_file):
    r = subprocess.run([sys.executable, "-m", "pdmp_moments", "validate", str(model_file)],
                       capture_output=True, text=True)
    assert r.returncode == 0


def test_protein_preset_as_model_file(tmp_path, capsys):
    path = _write(tmp_path, files.model_to_dict(build_protein_model(PRESETS["protein"])))
    assert main(["solve", path]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["cv2"][0] == pytest.approx(protein_cv2(PRESETS["protein"]).total_cv2, rel=1e-12)
