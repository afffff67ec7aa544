import json

import jsonschema
from gmpy2 import mpq
import pytest

from fedq.cli import ParseError, SCHEMA_FOR, load_schema, main, parse_config, parse_expr
from fedq.presets import jet3, sphere
from fedq.scalars import Ring


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def check_schema(command, text):
    doc = json.loads(text)
    jsonschema.validate(doc, load_schema(SCHEMA_FOR[command]))
    return doc


def test_parse_expressions():
    R = sphere().ring
    assert parse_expr("q1*q2^2 - 3/2*p1 + s^-2", R) == R.q(1) * R.q(2) ** 2 - R.p(1).scale(mpq(3, 2)) + R.fsym("s", -2)
    assert parse_expr("-(q1 + p2)^2", R) == -(R.q(1) + R.p(2)) ** 2
    J = jet3().ring
    assert parse_expr("G1_12*G2_33[1,0,0]", J) == J.jet(1, 1, 2) * J.jet(2, 3, 3, (1, 0, 0))


@pytest.mark.parametrize("text,col", [("q1^^2", 4), ("q3", 1), ("c^-1", 1), ("q1/q2", 3), ("(q1", 4),
                                      ("", 1), ("q1 $ 2", 4), ("x", 1)])
def test_parse_errors_report_column(text, col):
    with pytest.raises(ParseError) as err:
        parse_expr(text, sphere().ring)
    assert err.value.column == col


def test_config_defaults_and_presets():
    cfg = parse_config({"connection": "flat", "n": 2})
    assert cfg.connection == {"kind": "preset", "preset": "flat"} and cfg.n == 2
    cfg = parse_config({"connection": {"kind": "preset", "preset": "sphere"}, "degrees": {"Z": 6, "N": 3}})
    assert (cfg.Z, cfg.N) == (6, 3)


def test_config_schema_error_has_pointer(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"degrees": {"Z": "six"}}))
    code, _, err = run(capsys, "build", "--config", str(p))
    assert code == 2 and "/degrees/Z" in err
    p.write_text("{bad json")
    code, _, err = run(capsys, "build", "--config", str(p))
    assert code == 2 and "column" in err


def test_star_example(capsys):
    code, out, _ = run(capsys, "star", "--a", "q1", "--b", "q2", "--preset", "sphere", "--N", "3")
    assert code == 0
    doc = check_schema("star", out)
    assert doc["components"]["0"] == [{"q": [1, 1], "p": [0, 0], "re": "1/1", "im": "0/1"}]
    assert all(doc["components"][str(i)] == [] for i in (1, 2, 3))


def test_bracket_example(capsys):
    code, out, _ = run(capsys, "bracket", "--a", "q1", "--b", "p1", "--preset", "sphere", "--N", "3")
    doc = check_schema("bracket", out)
    assert code == 0
    assert doc["components"]["1"] == [{"q": [0, 0], "p": [0, 0], "re": "0/1", "im": "-1/1"}]
    assert all(doc["components"][str(i)] == [] for i in (0, 2, 3))


def test_abelian_flat_is_empty(capsys):
    code, out, _ = run(capsys, "abelian", "--preset", "flat", "--Z", "6")
    doc = check_schema("abelian", out)
    assert code == 0
    assert all(v == [] for z in doc["r"].values() for v in z.values())


@pytest.mark.parametrize("command", ["build", "curvature", "abelian", "lift", "star", "bracket", "audit"])
def test_outputs_validate_and_are_deterministic(capsys, command):
    args = [command, "--preset", "poly2", "--Z", "4", "--N", "2", "--a", "p1*q2", "--b", "p2^2"]
    code1, out1, _ = run(capsys, *args)
    code2, out2, _ = run(capsys, *args)
    assert code1 == 0 and out1 == out2
    check_schema(command, out1)
    code, text, _ = run(capsys, *args, "--output", "text")
    assert code == 0 and text.strip()


def test_insufficient_degree(capsys):
    code, _, err = run(capsys, "star", "--a", "q1", "--b", "p1", "--preset", "sphere", "--N", "3", "--Z", "4")
    assert code == 2 and "Z >= 2N" in err


def test_usage_errors(capsys, monkeypatch):
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "star", "--preset", "sphere", "--a", "q1^^2", "--b", "q2")[0] == 2
    assert run(capsys, "build", "--preset", "torus")[0] == 2
    assert run(capsys, "lift", "--preset", "flat")[0] == 2
    monkeypatch.setenv("FEDQ_THREADS", "zero")
    assert run(capsys, "star", "--preset", "flat", "--a", "q1", "--b", "p1", "--N", "1")[0] == 2
    monkeypatch.setenv("FEDQ_THREADS", "2")
    assert run(capsys, "star", "--preset", "flat", "--a", "q1", "--b", "p1", "--N", "1")[0] == 0


def test_generic_config_and_failing_audit(tmp_path, capsys):
    good = {"n": 2, "connection": {"kind": "generic", "gamma_base": {"1,1,2": "q2"}, "f": {"1,1,1,2": "q1"}},
            "degrees": {"Z": 4}, "inputs": ["q1", "p2"]}
    p = tmp_path / "good.json"
    p.write_text(json.dumps(good))
    code, out, _ = run(capsys, "audit", "--config", str(p))
    assert code == 0 and check_schema("audit", out)["passed"]
    # a polynomial connection in the special atlas breaks the vanishing families
    bad = {"n": 2, "connection": {"kind": "special-atlas",
                                  "gamma_base": {"1,1,1": "q2", "1,1,2": "1+q1", "2,2,2": "q1/2", "2,1,2": "q2-1/3"}},
           "degrees": {"Z": 4}}
    p.write_text(json.dumps(bad))
    code, out, _ = run(capsys, "audit", "--config", str(p))
    doc = check_schema("audit", out)
    assert code == 1 and not doc["passed"]
    assert "tables.R_pure_monomial" in doc["failures"]


def test_riemannian_metric_config(tmp_path, capsys):
    cfg = {"n": 2, "connection": {"kind": "riemannian", "metric": [["1", "0"], ["0", "1+q1^2"]]}}
    p = tmp_path / "m.json"
    p.write_text(json.dumps(cfg))
    code, _, err = run(capsys, "build", "--config", str(p))
    # 1 + q1^2 is not invertible in the polynomial ring
    assert code == 1 and "not invertible" in err
    cfg["connection"]["metric"] = [["2", "0"], ["0", "3"]]
    p.write_text(json.dumps(cfg))
    code, out, _ = run(capsys, "build", "--config", str(p))
    assert code == 0 and json.loads(out)["gamma"] == {}
