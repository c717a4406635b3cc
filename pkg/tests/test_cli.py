import csv
import json

import pytest

from distortion_dro.cli import fmt, main


def run(tmp_path, command, cfg, *extra, out="out"):
    path = tmp_path / f"{command}.json"
    path.write_text(json.dumps(cfg))
    code = main([command, "--config", str(path), "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


def read(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_fmt():
    assert fmt(0.334543781) == "0.334544"
    assert fmt(-0.0) == "0"
    assert fmt(float("inf")) == "inf"
    assert fmt([1, 0.5]) == "(1 0.5)"
    assert fmt(True) == "true"


def test_envelope_tk(tmp_path):
    code, out = run(tmp_path, "envelope", {"h": {"kind": "tk", "gamma": 0.7}})
    assert code == 0
    rows = {r["quantity"]: r for r in read(out / "envelope_summary.csv")}
    t0 = float(rows["t0"]["a"])
    assert t0 == pytest.approx(0.130276, abs=1e-5)
    assert float(rows["I_h"]["a"]) == 0 and float(rows["I_h"]["b"]) == pytest.approx(1 - t0, abs=1e-5)
    samples = read(out / "envelope_samples.csv")
    assert len(samples) == 201
    assert all(float(s["h_star"]) >= float(s["h_hat"]) - 1e-6 for s in samples)


def test_envelope_es_has_no_divergence(tmp_path):
    code, out = run(tmp_path, "envelope", {"h": {"kind": "es", "alpha": 0.9}, "samples": 11})
    assert code == 0
    assert not [r for r in read(out / "envelope_summary.csv") if r["quantity"] == "I_h"]


def test_envelope_difference(tmp_path):
    h = {"kind": "difference", "left": {"kind": "tk", "gamma": 0.8}, "right": {"kind": "tk", "gamma": 0.7}}
    code, out = run(tmp_path, "envelope", {"h": h})
    I = [r for r in read(out / "envelope_summary.csv") if r["quantity"] == "I_h"]
    assert len(I) == 1
    assert float(I[0]["a"]) == pytest.approx(0.2422, abs=2e-3) and float(I[0]["b"]) == pytest.approx(1.0)


def test_bound_cantelli(tmp_path):
    code, out = run(tmp_path, "bound", {"h": {"kind": "var", "alpha": 0.95}, "p": 2, "m": 1, "v": 2})
    assert code == 0
    (row,) = read(out / "bound.csv")
    assert float(row["value_sup"]) == pytest.approx(1 + 2 * 19**0.5, rel=1e-5)
    assert row["attained_sup"] == "false" and row["attained_inf"] == "true"
    assert not read(out / "extremal_quantile_sup.csv") and read(out / "extremal_quantile_inf.csv")


def test_oracle_random(tmp_path):
    code, out = run(tmp_path, "oracle", {"random": 5}, "--seed", "3")
    assert code == 0
    rows = read(out / "oracle.csv")
    assert len(rows) == 5 and max(float(r["abs_diff"]) for r in rows) < 1e-8


def test_concentrate(tmp_path):
    cfg = {"model": {"kind": "uniform"}, "intervals": [[0.2, 0.6]], "levels": [0.1, 0.3, 0.5, 0.9]}
    code, out = run(tmp_path, "concentrate", cfg)
    rows = read(out / "concentrate.csv")
    assert [float(r["concentrated"]) for r in rows] == pytest.approx([0.1, 0.4, 0.4, 0.9])


@pytest.mark.parametrize(
    "cfg",
    [
        {"h": {"kind": "tk", "gamma": 0.7}, "colour": "red"},
        {"samples": 5},
        {"h": {"kind": "nope"}},
    ],
)
def test_bad_config_exits_nonzero(tmp_path, cfg, capsys):
    code, _ = run(tmp_path, "envelope", cfg)
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_table_unknown_nested_field(tmp_path):
    code, _ = run(tmp_path, "table", {"table": 3, "ra": {"N": 10, "speed": 1}})
    assert code == 2


def test_table1_byte_identical_and_md(tmp_path):
    code1, out1 = run(tmp_path, "table", {"table": 1}, out="a")
    code2, out2 = run(tmp_path, "table", {"table": 1}, "--format", "md", out="b")
    assert code1 == code2 == 0
    assert (out1 / "table1.csv").read_bytes() == (out2 / "table1.csv").read_bytes()
    assert (out2 / "table1.md").read_text().startswith("| n |")
    rows = read(out1 / "table1.csv")
    assert [float(r["D"]) for r in rows] == pytest.approx([0.193, 0.150, 0.335, 0.221], abs=2e-3)
    assert (out1 / "table1_timing.csv").exists()


def test_marginal_table_rerun_identical(tmp_path):
    cfg = {"table": 4, "rows": [6], "ra": {"N": 400}, "search": {"starts": 2, "search_N": 200, "maxfev": 40}}
    _, out1 = run(tmp_path, "table", cfg, "--seed", "5", out="a")
    _, out2 = run(tmp_path, "table", cfg, "--seed", "5", "--threads", "2", out="b")
    assert (out1 / "table4.csv").read_bytes() == (out2 / "table4.csv").read_bytes()
    (row,) = read(out1 / "table4.csv")
    assert row["status"] == "ok" and float(row["V_VaR"]) <= float(row["V_ES"]) + 1e-6
