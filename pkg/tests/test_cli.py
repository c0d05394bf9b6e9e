"""End-to-end runs of every subcommand through main()."""

import csv
import json
from pathlib import Path

import pytest

from boundchain import BoundingChain
from boundchain.cli import main, parse_grid, parse_ints, parse_p0
from boundchain.errors import ValidationError

NET = str(Path(__file__).resolve().parents[1] / "docs" / "examples"
          / "network.json")


@pytest.fixture(scope="module")
def chain_csv(tmp_path_factory, upper211):
    path = tmp_path_factory.mktemp("chains") / "upper.csv"
    upper211.to_csv(path)
    return str(path)


def test_parse_helpers():
    assert parse_ints("2,1,1") == (2, 1, 1)
    with pytest.raises(ValidationError):
        parse_ints("2,x")
    grid = parse_grid("0:2:0.5")
    assert grid == pytest.approx([0.0, 0.5, 1.0, 1.5, 2.0])
    assert list(parse_grid("80:120:20", integer=True)) == [80, 100, 120]
    with pytest.raises(ValidationError):
        parse_grid("5:1")
    p0 = parse_p0("delta:3", 10)
    assert p0[3] == 1.0 and p0.sum() == 1.0
    with pytest.raises(ValidationError):
        parse_p0("uniform", 10)


def test_build_and_reload(tmp_path, upper211):
    out = tmp_path / "chain.csv"
    code = main(["build", "--network", NET, "--weights", "2,1,1",
                 "--direction", "upper", "--l-exact", "70",
                 "--l-total", "3000", "--out", str(out)])
    assert code == 0
    back = BoundingChain.from_csv(out)
    for ell in (0, 5, 40, 200):
        assert back.row(ell) == upper211.row(ell)
    man = json.loads((tmp_path / "chain.csv.manifest.json").read_text())
    assert man["command"] == "build"
    assert len(man["config_sha256"]) == 64
    assert man["config"]["weights"] == "2,1,1"
    assert "numpy" in man["versions"]


def test_build_rejects_bad_input(tmp_path):
    code = main(["build", "--network", NET, "--weights", "2,0,1",
                 "--direction", "upper", "--out", str(tmp_path / "c.csv")])
    assert code == 2  # weights must be positive
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code = main(["build", "--network", str(bad), "--weights", "2,1,1",
                 "--direction", "upper", "--out", str(tmp_path / "c.csv")])
    assert code == 2


def test_verify_pass_and_fail(tmp_path, chain_csv, upper211, capsys):
    assert main(["verify", "--network", NET, "--chain", chain_csv,
                 "--l-check", "50"]) == 0
    assert "verified" in capsys.readouterr().out
    # tamper with one up-rate: the bound stops dominating right there
    exact = {k: v.copy() for k, v in upper211.exact.items()}
    exact[2][30] -= 1.0
    bad = BoundingChain("upper", upper211.j_max, upper211.l_exact,
                        upper211.l_total, exact, upper211.tails,
                        upper211.weights)
    bad_csv = tmp_path / "bad.csv"
    bad.to_csv(bad_csv)
    assert main(["verify", "--network", NET, "--chain", str(bad_csv),
                 "--l-check", "50"]) == 2
    err = capsys.readouterr().err
    assert "FAILED" in err and "kind=A1" in err and "ell=30" in err


def test_verify_weight_mismatch(chain_csv):
    assert main(["verify", "--network", NET, "--chain", chain_csv,
                 "--weights", "1,1,1"]) == 2


def test_classify_output(tmp_path, chain_csv, capsys):
    out = tmp_path / "class.json"
    assert main(["classify", "--chain", chain_csv, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["direction"] == "upper"
    assert doc["class"] == "positive-recurrent"
    assert doc["B1"] == pytest.approx(-0.5)
    assert doc["B3"] == pytest.approx(1.75)
    assert doc["valid"] is True
    assert doc["irreducible"] is True
    assert (tmp_path / "class.json.manifest.json").exists()
    shown = json.loads(capsys.readouterr().out)
    assert shown == doc


def label_doc(path, label, direction, irreducible=True):
    path.write_text(json.dumps({
        "direction": direction, "class": label,
        "provenance": "drift statistics", "irreducible": irreducible,
    }))
    return str(path)


def test_combine_cli(tmp_path, capsys):
    lo = label_doc(tmp_path / "lo.json", "positive-recurrent", "lower")
    hi = label_doc(tmp_path / "hi.json", "positive-recurrent", "upper")
    out = tmp_path / "verdict.json"
    assert main(["combine", "--lower", lo, "--upper", hi,
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())["x_behavior"] == "positive-recurrent"
    capsys.readouterr()

    # impossible pairing: lower explosive against a recurrent upper bound
    lo2 = label_doc(tmp_path / "lo2.json", "explosive", "lower")
    assert main(["combine", "--lower", lo2, "--upper", hi]) == 4
    assert "impossible" in capsys.readouterr().err

    # missing attestation is refused outright, then waived explicitly
    lo3 = label_doc(tmp_path / "lo3.json", "positive-recurrent", "lower",
                    irreducible=False)
    assert main(["combine", "--lower", lo3, "--upper", hi]) == 2
    capsys.readouterr()
    assert main(["combine", "--lower", lo3, "--upper", hi,
                 "--assume-irreducible"]) == 0
    capsys.readouterr()

    # direction sanity on the inputs
    assert main(["combine", "--lower", hi, "--upper", lo]) == 2


def test_couple_cli(tmp_path, chain_csv):
    out = tmp_path / "paths.csv"
    assert main(["couple", "--network", NET, "--chain", chain_csv,
                 "--x0", "3,2,1", "--y0", "12", "--tf", "1.5",
                 "--seeds", "3", "--out", str(out)]) == 0
    with out.open() as fh:
        rows = list(csv.DictReader(fh))
    assert {r["seed"] for r in rows} == {"0", "1", "2"}
    assert all(int(r["class_x"]) <= int(r["y"]) for r in rows)
    assert all(int(r["class_x"]) ==
               2 * int(r["x1"]) + int(r["x2"]) + int(r["x3"]) for r in rows)
    man = json.loads((tmp_path / "paths.csv.manifest.json").read_text())
    assert man["seeds"] == [0, 1, 2]


def test_simulate_cli(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert main(["simulate", "--network", NET, "--x0", "3,2,1",
                 "--tf", "1.0", "--seed", "4", "--out", str(out)]) == 0
    with out.open() as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0] == {"t": "0.0", "x1": "3", "x2": "2", "x3": "1"}
    assert float(rows[-1]["t"]) <= 1.0
    capsys.readouterr()

    est_out = tmp_path / "exit.json"
    assert main(["simulate", "--network", NET, "--x0", "3,2,1",
                 "--tf", "0.5", "--stop", "class>60", "--weights", "2,1,1",
                 "--samples", "200", "--out", str(est_out)]) == 0
    doc = json.loads(est_out.read_text())
    assert doc["samples"] == 200 and doc["N"] == 60
    assert 0.0 <= doc["lo"] <= doc["hi"] <= 1.0
    capsys.readouterr()

    assert main(["simulate", "--network", NET, "--x0", "3,2,1",
                 "--tf", "0.5", "--stop", "class>60"]) == 2  # no weights
    assert main(["simulate", "--network", NET, "--x0", "3,2,1",
                 "--tf", "0.5", "--stop", "x1>3", "--weights", "2,1,1"]) == 2


def test_truncate_cli(tmp_path, chain_csv, capsys):
    out = tmp_path / "cert.json"
    assert main(["truncate", "--chain", chain_csv, "--p0", "delta:20",
                 "--M", "200", "--tf", "1.0", "--N", "60",
                 "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["N"] == 60 and doc["M"] == 200
    assert 0.0 <= doc["bound_clipped"] <= 1.0
    capsys.readouterr()

    assert main(["truncate", "--chain", chain_csv, "--p0", "delta:20",
                 "--M", "200", "--tf", "1.0", "--epsilon", "0.01",
                 "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["bound_clipped"] < 0.01
    capsys.readouterr()

    assert main(["truncate", "--chain", chain_csv, "--p0", "delta:20",
                 "--M", "200", "--tf", "1.0"]) == 2  # neither --N nor --epsilon


def test_plan_truncation_cli(tmp_path, chain_csv, capsys):
    out = tmp_path / "plan.json"
    assert main(["plan-truncation", "--chain", chain_csv, "--p0", "delta:20",
                 "--M", "200", "--tf", "1.0", "--epsilons", "0.1,0.01",
                 "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert set(doc["plan"]) == {"0.1", "0.01"}
    assert doc["plan"]["0.01"] >= doc["plan"]["0.1"] > 0
    capsys.readouterr()


def test_heatmap_cli(tmp_path, chain_csv):
    out = tmp_path / "heat.csv"
    assert main(["heatmap", "--chain", chain_csv, "--p0", "delta:20",
                 "--n-grid", "40:80:20", "--t-grid", "0.25:1.0:0.25",
                 "--out", str(out)]) == 0
    with out.open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * 4
    for r in rows:
        assert 0.0 <= float(r["E_T_clipped"]) <= 1.0
    # at fixed t the bound shrinks as the window widens
    by_t = {}
    for r in rows:
        by_t.setdefault(r["t"], []).append((int(r["N"]),
                                            float(r["E_T_clipped"])))
    for vals in by_t.values():
        ordered = [b for _, b in sorted(vals)]
        assert all(y <= x + 1e-12 for x, y in zip(ordered, ordered[1:]))


def test_analyze_good_pair(tmp_path, capsys):
    out_dir = tmp_path / "report"
    code = main(["analyze", "--network", NET, "--lower-weights", "2,2,5",
                 "--upper-weights", "2,1,1", "--l-exact", "60",
                 "--out-dir", str(out_dir)])
    assert code == 0
    doc = json.loads((out_dir / "analysis.json").read_text())
    assert doc["verdict"]["x_behavior"] == "positive-recurrent"
    assert doc["lower_class"]["class"] == "positive-recurrent"
    assert doc["upper_class"]["class"] == "positive-recurrent"
    assert all(s["ok"] for s in doc["stages"].values())
    assert (out_dir / "lower.csv").exists()
    assert (out_dir / "upper.csv").exists()
    capsys.readouterr()


def test_analyze_naive_upper_gives_no_information(tmp_path, capsys):
    out_dir = tmp_path / "report"
    code = main(["analyze", "--network", NET, "--lower-weights", "2,2,5",
                 "--upper-weights", "1,1,1", "--l-exact", "60",
                 "--out-dir", str(out_dir)])
    assert code == 0
    doc = json.loads((out_dir / "analysis.json").read_text())
    assert doc["upper_class"]["class"] == "explosive"
    assert doc["verdict"]["x_behavior"] == "no-information"
    capsys.readouterr()


def test_analyze_reports_stage_failure(tmp_path, capsys):
    # the (2,2,5) upper construction has no admissible tail model, so the
    # build stage fails and the exit code carries through
    out_dir = tmp_path / "report"
    code = main(["analyze", "--network", NET, "--lower-weights", "2,2,5",
                 "--upper-weights", "2,2,5", "--l-exact", "60",
                 "--out-dir", str(out_dir)])
    assert code == 3
    doc = json.loads((out_dir / "analysis.json").read_text())
    assert doc["stages"]["build-upper"]["ok"] is False
    assert doc["stages"]["build-lower"]["ok"] is True
    assert "verdict" not in doc
    capsys.readouterr()
