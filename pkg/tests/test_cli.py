import json

import numpy as np
import pytest

from soundshap.cli import main
from soundshap.core import load_json
from soundshap.tables import read_csv, read_heatmap, write_csv


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def data_csv(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "data.csv"
    write_csv(path, ["a", "b", "c"], rng.integers(0, 3, size=(10, 3)))
    return path


def test_shap_constant(capsys, tmp_path, data_csv):
    code, out, _ = run(capsys, "shap", "--data", data_csv, "--function", "constant:2", "--out-dir", tmp_path / "o")
    assert code == 0
    table = read_csv(tmp_path / "o" / "shap_cells.csv")
    phis = [h for h in table.header if h.startswith("phi")]
    assert all(np.abs(table.column(h)).max() <= 1e-12 for h in phis)
    assert json.loads(out)["aggregate_mu"] == pytest.approx([0, 0, 0], abs=1e-12)


def test_shap_ring_example(capsys, tmp_path):
    code, out, _ = run(capsys, "shap", "--function", "example:fig1", "--out-dir", tmp_path)
    assert code == 0
    summary = load_json(tmp_path / "shap_summary.json")
    assert summary["aggregate_mu"][0] <= 1e-12
    assert summary["aggregate_mu_star"][0] > 1e-3
    assert json.loads(out) == summary


def test_shap_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "shap", "--data", tmp_path / "nope.csv", "--function", "additive")
    assert code == 2 and "error" in err


def test_bad_function_spec(capsys, data_csv):
    code, _, err = run(capsys, "shap", "--data", data_csv, "--function", "wiggly")
    assert code == 2 and "unknown function spec" in err


def test_too_many_features(capsys, tmp_path):
    path = tmp_path / "wide.csv"
    write_csv(path, [f"c{j}" for j in range(21)], np.zeros((2, 21)))
    code, _, err = run(capsys, "shap", "--data", path, "--function", "additive")
    assert code == 2 and "at most 20" in err


def test_csv_parse_error_reports_line(capsys, tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n0,1\n1,oops\n")
    code, _, err = run(capsys, "kshap", "--data", path, "--function", "additive")
    assert code == 2 and ":3:" in err


def test_kshap_json_format(capsys, tmp_path, data_csv):
    code, _, _ = run(capsys, "kshap", "--data", data_csv, "--function", "product", "--format", "json",
                     "--out-dir", tmp_path)
    assert code == 0
    doc = load_json(tmp_path / "kshap_rows.json")
    rows = np.array(doc["rows"])
    assert doc["columns"][-1] == "k_2" and rows.shape == (10, 6)


def test_counterexample_outputs(capsys, tmp_path):
    code, out, _ = run(capsys, "counterexample", "--grid", "3x3", "--mask", "ring:0.5:1.2", "--feature", "0",
                       "--out-dir", tmp_path)
    assert code == 0
    rep = load_json(tmp_path / "counterexample.json")
    assert rep["found"] and rep["max_abs_shap_on_support"] <= 1e-8
    for name in ("f.csv", "shap_support.csv", "shap_extended.csv"):
        rows, cols, m = read_heatmap(tmp_path / name)
        assert m.shape == (3, 3) and rows.tolist() == [0, 1, 2]
    _, _, sup = read_heatmap(tmp_path / "shap_support.csv")
    assert np.isnan(sup).sum() == 5 and np.nanmax(np.abs(sup)) <= 1e-8


def test_counterexample_mask_file(capsys, tmp_path):
    mask = tmp_path / "mask.json"
    mask.write_text(json.dumps({"mask": [[0, 1, 0], [1, 0, 1], [0, 1, 0]]}))
    code, out, _ = run(capsys, "counterexample", "--grid", "3x3", "--mask", mask, "--out-dir", tmp_path)
    assert code == 0 and json.loads(out)["found"]


def test_counterexample_full_extended(capsys, tmp_path):
    code, out, err = run(capsys, "counterexample", "--full-extended", "--out-dir", tmp_path)
    assert code == 0 and not json.loads(out)["found"] and "no counterexample" in err


def test_counterexample_bad_grid(capsys, tmp_path):
    code, _, err = run(capsys, "counterexample", "--grid", "3by3", "--out-dir", tmp_path)
    assert code == 2


def test_headline_demonstration(capsys, tmp_path):
    """Zero aggregate on the raw rows, positive once the columns are scrambled."""
    run(capsys, "counterexample", "--out-dir", tmp_path)
    rows = np.array([[0, 1], [1, 0], [1, 2], [2, 1]] * 3, dtype=float)
    write_csv(tmp_path / "rows.csv", ["x0", "x1"], rows)
    found = False
    for seed in range(5):
        code, out, _ = run(capsys, "sound-aggregate", "--data", tmp_path / "rows.csv",
                           "--function", tmp_path / "counterexample.json", "--feature", "0",
                           "--seed", seed, "--out-dir", tmp_path / f"s{seed}")
        summary = json.loads(out)
        assert code == 0 and summary["aggregate_unscrambled"] <= 1e-9
        assert summary["certificate"]["holds"]
        found |= summary["aggregate"] > 1e-3
    assert found


def test_sound_aggregate_single_row(capsys, tmp_path):
    write_csv(tmp_path / "one.csv", ["a", "b"], [[1.0, 2.0]])
    code, out, _ = run(capsys, "sound-aggregate", "--data", tmp_path / "one.csv", "--function", "product",
                       "--feature", "1", "--out-dir", tmp_path)
    s = json.loads(out)
    assert code == 0 and s["aggregate"] == s["aggregate_unscrambled"]
    assert read_csv(tmp_path / "scrambled.csv").data.tolist() == [[1.0, 2.0]]


def test_sound_aggregate_determined(capsys, tmp_path, data_csv):
    code, out, _ = run(capsys, "sound-aggregate", "--data", data_csv, "--function", "indicator:0:1",
                       "--feature", "2", "--out-dir", tmp_path)
    s = json.loads(out)
    assert code == 0 and s["aggregate"] <= 1e-9 and s["certificate"]["holds"]


def test_byte_identical_outputs(capsys, tmp_path, data_csv):
    for k in range(2):
        run(capsys, "sound-aggregate", "--data", data_csv, "--function", "additive", "--feature", "1",
            "--mode", "sampled", "--samples", "300", "--seed", "4", "--out-dir", tmp_path / str(k))
        run(capsys, "shap", "--data", data_csv, "--function", "product", "--out-dir", tmp_path / str(k))
    for name in ("sound_aggregate.json", "scrambled.csv", "shap_cells.csv", "shap_summary.json"):
        assert (tmp_path / "0" / name).read_bytes() == (tmp_path / "1" / name).read_bytes()


def test_emitted_csvs_round_trip(capsys, tmp_path, data_csv):
    run(capsys, "shap", "--data", data_csv, "--function", "additive", "--out-dir", tmp_path)
    path = tmp_path / "shap_cells.csv"
    table = read_csv(path)
    write_csv(tmp_path / "again.csv", table.header, table.data)
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()


def test_export_grid(capsys, tmp_path):
    code, _, _ = run(capsys, "export-grid", "--example", "fig5", "--out-dir", tmp_path)
    assert code == 0
    doc = load_json(tmp_path / "grid.json")
    assert doc["features"] == [[0, 1, 2], [0, 1, 2]] and sum(doc["mass"]) == pytest.approx(1)
    table = read_csv(tmp_path / "cells.csv")
    assert table.data.shape == (9, 4)
    # the exported grid feeds straight back in
    code, out, _ = run(capsys, "shap", "--function", tmp_path / "grid.json", "--out-dir", tmp_path / "s")
    assert code == 0 and json.loads(out)["aggregate_mu"][0] <= 1e-12


def test_export_grid_needs_input(capsys, tmp_path):
    code, _, _ = run(capsys, "export-grid", "--out-dir", tmp_path)
    assert code == 2


def test_verify_filter(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--check", "spectrum", "--d", "3", "--out-dir", tmp_path)
    assert code == 0 and out.splitlines()[0].startswith("PASS spectrum") and len(out.splitlines()) == 1
    report = load_json(tmp_path / "verify_report.json")
    assert [c["name"] for c in report["checks"]] == ["spectrum"]


def test_verify_fault_injection(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--check", "efficiency", "--inject-fault", "--out-dir", tmp_path)
    assert code == 1 and out.startswith("FAIL efficiency")
    assert load_json(tmp_path / "verify_report.json")["checks"][0]["failing_instances"]


def test_verify_unknown_check(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["verify", "--check", "nonsense"])
    assert info.value.code == 2
