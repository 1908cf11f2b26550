import json

import numpy as np
import pytest

from faao.cli import main
from faao.reporting import read_csv


def run(args):
    return main(args)


class TestSolveCommand:
    def test_writes_reports_and_solution(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = run(["solve", "--alpha", "0.2", "--beta", "1.7", "--M", "16",
                    "--N", "16", "--example", "2", "--out", str(out)])
        assert code == 0
        for name in ("manifest.json", "solution.csv", "solve_report.json",
                     "error_report.json", "summary.csv", "solution.png"):
            assert (out / name).exists(), name
        line = capsys.readouterr().out
        assert "(Iter1, Iter2)" in line and "Time" in line

        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "solve"
        for name in ("solution.csv", "summary.csv", "solve_report.json"):
            assert name in manifest["outputs"]
        # data files point back at the manifest
        assert (out / "summary.csv").read_text().startswith("# manifest:")
        report = json.loads((out / "solve_report.json").read_text())
        assert report["manifest"] == "manifest.json"
        assert report["converged"] is True

    def test_json_format_writes_binary_dump(self, tmp_path):
        out = tmp_path / "run"
        code = run(["solve", "--alpha", "0.2", "--beta", "1.7", "--M", "12",
                    "--N", "12", "--example", "2", "--format", "json",
                    "--no-figures", "--out", str(out)])
        assert code == 0
        sidecar = json.loads((out / "solution.bin.json").read_text())
        data = np.fromfile(out / "solution.bin", dtype=sidecar["dtype"])
        assert data.size == np.prod(sidecar["shape"])
        assert not (out / "solution.png").exists()

    def test_missing_alpha_is_usage_error(self, tmp_path, capsys):
        code = run(["solve", "--beta", "1.5", "--M", "8", "--N", "8",
                    "--out", str(tmp_path)])
        assert code == 2
        assert "--alpha" in capsys.readouterr().err

    def test_dims_conflict_rejected(self, tmp_path):
        code = run(["solve", "--alpha", "0.3", "--beta", "1.5", "--M", "8",
                    "--N", "8", "--example", "1", "--dims", "2",
                    "--out", str(tmp_path)])
        assert code == 2

    def test_dag_run_exits_zero_with_flag(self, tmp_path):
        out = tmp_path / "dag"
        code = run(["solve", "--alpha", "0.2", "--beta", "1.7", "--M", "16",
                    "--N", "16", "--example", "2", "--solver", "bicgstab",
                    "--max-iter", "1", "--no-figures", "--out", str(out)])
        assert code == 0
        report = json.loads((out / "solve_report.json").read_text())
        assert report["flagged_dag"] is True

    def test_spec_json_input(self, tmp_path):
        doc = {"alpha": 0.2, "beta": 1.7, "kappa": 1.0, "x_left": -1.0,
               "x_right": 1.0, "t_final": 1.0, "M": 12, "N": 12,
               "dims": 1, "example_id": 2}
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(doc))
        out = tmp_path / "run"
        code = run(["solve", "--spec-json", str(spec_path), "--no-figures",
                    "--out", str(out)])
        assert code == 0
        header, rows = read_csv(out / "summary.csv")
        assert rows[0][header.index("M")] == "12"

    def test_reruns_are_deterministic(self, tmp_path):
        args = ["solve", "--alpha", "0.25", "--beta", "1.6", "--M", "14",
                "--N", "14", "--example", "2", "--no-figures"]
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run(args + ["--out", str(out1)]) == 0
        assert run(args + ["--out", str(out2)]) == 0
        assert (out1 / "solution.csv").read_bytes() == \
            (out2 / "solution.csv").read_bytes()
        assert (out1 / "error_report.json").read_bytes() == \
            (out2 / "error_report.json").read_bytes()
        # every column but the (informative-only) wall time is identical
        h1, r1 = read_csv(out1 / "summary.csv")
        h2, r2 = read_csv(out2 / "summary.csv")
        drop = h1.index("wall_time")
        strip = lambda rows: [[v for i, v in enumerate(r) if i != drop]
                              for r in rows]
        assert h1 == h2 and strip(r1) == strip(r2)


class TestConvergenceCommand:
    def test_time_ladder_table(self, tmp_path, capsys):
        out = tmp_path / "conv"
        code = run(["convergence", "--alpha", "0.4", "--beta", "1.7",
                    "--M", "10", "--levels", "2", "--out", str(out)])
        assert code == 0
        header, rows = read_csv(out / "convergence.csv")
        assert header == ["M", "N", "err_inf", "order_inf", "err_2", "order_2"]
        assert len(rows) == 2
        assert rows[0][3] == ""  # no order on the coarsest level
        assert float(rows[1][3]) == pytest.approx(3.0 - 0.4, abs=0.2)
        assert (out / "convergence.png").exists()

    def test_single_level_ladder(self, tmp_path):
        out = tmp_path / "conv1"
        code = run(["convergence", "--alpha", "0.4", "--beta", "1.7",
                    "--M", "10", "--levels", "1", "--no-figures",
                    "--out", str(out)])
        assert code == 0
        _, rows = read_csv(out / "convergence.csv")
        assert len(rows) == 1 and rows[0][3] == ""
        assert float(rows[0][2]) > 0

    def test_space_ladder_needs_N(self, tmp_path):
        code = run(["convergence", "--alpha", "0.4", "--beta", "1.7",
                    "--ladder", "space", "--M", "64", "--levels", "2",
                    "--out", str(tmp_path)])
        assert code == 2


class TestAnalysisCommand:
    def test_condition_table_and_spectra(self, tmp_path):
        out = tmp_path / "ana"
        code = run(["analysis", "--alpha", "0.1", "--beta", "1.1",
                    "--example", "2", "--sizes", "8,16", "--spectrum",
                    "--out", str(out)])
        assert code == 0
        header, rows = read_csv(out / "condition.csv")
        assert header == ["alpha", "beta", "N", "kappa_M", "kappa_P"]
        assert len(rows) == 2
        row16 = [r for r in rows if r[2] == "16"][0]
        assert float(row16[3]) == pytest.approx(9.86, rel=0.005)
        assert float(row16[4]) == pytest.approx(1.23, rel=0.005)
        spectra = list(out.glob("spectrum_*_N16.csv"))
        assert len(spectra) == 4
        header, rows = read_csv(spectra[0])
        assert header == ["re", "im"]

    def test_pair_grid(self, tmp_path):
        out = tmp_path / "grid"
        code = run(["analysis", "--alphas", "0.1,0.2", "--betas", "1.1,1.7",
                    "--example", "2", "--sizes", "8", "--out", str(out)])
        assert code == 0
        _, rows = read_csv(out / "condition.csv")
        assert len(rows) == 2  # paired lists, not the cross product

    def test_dense_guard_rows_are_skipped_with_message(self, tmp_path, capsys):
        out = tmp_path / "guard"
        code = run(["analysis", "--alpha", "0.2", "--beta", "1.7",
                    "--example", "2", "--sizes", "8,400", "--out", str(out)])
        assert code == 0
        assert "guarded" in capsys.readouterr().err
        _, rows = read_csv(out / "condition.csv")
        assert len(rows) == 1  # only the size inside the guard

    def test_outputs_parse_back(self, tmp_path):
        out = tmp_path / "rt"
        assert run(["analysis", "--alpha", "0.2", "--beta", "1.7",
                    "--example", "2", "--sizes", "8", "--format", "json",
                    "--out", str(out)]) == 0
        doc = json.loads((out / "condition.json").read_text())
        assert doc["header"] == ["alpha", "beta", "N", "kappa_M", "kappa_P"]
        assert doc["manifest"] == "manifest.json"
