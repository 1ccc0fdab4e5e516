import json
from pathlib import Path

import numpy as np
import pytest

from sepcov.cli import main, read_chains_csv, read_csv_with_meta
from sepcov.diagnostics import acf


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture
def generated(tmp_path):
    out = tmp_path / "gen"
    code = run(["generate", "--d1", 2, "--d2", 3, "--n", 60, "--seed", 7, "--out", out])
    assert code == 0
    return out


class TestGenerate:
    def test_outputs_and_shapes(self, generated):
        data, meta = read_csv_with_meta(generated / "data.csv")
        assert data.shape == (60, 6)
        assert meta["d1"] == "2" and meta["d2"] == "3"
        truth1, _ = read_csv_with_meta(generated / "sigma1_true.csv")
        truth2, _ = read_csv_with_meta(generated / "sigma2_true.csv")
        assert truth1.shape == (2, 2) and truth2.shape == (3, 3)
        assert np.linalg.eigvalsh(truth1)[0] > 0

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run(["generate", "--d1", 2, "--d2", 2, "--n", 20, "--seed", 3, "--out", a])
        run(["generate", "--d1", 2, "--d2", 2, "--n", 20, "--seed", 3, "--out", b])
        assert (a / "data.csv").read_bytes() == (b / "data.csv").read_bytes()

    def test_default_shape_matches_reference_experiment(self, tmp_path):
        out = tmp_path / "big"
        assert run(["generate", "--seed", 1, "--out", out]) == 0
        data, _ = read_csv_with_meta(out / "data.csv")
        assert data.shape == (300, 90)  # d1=15, d2=6 defaults

    def test_scatter_approximates_kron(self, tmp_path):
        out = tmp_path / "mc"
        run(["generate", "--d1", 2, "--d2", 2, "--n", 20000, "--seed", 5, "--out", out])
        data, _ = read_csv_with_meta(out / "data.csv")
        t1, _ = read_csv_with_meta(out / "sigma1_true.csv")
        t2, _ = read_csv_with_meta(out / "sigma2_true.csv")
        emp = data.T @ data / data.shape[0]
        assert np.abs(emp - np.kron(t1, t2)).max() < 0.1


class TestFit:
    def test_gibbs_smoke(self, tmp_path, generated):
        out = tmp_path / "fit"
        code = run(["fit", "--input", generated / "data.csv", "--out", out,
                    "--sampler", "gibbs", "--n-adapt", 0, "--n-burn", 20,
                    "--n-samples", 100, "--seed", 2])
        assert code == 0
        data, cols = read_chains_csv(out / "chains.csv")
        assert data.shape == (100, len(cols))
        summary = json.loads((out / "summary.json").read_text())
        assert summary["n_samples"] == 100
        assert summary["acceptance_rate"] == 1.0

    def test_sglmc_deterministic_rerun(self, tmp_path, generated):
        args = ["fit", "--input", generated / "data.csv", "--sampler", "sglmc",
                "--metric", "regularized", "--alpha", 0.95, "--n-adapt", 20,
                "--n-burn", 10, "--n-samples", 30, "--seed", 11]
        run(args + ["--out", tmp_path / "f1"])
        run(args + ["--out", tmp_path / "f2"])
        assert ((tmp_path / "f1" / "chains.csv").read_bytes()
                == (tmp_path / "f2" / "chains.csv").read_bytes())

    def test_config_file_with_overrides(self, tmp_path, generated):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"sampler": "gibbs", "n_samples": 25,
                                   "n_adapt": 0, "n_burn": 5, "seed": 4}))
        out = tmp_path / "fit"
        code = run(["fit", "--config", cfg, "--input", generated / "data.csv",
                    "--out", out, "--n-samples", 40])
        assert code == 0
        data, _ = read_chains_csv(out / "chains.csv")
        assert data.shape[0] == 40  # flag override wins

    def test_bad_config_exit_code(self, tmp_path, generated):
        code = run(["fit", "--input", generated / "data.csv", "--out", tmp_path / "x",
                    "--alpha", 1.5])
        assert code == 2

    def test_missing_input_exit_code(self, tmp_path):
        code = run(["fit", "--input", tmp_path / "nope.csv", "--out", tmp_path / "x"])
        assert code == 3

    def test_headerless_csv_with_explicit_dims(self, tmp_path):
        # external data ingestion: plain delimited text, no metadata comment
        rng = np.random.default_rng(17)
        raw = tmp_path / "raw.csv"
        raw.write_text("\n".join(",".join(f"{v:.8f}" for v in row)
                                 for row in rng.standard_normal((80, 6))) + "\n")
        out = tmp_path / "fit"
        code = run(["fit", "--input", raw, "--d1", 2, "--d2", 3, "--sampler", "gibbs",
                    "--n-adapt", 0, "--n-burn", 10, "--n-samples", 20, "--seed", 1,
                    "--out", out])
        assert code == 0
        data, _ = read_chains_csv(out / "chains.csv")
        assert data.shape[0] == 20

    def test_dump_states_layout(self, tmp_path, generated):
        out = tmp_path / "fit"
        code = run(["fit", "--input", generated / "data.csv", "--sampler", "gibbs",
                    "--n-adapt", 0, "--n-burn", 5, "--n-samples", 8, "--seed", 1,
                    "--out", out, "--dump-states"])
        assert code == 0
        states, meta = read_csv_with_meta(out / "states.csv")
        assert meta["schema"] == "sepcov-states-v1"
        assert states.shape == (8, 3 + 6)  # vech dims for d1=2 and d2=3
        chains, cols = read_chains_csv(out / "chains.csv")
        # trace of sigma1 recoverable from the vech dump
        tr1 = states[:, 0] + states[:, 2]
        assert np.allclose(tr1, chains[:, cols.index("tr1")], rtol=1e-12)


class TestCompareAndDiagnose:
    @pytest.fixture
    def chains(self, tmp_path, generated):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        base = ["fit", "--input", generated / "data.csv", "--sampler", "gibbs",
                "--n-adapt", 0, "--n-burn", 50, "--n-samples", 400]
        run(base + ["--seed", 1, "--out", out_a])
        run(base + ["--seed", 2, "--out", out_b])
        return out_a / "chains.csv", out_b / "chains.csv"

    def test_self_compare_zero(self, tmp_path, chains):
        report_path = tmp_path / "rep.json"
        code = run(["compare", chains[0], chains[0], "--out", report_path])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert all(v == 0.0 for v in report["ks"].values())

    def test_same_distribution_small_ks(self, tmp_path, chains):
        report_path = tmp_path / "rep.json"
        code = run(["compare", chains[0], chains[1], "--stat", "tr_kron",
                    "--ks-threshold", 0.2, "--out", report_path])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["ks"]["tr_kron"] < 0.2
        assert "tr_kron" in report["ess_per_iter_a"]

    def test_full_report_covers_all_summary_columns(self, tmp_path, chains):
        # one efficiency-table row (8 statistics) per chain file
        report_path = tmp_path / "rep.json"
        run(["compare", chains[0], chains[1], "--out", report_path])
        report = json.loads(report_path.read_text())
        expected = {"tr1", "tr2", "tr_kron", "logdet1", "logdet2", "logdet_kron",
                    "cond1", "cond2"}
        assert set(report["ks"]) == expected
        assert set(report["ess_per_iter_a"]) == expected
        assert set(report["ess_per_iter_b"]) == expected

    def test_threshold_failure_exit_code(self, tmp_path, chains):
        code = run(["compare", chains[0], chains[1], "--stat", "tr_kron",
                    "--ks-threshold", 1e-9, "--out", tmp_path / "rep.json"])
        assert code == 4

    def test_unknown_stat_errors(self, tmp_path, chains):
        code = run(["compare", chains[0], chains[1], "--stat", "nonsense"])
        assert code == 3

    def test_diagnose_matches_library_acf(self, tmp_path, chains):
        out = tmp_path / "diag"
        code = run(["diagnose", "--input", chains[0], "--stat", "tr_kron",
                    "--max-lag", 15, "--out", out])
        assert code == 0
        dump, meta = read_csv_with_meta(out / "acf_tr_kron.csv")
        assert meta["columns"] == ["lag", "acf"]
        data, cols = read_chains_csv(chains[0])
        series = data[:, cols.index("tr_kron")]
        assert np.allclose(dump[:, 1], acf(series, 15), atol=1e-15)
