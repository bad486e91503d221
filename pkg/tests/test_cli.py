"""Command-line surface: reports, exit codes, determinism."""

import io
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
import pytest

from conftest import batch_input, lenet_style, random_mlp
from pfp import (Dense, GaussianWeights, ModelGraph, load_model, save_model,
                 save_tensor)
from pfp.cli import main


def run_cli(argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def workspace(tmp_path):
    rng = np.random.default_rng(10)
    model = random_mlp(rng, [5, 8, 3], bias="probabilistic")
    x = batch_input(rng, model, 4)
    save_model(model, tmp_path / "model.pfpm")
    save_tensor(x, tmp_path / "input.pfpt")
    save_tensor(np.array([0.0, 1.0, 2.0, 1.0]), tmp_path / "labels.pfpt")
    return tmp_path


class TestInfer:
    def test_zero_variance_model_reports_zero_variances(self, tmp_path):
        rng = np.random.default_rng(1)
        model = random_mlp(rng, [4, 3], var_scale=0.0, relu=False)
        save_model(model, tmp_path / "m.pfpm")
        save_tensor(batch_input(rng, model, 2), tmp_path / "x.pfpt")
        code, out, _ = run_cli(["infer", "--model", str(tmp_path / "m.pfpm"),
                                "--input", str(tmp_path / "x.pfpt")])
        assert code == 0
        rows = out.strip().splitlines()
        assert rows[0].startswith("item,mean_0")
        for row in rows[1:]:
            cells = row.split(",")
            assert all(float(v) == 0.0 for v in cells[4:])

    def test_calibration_override_scales_single_layer_variances(self, tmp_path):
        rng = np.random.default_rng(2)
        model = random_mlp(rng, [4, 2], relu=False)
        save_model(model, tmp_path / "m.pfpm")
        save_tensor(batch_input(rng, model, 2), tmp_path / "x.pfpt")
        argv = ["infer", "--model", str(tmp_path / "m.pfpm"),
                "--input", str(tmp_path / "x.pfpt")]
        _, base, _ = run_cli(argv)
        _, scaled, _ = run_cli(argv + ["--calibration", "0.3"])
        for b_row, s_row in zip(base.splitlines()[1:], scaled.splitlines()[1:]):
            b = np.array([float(v) for v in b_row.split(",")[3:]])
            s = np.array([float(v) for v in s_row.split(",")[3:]])
            np.testing.assert_allclose(s, 0.3 * b, rtol=1e-9)

    def test_missing_model_exits_2_with_no_output(self, tmp_path):
        code, out, err = run_cli(["infer", "--model", str(tmp_path / "nope.pfpm"),
                                  "--input", str(tmp_path / "x.pfpt")])
        assert code == 2 and out == "" and "error" in err


class TestValidate:
    def test_linear_model_passes(self, tmp_path):
        rng = np.random.default_rng(3)
        model = random_mlp(rng, [4, 6, 3], relu=False)
        save_model(model, tmp_path / "m.pfpm")
        save_tensor(batch_input(rng, model, 2), tmp_path / "x.pfpt")
        code, out, _ = run_cli(["validate", "--model", str(tmp_path / "m.pfpm"),
                                "--input", str(tmp_path / "x.pfpt"),
                                "--samples", "20000", "--seed", "4"])
        assert code == 0
        assert "result=pass" in out
        assert "linear_chain=true" in out

    def test_relu_model_reports_relaxed_bound(self, workspace):
        code, out, _ = run_cli(["validate", "--model", str(workspace / "model.pfpm"),
                                "--input", str(workspace / "input.pfpt"),
                                "--samples", "20000", "--seed", "4"])
        assert code == 0
        assert "linear_chain=false" in out
        assert "z_bound_mean=5.0" in out

    def test_too_few_samples_rejected(self, workspace):
        code, _, err = run_cli(["validate", "--model", str(workspace / "model.pfpm"),
                                "--input", str(workspace / "input.pfpt"),
                                "--samples", "1"])
        assert code == 2 and "error" in err

    def test_threshold_breach_exits_3(self, tmp_path):
        # pooled model: the window elements share weight draws, so the
        # independence-based pool mean carries a bias that a large enough
        # sample budget resolves -> validation must flag it
        rng = np.random.default_rng(123)
        model = lenet_style(rng, var_scale=0.01)
        save_model(model, tmp_path / "m.pfpm")
        save_tensor(batch_input(rng, model, 2), tmp_path / "x.pfpt")
        code, out, _ = run_cli(["validate", "--model", str(tmp_path / "m.pfpm"),
                                "--input", str(tmp_path / "x.pfpt"),
                                "--samples", "20000", "--seed", "7"])
        assert code == 3
        assert "result=fail" in out


class TestMetrics:
    def test_report_with_ood_split(self, tmp_path):
        w = GaussianWeights.from_moments([[2.0, 0.0], [-2.0, 0.0]],
                                         [[0.0, 1.0], [0.0, 1.0]])
        model = ModelGraph("sep", (2,), (Dense(w),))
        save_model(model, tmp_path / "m.pfpm")
        signs = np.array([1.0, -1.0] * 8)
        save_tensor(np.stack([signs, np.full(16, 1e-3)], axis=1), tmp_path / "x.pfpt")
        save_tensor((signs < 0).astype(float), tmp_path / "y.pfpt")
        save_tensor(np.stack([signs, np.full(16, 5.0)], axis=1), tmp_path / "ood.pfpt")
        argv = ["metrics", "--model", str(tmp_path / "m.pfpm"),
                "--input", str(tmp_path / "x.pfpt"), "--labels", str(tmp_path / "y.pfpt"),
                "--ood", str(tmp_path / "ood.pfpt"), "--logit-samples", "200",
                "--out", str(tmp_path / "rep.csv")]
        code, out, _ = run_cli(argv)
        assert code == 0
        assert "auroc=1.0" in out and "accuracy=1.0" in out
        csv = (tmp_path / "rep.csv").read_text().splitlines()
        assert csv[0].startswith("split,") and len(csv) == 3

    def test_no_ood_flag_omits_auroc(self, workspace):
        code, out, _ = run_cli(["metrics", "--model", str(workspace / "model.pfpm"),
                                "--input", str(workspace / "input.pfpt"),
                                "--labels", str(workspace / "labels.pfpt"),
                                "--logit-samples", "32"])
        assert code == 0 and "auroc" not in out

    def test_same_seed_byte_identical(self, workspace, tmp_path):
        argv = ["metrics", "--model", str(workspace / "model.pfpm"),
                "--input", str(workspace / "input.pfpt"),
                "--labels", str(workspace / "labels.pfpt"),
                "--mode", "mc", "--samples", "64", "--seed", "7"]
        a = run_cli(argv)
        b = run_cli(argv)
        assert a == b

    def test_bad_labels_rejected(self, workspace):
        code, _, err = run_cli(["metrics", "--model", str(workspace / "model.pfpm"),
                                "--input", str(workspace / "input.pfpt"),
                                "--labels", str(workspace / "input.pfpt")])
        assert code == 2 and "labels" in err


class TestBench:
    def test_reports_both_configs_and_speedup(self, tmp_path):
        rng = np.random.default_rng(5)
        model = lenet_style(rng, in_hw=6)
        save_model(model, tmp_path / "m.pfpm")
        save_tensor(batch_input(rng, model, 1), tmp_path / "x.pfpt")
        code, out, _ = run_cli(["bench", "--model", str(tmp_path / "m.pfpm"),
                                "--input", str(tmp_path / "x.pfpt"),
                                "--samples", "8"])
        assert code == 0
        rows = out.strip().splitlines()
        assert rows[1].startswith("pfp,1,") and rows[2].startswith("mc@8,1,")
        speedup = float(rows[2].split(",")[-1])
        assert speedup > 0

    def test_wide_dense_model_beats_thirty_sample_oracle(self, tmp_path):
        rng = np.random.default_rng(8)
        model = random_mlp(rng, [64, 64, 10], bias="probabilistic")
        save_model(model, tmp_path / "m.pfpm")
        save_tensor(batch_input(rng, model, 4), tmp_path / "x.pfpt")
        code, out, _ = run_cli(["bench", "--model", str(tmp_path / "m.pfpm"),
                                "--input", str(tmp_path / "x.pfpt"),
                                "--samples", "30"])
        assert code == 0
        pfp_row, mc_row = out.strip().splitlines()[1:3]
        t_pfp = float(pfp_row.split(",")[4])
        t_mc = float(mc_row.split(",")[4])
        assert 0.0 < t_pfp < t_mc

    def test_single_sample_pass_close_to_deterministic(self, tmp_path):
        # mc@1 is one weight draw plus one plain pass; on a model large
        # enough to swamp fixed overheads, it stays within 2x of a
        # deterministic pass.
        import time
        from pfp.mc import deterministic_forward, sample_deterministic_model
        from pfp import mc_predict
        rng = np.random.default_rng(6)
        model = random_mlp(rng, [256, 256, 10], var_scale=0.0, relu=False)
        x = batch_input(rng, model, 16)
        point = sample_deterministic_model(model, 0, 0)
        mc_predict(model, x, 1, seed=0)
        deterministic_forward(point, x.values)

        def best_of(fn, reps=40):
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                fn()
                times.append(time.perf_counter() - t0)
            return float(min(times))  # min: least scheduler noise

        t_det = best_of(lambda: deterministic_forward(point, x.values))
        t_mc1 = best_of(lambda: mc_predict(model, x, 1, seed=0))
        assert t_mc1 <= 2.0 * t_det + 5e-3


class TestCalibrate:
    def test_writes_loadable_scaled_model(self, workspace, tmp_path):
        out_path = tmp_path / "cal.pfpm"
        code, _, _ = run_cli(["calibrate", "--model", str(workspace / "model.pfpm"),
                              "--calibration", "0.4", "--out", str(out_path)])
        assert code == 0
        m0 = load_model(workspace / "model.pfpm")
        m1 = load_model(out_path)
        v0 = m0.layers[0].weights.variances()
        v1 = m1.layers[0].weights.variances()
        np.testing.assert_allclose(v1, 0.4 * v0, rtol=1e-6)

    def test_nonpositive_factor_exits_2(self, workspace, tmp_path):
        code, _, err = run_cli(["calibrate", "--model", str(workspace / "model.pfpm"),
                                "--calibration", "0", "--out", str(tmp_path / "c.pfpm")])
        assert code == 2 and "positive" in err


class TestThreads:
    def test_thread_count_does_not_change_numbers(self, workspace):
        argv = ["validate", "--model", str(workspace / "model.pfpm"),
                "--input", str(workspace / "input.pfpt"),
                "--samples", "2000", "--seed", "3"]
        one = run_cli(argv + ["--threads", "1"])
        four = run_cli(argv + ["--threads", "4"])
        assert one == four
