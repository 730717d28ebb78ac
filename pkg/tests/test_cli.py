"""End-to-end command-line runs, exit codes and the manifest contract."""

import json
import warnings

import numpy as np
import pytest

from glskf import cli
from glskf import io as gio
from glskf.model import ObservationMask


def run_cli(*argv):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return cli.main(list(argv))


KERNEL_ARGS = (
    "--fk", "matern32(l=3)", "--fk", "matern32(l=3)", "--fk", "identity",
    "--lk", "matern32(l=1.5)*bohman(3)", "--lk", "matern32(l=1.5)*bohman(3)",
    "--lk", "identity",
)


@pytest.fixture
def dataset(tmp_path):
    data_dir = tmp_path / "data"
    code = run_cli("synth", "--shape", "8x7x3", "--rank", "2", "--noise-sd", "0.05",
                   "--seed", "3", *KERNEL_ARGS, "--out-dir", str(data_dir))
    assert code == 0
    mask_path = tmp_path / "mask.dmsk"
    code = run_cli("mask", "--shape", "8x7x3", "--sample-rate", "0.6",
                   "--seed", "5", "--out", str(mask_path))
    assert code == 0
    return data_dir / "values.dten", mask_path


class TestSynthAndMask:
    def test_synth_outputs(self, dataset, tmp_path):
        values_path, _ = dataset
        values = gio.read_tensor(str(values_path))
        smooth = gio.read_tensor(str(values_path.parent / "smooth.dten"))
        local = gio.read_tensor(str(values_path.parent / "local.dten"))
        assert values.shape == (8, 7, 3)
        assert np.allclose(values - smooth - local, values - smooth - local)
        man = json.loads((values_path.parent / "manifest.json").read_text())
        assert man["command"] == "synth"
        assert man["settings"]["shape"] == [8, 7, 3]
        assert man["settings"]["factor_kernels"][0] == "matern32(l=3,s2=1)"

    def test_mask_observes_requested_fraction(self, dataset):
        _, mask_path = dataset
        mask = gio.read_mask(str(mask_path))
        assert mask.n_observed == round(0.6 * 8 * 7 * 3)

    def test_mask_rejects_bad_rate(self, tmp_path):
        code = run_cli("mask", "--shape", "4x4", "--sample-rate", "1.5",
                       "--out", str(tmp_path / "m.dmsk"))
        assert code == 64

    def test_bad_shape_string(self, tmp_path):
        code = run_cli("synth", "--shape", "8xax3", "--out-dir", str(tmp_path / "o"))
        assert code == 64


class TestComplete:
    def _complete(self, dataset, out_dir, *extra):
        values_path, mask_path = dataset
        return run_cli("complete", "--input", str(values_path), "--mask", str(mask_path),
                       "--out-dir", str(out_dir), "--rank", "2", *KERNEL_ARGS,
                       "--warmup", "2", *extra)

    def test_outputs_and_manifest(self, dataset, tmp_path):
        out = tmp_path / "run"
        code = self._complete(dataset, out, "--max-outer", "4", "--seed", "0")
        assert code in (0, 2)
        completed = gio.read_tensor(str(out / "completed.dten"))
        smooth = gio.read_tensor(str(out / "smooth.dten"))
        local = gio.read_tensor(str(out / "local.dten"))
        assert completed.shape == smooth.shape == local.shape == (8, 7, 3)

        values = gio.read_tensor(str(dataset[0]))
        mask = gio.read_mask(str(dataset[1]))
        ind = mask.indicator
        assert completed[ind].tobytes() == values[ind].tobytes()
        assert np.allclose(completed[~ind], (smooth + local)[~ind], atol=1e-12)

        man = json.loads((out / "manifest.json").read_text())
        assert man["config"]["rank"] == 2
        assert man["config"]["factor_kernels"] == ["matern32(l=3,s2=1)"] * 2 + ["identity"]
        assert man["data"]["n_observed"] == mask.n_observed
        assert set(man["result"]) >= {"converged", "iterations", "objective_last"}

    def test_converged_run_exits_zero(self, dataset, tmp_path):
        code = self._complete(dataset, tmp_path / "run", "--max-outer", "30",
                              "--stop-tol", "0.1")
        assert code == 0

    def test_iteration_cap_exits_two(self, dataset, tmp_path):
        code = self._complete(dataset, tmp_path / "run", "--max-outer", "1",
                              "--stop-tol", "1e-15")
        assert code == 2

    def test_manifest_rerun_is_bitwise_identical(self, dataset, tmp_path):
        out_a = tmp_path / "a"
        assert self._complete(dataset, out_a, "--max-outer", "3", "--seed", "1") in (0, 2)
        out_b = tmp_path / "b"
        code = run_cli("complete", "--from-manifest", str(out_a / "manifest.json"),
                       "--out-dir", str(out_b))
        assert code in (0, 2)
        a = (out_a / "completed.dten").read_bytes()
        b = (out_b / "completed.dten").read_bytes()
        assert a == b

    def test_flags_override_manifest(self, dataset, tmp_path):
        out_a = tmp_path / "a"
        assert self._complete(dataset, out_a, "--max-outer", "2") in (0, 2)
        out_b = tmp_path / "b"
        code = run_cli("complete", "--from-manifest", str(out_a / "manifest.json"),
                       "--out-dir", str(out_b), "--rank", "3")
        assert code in (0, 2)
        man = json.loads((out_b / "manifest.json").read_text())
        assert man["config"]["rank"] == 3

    def test_csv_input(self, tmp_path):
        csv_path = tmp_path / "obs.csv"
        lines = ["i,j,value"]
        rng = np.random.default_rng(0)
        for i in range(1, 7):
            for j in range(1, 6):
                if rng.random() < 0.7:
                    lines.append(f"{i},{j},{rng.random():.6f}")
        csv_path.write_text("\n".join(lines) + "\n")
        out = tmp_path / "run"
        code = run_cli("complete", "--input", str(csv_path), "--shape", "6x5",
                       "--out-dir", str(out), "--rank", "2", "--mode", "lstf",
                       "--max-outer", "5", "--stop-tol", "0.5")
        assert code in (0, 2)
        assert (out / "completed.dten").exists()
        man = json.loads((out / "manifest.json").read_text())
        assert man["inputs"]["shape"] == "6x5"

    def test_usage_errors(self, dataset, tmp_path):
        values_path, mask_path = dataset
        out = str(tmp_path / "o")
        # no input at all
        assert run_cli("complete", "--out-dir", out) == 64
        # tensor input without a mask
        assert run_cli("complete", "--input", str(values_path), "--out-dir", out) == 64
        # csv without shape
        csv_path = tmp_path / "d.csv"
        csv_path.write_text("1,1,1.0\n")
        assert run_cli("complete", "--input", str(csv_path), "--out-dir", out) == 64
        # csv with a mask
        assert run_cli("complete", "--input", str(csv_path), "--shape", "2x2",
                       "--mask", str(mask_path), "--out-dir", out) == 64
        # unknown preset
        assert run_cli("complete", "--input", str(values_path), "--mask", str(mask_path),
                       "--preset", "nope", "--out-dir", out) == 64
        # preset and manifest are exclusive
        assert run_cli("complete", "--from-manifest", "x.json", "--preset", "image",
                       "--input", str(values_path), "--mask", str(mask_path),
                       "--out-dir", out) == 64
        # malformed kernel
        assert run_cli("complete", "--input", str(values_path), "--mask", str(mask_path),
                       "--out-dir", out, "--fk", "matern32(l=-2)") == 64
        # invalid solver setting caught by config validation
        assert run_cli("complete", "--input", str(values_path), "--mask", str(mask_path),
                       "--out-dir", out, "--rank", "0") == 64
        # unknown subcommand and unknown flag
        assert run_cli("nonsense") == 64
        assert run_cli("complete", "--bogus") == 64

    def test_preset_dimension_check(self, tmp_path):
        t2 = tmp_path / "t2.dten"
        m2 = tmp_path / "m2.dmsk"
        gio.write_tensor(str(t2), np.zeros((12, 12)))
        gio.write_mask(str(m2), ObservationMask(np.ones((12, 12), dtype=bool)))
        code = run_cli("complete", "--input", str(t2), "--mask", str(m2),
                       "--preset", "image", "--out-dir", str(tmp_path / "o"))
        assert code == 64

    def test_data_errors(self, dataset, tmp_path):
        values_path, mask_path = dataset
        out = str(tmp_path / "o")
        assert run_cli("complete", "--input", str(tmp_path / "none.dten"),
                       "--mask", str(mask_path), "--out-dir", out) == 65
        # mask shape disagrees with the tensor
        small = tmp_path / "small.dmsk"
        gio.write_mask(str(small), ObservationMask(np.ones((2, 2), dtype=bool)))
        assert run_cli("complete", "--input", str(values_path),
                       "--mask", str(small), "--out-dir", out) == 65
        # corrupt tensor file
        bad = tmp_path / "bad.dten"
        bad.write_bytes(b"JUNKJUNKJUNK")
        assert run_cli("complete", "--input", str(bad),
                       "--mask", str(mask_path), "--out-dir", out) == 65
        # manifest that is not json
        nj = tmp_path / "m.json"
        nj.write_text("{broken")
        assert run_cli("complete", "--from-manifest", str(nj),
                       "--input", str(values_path), "--mask", str(mask_path),
                       "--out-dir", out) == 65


class TestEval:
    def test_eval_scores_holdout(self, tmp_path, capsys):
        rng = np.random.default_rng(2)
        truth = rng.random((12, 12, 2))
        estimate = np.clip(truth + 0.05 * rng.standard_normal(truth.shape), 0, 1)
        mask = gio.make_random_mask((12, 12, 2), 0.5, seed=1)
        tp, ep, mp = (tmp_path / n for n in ("t.dten", "e.dten", "m.dmsk"))
        gio.write_tensor(str(tp), truth)
        gio.write_tensor(str(ep), estimate)
        gio.write_mask(str(mp), mask)

        json_path = tmp_path / "report.json"
        code = run_cli("eval", "--truth", str(tp), "--estimate", str(ep),
                       "--mask", str(mp), "--json", str(json_path))
        assert code == 0
        out = capsys.readouterr().out
        assert f"n_eval={mask.n_missing}" in out
        rep = json.loads(json_path.read_text())
        assert rep["n_eval"] == mask.n_missing
        assert rep["rmse"] > 0
        assert rep["ssim"] is not None

    def test_eval_rejects_fully_observed_mask(self, tmp_path):
        t = np.zeros((4, 4))
        tp, mp = tmp_path / "t.dten", tmp_path / "m.dmsk"
        gio.write_tensor(str(tp), t)
        gio.write_mask(str(mp), ObservationMask(np.ones((4, 4), dtype=bool)))
        code = run_cli("eval", "--truth", str(tp), "--estimate", str(tp),
                       "--mask", str(mp))
        assert code == 64

    def test_eval_slice_axis_out_of_range(self, tmp_path):
        rng = np.random.default_rng(3)
        t = rng.random((4, 4))
        tp, mp = tmp_path / "t.dten", tmp_path / "m.dmsk"
        gio.write_tensor(str(tp), t)
        gio.write_mask(str(mp), gio.make_random_mask((4, 4), 0.5, seed=0))
        code = run_cli("eval", "--truth", str(tp), "--estimate", str(tp),
                       "--mask", str(mp), "--slice-axis", "7")
        assert code == 64


class TestBench:
    def test_scaling_table(self, tmp_path, capsys):
        json_path = tmp_path / "bench.json"
        code = run_cli("bench", "--sizes", "2000,4000", "--cg-iters", "2",
                       "--repeats", "1", "--json", str(json_path))
        assert code == 0
        out = capsys.readouterr().out
        assert "active backend:" in out
        assert "2000" in out and "4000" in out
        payload = json.loads(json_path.read_text())
        assert len(payload["scaling"]) == 2
        assert "local_ratio" in payload["scaling"][1]

    def test_backend_comparison(self, capsys):
        code = run_cli("bench", "--skip-scaling", "--compare-backends", "--repeats", "1")
        assert code == 0
        out = capsys.readouterr().out
        assert "banded kernel [pure]" in out

    def test_bad_sizes_rejected(self):
        assert run_cli("bench", "--sizes", "1234") == 64
