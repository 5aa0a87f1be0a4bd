"""End-to-end tests of the command-line interface and its exit codes."""

import json

import numpy as np
import pytest

from branchdepth import fileio
from branchdepth.cli import main
from branchdepth.geometry import StereoRig
from branchdepth.refine import DisparityMap


def run(capsys, *argv) -> tuple[int, str]:
    code = main(list(argv))
    return code, capsys.readouterr().out


class TestSynth:
    def test_branch_preset_writes_five_files(self, tmp_path, capsys):
        out = tmp_path / "scene"
        code, stdout = run(
            capsys, "synth", "--distance", "1.5", "--out-dir", str(out),
            "--width", "96", "--height", "72",
        )
        assert code == 0
        files = sorted(p.name for p in out.iterdir())
        assert files == ["gt.pfm", "left.pgm", "occlusion.pgm", "points.json", "right.pgm"]
        echo = json.loads(stdout)
        assert echo["scene"]["width"] == 96
        assert len(echo["files"]) == 5

    def test_same_seed_byte_identical_pfm(self, tmp_path, capsys):
        args = ["synth", "--distance", "1.0", "--width", "64", "--height", "48", "--seed", "7"]
        assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
        assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
        capsys.readouterr()
        assert (tmp_path / "a/gt.pfm").read_bytes() == (tmp_path / "b/gt.pfm").read_bytes()
        assert (tmp_path / "a/left.pgm").read_bytes() == (tmp_path / "b/left.pgm").read_bytes()

    def test_invalid_distance_exits_2(self, tmp_path, capsys):
        code, stdout = run(
            capsys, "synth", "--distance", "-1", "--out-dir", str(tmp_path / "x")
        )
        assert code == 2
        assert "error" in json.loads(stdout)

    def test_scene_json_input(self, tmp_path, capsys):
        scene = {
            "width": 48,
            "height": 32,
            "seed": 1,
            "rig": {"fx": 400, "fy": 400, "ox": 23.5, "oy": 15.5, "baseline_m": 0.1},
            "primitives": [{"type": "plane", "depth_m": 2.0, "texture": {"seed": 5}}],
        }
        scene_path = tmp_path / "scene.json"
        scene_path.write_text(json.dumps(scene))
        code, _ = run(capsys, "synth", "--scene", str(scene_path), "--out-dir", str(tmp_path / "o"))
        assert code == 0
        gt = fileio.read_pfm(tmp_path / "o/gt.pfm")
        np.testing.assert_allclose(gt, 20.0, rtol=1e-6)


@pytest.fixture
def branch_dir(tmp_path, capsys):
    out = tmp_path / "branch"
    assert main([
        "synth", "--distance", "1.5", "--out-dir", str(out),
        "--width", "128", "--height", "96", "--seed", "3",
    ]) == 0
    capsys.readouterr()
    rig = StereoRig(fx=600.0, fy=600.0, ox=63.5, oy=47.5, baseline_m=0.1)
    fileio.write_rig(out / "rig.json", rig)
    return out


class TestDisparityCommand:
    def test_full_pipeline_on_branch_pair(self, branch_dir, capsys):
        out_pfm = branch_dir / "disp.pfm"
        code, stdout = run(
            capsys, "disparity", str(branch_dir / "left.pgm"), str(branch_dir / "right.pgm"),
            "--out", str(out_pfm), "--preview", str(branch_dir / "prev.pgm"),
            "--d-min", "16", "--d-max", "48", "--window-radius", "2",
            "--aggregation", "semiglobal", "--p1", "8", "--p2", "32",
        )
        assert code == 0
        disp = fileio.read_disparity_pfm(out_pfm)
        gt = fileio.read_disparity_pfm(branch_dir / "gt.pfm")
        occl = fileio.read_pgm(branch_dir / "occlusion.pgm") >= 128
        good = disp.valid & gt.valid & ~occl
        err = np.abs(disp.values - gt.values)[good]
        assert np.mean(err <= 1.0) > 0.95
        echo = json.loads(stdout)
        assert echo["config"]["d_max"] == 48
        preview = fileio.read_pgm(branch_dir / "prev.pgm")
        assert preview.shape == disp.values.shape

    def test_toggle_changes_output_not_shape(self, branch_dir, capsys):
        base_args = [
            "disparity", str(branch_dir / "left.pgm"), str(branch_dir / "right.pgm"),
            "--d-min", "16", "--d-max", "48", "--window-radius", "2",
            "--aggregation", "fixed", "--fixed-radius", "2",
        ]
        assert main(base_args + ["--out", str(branch_dir / "with_wls.pfm")]) == 0
        assert main(base_args + ["--no-wls", "--out", str(branch_dir / "no_wls.pfm")]) == 0
        capsys.readouterr()
        a = fileio.read_pfm(branch_dir / "with_wls.pfm")
        b = fileio.read_pfm(branch_dir / "no_wls.pfm")
        assert a.shape == b.shape
        assert not np.array_equal(a, b)

    def test_config_file_with_overrides(self, branch_dir, capsys):
        config_path = branch_dir / "config.json"
        from branchdepth.pipeline import PipelineConfig

        config = PipelineConfig(d_min=16, d_max=48, window_radius=2, aggregation="fixed")
        config_path.write_text(json.dumps(config.to_dict()))
        code, stdout = run(
            capsys, "disparity", str(branch_dir / "left.pgm"), str(branch_dir / "right.pgm"),
            "--out", str(branch_dir / "d.pfm"), "--config", str(config_path),
            "--fixed-radius", "1",
        )
        assert code == 0
        echo = json.loads(stdout)
        assert echo["config"]["aggregation"] == "fixed"
        assert echo["config"]["fixed_radius"] == 1  # flag overrode the file

    def test_missing_input_exits_1(self, tmp_path, capsys):
        code, stdout = run(
            capsys, "disparity", str(tmp_path / "nope.pgm"), str(tmp_path / "nope2.pgm"),
            "--out", str(tmp_path / "d.pfm"),
        )
        assert code == 1
        assert "error" in json.loads(stdout)


class TestLocalizeCommand:
    def write_constant_disparity(self, tmp_path, value, shape=(48, 64)):
        disp = DisparityMap.from_values(np.full(shape, float(value)))
        path = tmp_path / "disp.pfm"
        fileio.write_disparity_pfm(path, disp)
        return path

    def write_rig(self, tmp_path):
        path = tmp_path / "rig.json"
        fileio.write_rig(path, StereoRig(fx=500.0, fy=500.0, ox=32.0, oy=24.0, baseline_m=0.1))
        return path

    def write_points(self, tmp_path):
        path = tmp_path / "points.json"
        fileio.write_points(
            path, np.array([[10.0, 10.0], [30.0, 10.0], [30.0, 30.0], [10.0, 30.0]])
        )
        return path

    def test_constant_half_w_gives_two_metres(self, tmp_path, capsys):
        disp = self.write_constant_disparity(tmp_path, 25.0)  # w = 50
        code, stdout = run(
            capsys, "localize", str(disp), str(self.write_points(tmp_path)),
            str(self.write_rig(tmp_path)),
        )
        assert code == 0
        result = json.loads(stdout)
        assert result["distance_m"] == pytest.approx(2.0)
        assert result["method"] == "centroid"
        assert result["params"]["k"] == 3.0

    def test_result_file_output(self, tmp_path, capsys):
        disp = self.write_constant_disparity(tmp_path, 25.0)
        out = tmp_path / "result.json"
        code, _ = run(
            capsys, "localize", str(disp), str(self.write_points(tmp_path)),
            str(self.write_rig(tmp_path)), "--method", "polygon", "--out", str(out),
        )
        assert code == 0
        result = json.loads(out.read_text())
        assert result["distance_m"] == pytest.approx(2.0)
        assert result["retained"] > 100

    def test_k_zero_keeps_median_values_only(self, tmp_path, capsys):
        values = np.full((48, 64), 10.0)
        values[20, 20] = 40.0  # one outlier inside the polygon
        path = tmp_path / "disp.pfm"
        fileio.write_disparity_pfm(path, DisparityMap.from_values(values))
        code, stdout = run(
            capsys, "localize", str(path), str(self.write_points(tmp_path)),
            str(self.write_rig(tmp_path)), "--method", "polygon", "--k", "0",
        )
        assert code == 0
        result = json.loads(stdout)
        assert result["rejected"] == 1
        assert result["distance_m"] == pytest.approx(50.0 / 10.0)

    def test_no_valid_depth_exits_3(self, tmp_path, capsys):
        disp = DisparityMap.from_values(np.full((48, 64), np.nan))
        path = tmp_path / "disp.pfm"
        fileio.write_disparity_pfm(path, disp)
        code, stdout = run(
            capsys, "localize", str(path), str(self.write_points(tmp_path)),
            str(self.write_rig(tmp_path)),
        )
        assert code == 3
        assert json.loads(stdout)["error"]["type"] == "NoValidDepthError"


class TestEvalCommand:
    def test_identical_maps(self, tmp_path, capsys):
        values = np.random.default_rng(0).uniform(5, 20, (32, 32))
        path = tmp_path / "map.pfm"
        fileio.write_pfm(path, values)
        code, stdout = run(capsys, "eval", str(path), str(path))
        assert code == 0
        report = json.loads(stdout)
        assert report["rmse"] == 0.0
        assert report["bad_pixel_rate"] == 0.0

    def test_single_off_pixel_bad_rate(self, tmp_path, capsys):
        gt = np.full((10, 10), 8.0)
        pred = gt.copy()
        pred[4, 5] += 2.0
        fileio.write_pfm(tmp_path / "gt.pfm", gt)
        fileio.write_pfm(tmp_path / "pred.pfm", pred)
        code, stdout = run(
            capsys, "eval", str(tmp_path / "pred.pfm"), str(tmp_path / "gt.pfm"), "--tau", "1.0"
        )
        assert code == 0
        report = json.loads(stdout)
        assert report["bad_pixel_rate"] == pytest.approx(0.01)
        assert report["compared"] == 100

    def test_histogram_csv_rows_match_bins(self, tmp_path, capsys):
        values = np.random.default_rng(1).uniform(10, 30, (16, 16))
        fileio.write_pfm(tmp_path / "pred.pfm", values)
        fileio.write_pfm(tmp_path / "gt.pfm", values)
        csv_path = tmp_path / "hist.csv"
        code, stdout = run(
            capsys, "eval", str(tmp_path / "pred.pfm"), str(tmp_path / "gt.pfm"),
            "--histogram-csv", str(csv_path), "--bins", "7",
        )
        assert code == 0
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "bin_lo,bin_hi,count"
        assert len(lines) == 8  # header + 7 bins
        assert json.loads(stdout)["histogram_bins"] == 7

    def test_shape_mismatch_exits_1(self, tmp_path, capsys):
        fileio.write_pfm(tmp_path / "a.pfm", np.zeros((4, 4)))
        fileio.write_pfm(tmp_path / "b.pfm", np.zeros((4, 5)))
        code, _ = run(capsys, "eval", str(tmp_path / "a.pfm"), str(tmp_path / "b.pfm"))
        assert code == 1


class TestEvalMaskCommand:
    def write_mask(self, path, mask):
        fileio.write_pgm(path, np.where(mask, 255.0, 0.0))

    def test_identical_masks_iou_one(self, tmp_path, capsys):
        mask = np.zeros((16, 16), dtype=bool)
        mask[4:10, 4:10] = True
        self.write_mask(tmp_path / "a.pgm", mask)
        self.write_mask(tmp_path / "b.pgm", mask)
        code, stdout = run(capsys, "eval-mask", str(tmp_path / "a.pgm"), str(tmp_path / "b.pgm"))
        assert code == 0
        assert json.loads(stdout)["iou"] == 1.0

    def test_map_manifests(self, tmp_path, capsys):
        masks = []
        for i, span in enumerate(((2, 6), (10, 14))):
            mask = np.zeros((16, 16), dtype=bool)
            mask[span[0] : span[1], span[0] : span[1]] = True
            self.write_mask(tmp_path / f"m{i}.pgm", mask)
            masks.append(f"m{i}.pgm")
        (tmp_path / "pred.json").write_text(json.dumps({
            "instances": [{"mask": masks[0], "score": 0.9}, {"mask": masks[1], "score": 0.8}]
        }))
        (tmp_path / "gt.json").write_text(json.dumps({
            "instances": [{"mask": masks[0]}, {"mask": masks[1]}]
        }))
        code, stdout = run(
            capsys, "eval-mask", "--pred-manifest", str(tmp_path / "pred.json"),
            "--gt-manifest", str(tmp_path / "gt.json"),
        )
        assert code == 0
        assert json.loads(stdout)["map_50_95"] == 1.0

    def test_missing_arguments_exit_2(self, tmp_path, capsys):
        code, _ = run(capsys, "eval-mask", "--pred-manifest", str(tmp_path / "p.json"))
        assert code == 2
