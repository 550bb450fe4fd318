import numpy as np
import pytest

from swinir.checkpoint import save_checkpoint
from swinir.cli import main, parse_config_file
from swinir.degrade import procedural_texture
from swinir.imageio import ImageBuffer, load_image, save_image
from swinir.model import init_params, param_count, tiny_config


def write_images(directory, n=3, size=24, seed=0, channels=1):
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n):
        img = procedural_texture(seed + i, size, size, channels=channels)
        p = directory / f"img{i}.{'pgm' if channels == 1 else 'ppm'}"
        save_image(img, str(p))
        paths.append(p)
    return paths


def write_config(path, **overrides):
    base = dict(task="denoise", scale=1, in_channels=1, out_channels=1,
                channels=8, rstb_count=1, stl_per_rstb=1, window=4, heads=2,
                iterations=4, batch_size=2, patch_size=8, val_period=2,
                lr=1e-3, seed=7)
    base.update(overrides)
    path.write_text("# test config\n" +
                    "\n".join(f"{k} = {v}" for k, v in base.items()) + "\n")
    return path


class TestParsing:
    def test_help_exits_zero(self, capsys):
        for argv in (["--help"], ["degrade", "--help"], ["train", "--help"],
                     ["infer", "--help"], ["eval", "--help"],
                     ["gradcheck", "--help"], ["inspect", "--help"]):
            with pytest.raises(SystemExit) as exc:
                main(argv)
            assert exc.value.code == 0
        capsys.readouterr()

    def test_unknown_flag_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["degrade", "--task", "denoise", "--sigma", "5",
                  "--in", "x", "--out", "y", "--frobnicate"])
        assert exc.value.code == 2
        capsys.readouterr()

    def test_config_file_errors_name_key_and_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("channels = 8\nwibble = 3\n")
        rc = main(["train", "--config", str(cfg), "--data", "d", "--out", "o"])
        assert rc == 2
        err = capsys.readouterr().err
        assert "wibble" in err and ":2" in err

    def test_config_file_bad_value(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("channels = eight\n")
        rc = main(["train", "--config", str(cfg), "--data", "d", "--out", "o"])
        assert rc == 2
        assert "channels" in capsys.readouterr().err

    def test_config_roundtrip(self, tmp_path):
        cfg = write_config(tmp_path / "c.cfg", mlp_ratio=1.4, head_style="direct")
        values = parse_config_file(str(cfg))
        assert values["channels"] == 8
        assert values["mlp_ratio"] == 1.4
        assert values["head_style"] == "direct"


class TestDegrade:
    def test_deterministic_bytes(self, tmp_path, capsys):
        [src] = write_images(tmp_path / "in", n=1, seed=4)
        outs = []
        for name in ("a.pgm", "b.pgm"):
            rc = main(["degrade", "--task", "denoise", "--sigma", "25",
                       "--seed", "7", "--in", str(src),
                       "--out", str(tmp_path / name)])
            assert rc == 0
            outs.append((tmp_path / name).read_bytes())
        assert outs[0] == outs[1]
        assert "gaussian_noise" in capsys.readouterr().out

    def test_negative_sigma_usage_error(self, tmp_path, capsys):
        [src] = write_images(tmp_path / "in", n=1)
        rc = main(["degrade", "--task", "denoise", "--sigma", "-1",
                   "--seed", "1", "--in", str(src), "--out", str(tmp_path / "o.pgm")])
        assert rc == 2
        capsys.readouterr()

    def test_sr_scale_halves_size(self, tmp_path, capsys):
        img = ImageBuffer(np.zeros((64, 64, 1), dtype=np.float32))
        src = tmp_path / "big.pgm"
        save_image(img, str(src))
        rc = main(["degrade", "--task", "sr", "--scale", "2", "--seed", "1",
                   "--in", str(src), "--out", str(tmp_path / "small.pgm")])
        assert rc == 0
        out = load_image(str(tmp_path / "small.pgm"))
        assert (out.height, out.width) == (32, 32)
        capsys.readouterr()

    def test_missing_input_is_data_error(self, tmp_path, capsys):
        rc = main(["degrade", "--task", "car", "--quality", "10", "--seed", "1",
                   "--in", str(tmp_path / "nope.pgm"), "--out", str(tmp_path / "o.pgm")])
        assert rc == 3
        capsys.readouterr()

    def test_seed_omitted_prints_choice(self, tmp_path, capsys):
        [src] = write_images(tmp_path / "in", n=1)
        rc = main(["degrade", "--task", "denoise", "--sigma", "10",
                   "--in", str(src), "--out", str(tmp_path / "o.pgm")])
        assert rc == 0
        assert "seed " in capsys.readouterr().out


class TestTrainCommand:
    def test_smoke_run_writes_metrics(self, tmp_path, capsys):
        write_images(tmp_path / "data", n=3, size=24, seed=1)
        write_images(tmp_path / "val", n=1, size=24, seed=50)
        cfg = write_config(tmp_path / "c.cfg", iterations=4)
        rc = main(["train", "--config", str(cfg), "--data", str(tmp_path / "data"),
                   "--val", str(tmp_path / "val"), "--out", str(tmp_path / "run")])
        assert rc == 0
        log = (tmp_path / "run" / "metrics.log").read_text()
        assert log.strip()
        assert (tmp_path / "run" / "last.ckpt").exists()
        capsys.readouterr()

    def test_zero_iterations_initial_checkpoint(self, tmp_path, capsys):
        write_images(tmp_path / "data", n=2)
        cfg = write_config(tmp_path / "c.cfg")
        rc = main(["train", "--config", str(cfg), "--data", str(tmp_path / "data"),
                   "--out", str(tmp_path / "run"), "--iterations", "0"])
        assert rc == 0
        assert (tmp_path / "run" / "last.ckpt").exists()
        capsys.readouterr()

    def test_fixed_seed_byte_reproducible(self, tmp_path, capsys):
        write_images(tmp_path / "data", n=2)
        cfg = write_config(tmp_path / "c.cfg", iterations=3, val_period=3)
        blobs = []
        for run in ("r1", "r2"):
            rc = main(["train", "--config", str(cfg), "--data",
                       str(tmp_path / "data"), "--out", str(tmp_path / run),
                       "--seed", "11"])
            assert rc == 0
            blobs.append((tmp_path / run / "last.ckpt").read_bytes())
        assert blobs[0] == blobs[1]
        capsys.readouterr()


def make_ckpt(tmp_path, cfg=None, seed=0):
    params = init_params(cfg or tiny_config(), seed=seed)
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, str(path))
    return path, params


class TestInferEval:
    def test_infer_deterministic(self, tmp_path, capsys):
        ckpt, _ = make_ckpt(tmp_path)
        [src] = write_images(tmp_path / "in", n=1, size=16)
        outs = []
        for name in ("o1.pgm", "o2.pgm"):
            rc = main(["infer", "--ckpt", str(ckpt), "--in", str(src),
                       "--out", str(tmp_path / name)])
            assert rc == 0
            outs.append((tmp_path / name).read_bytes())
        assert outs[0] == outs[1]
        capsys.readouterr()

    def test_channel_mismatch_is_data_error(self, tmp_path, capsys):
        ckpt, _ = make_ckpt(tmp_path)
        [src] = write_images(tmp_path / "in", n=1, size=16, channels=3)
        rc = main(["infer", "--ckpt", str(ckpt), "--in", str(src),
                   "--out", str(tmp_path / "o.pgm")])
        assert rc == 3
        capsys.readouterr()

    def test_corrupted_checkpoint_exit_3(self, tmp_path, capsys):
        ckpt, _ = make_ckpt(tmp_path)
        blob = bytearray(ckpt.read_bytes())
        blob[len(blob) // 2] ^= 0x01
        ckpt.write_bytes(bytes(blob))
        [src] = write_images(tmp_path / "in", n=1, size=16)
        rc = main(["infer", "--ckpt", str(ckpt), "--in", str(src),
                   "--out", str(tmp_path / "o.pgm")])
        assert rc == 3
        assert "checksum" in capsys.readouterr().err

    def test_eval_hq_against_itself(self, tmp_path, capsys):
        write_images(tmp_path / "hq", n=2, size=24)
        rc = main(["eval", "--lq-dir", str(tmp_path / "hq"),
                   "--hq-dir", str(tmp_path / "hq"), "--border", "1"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "inf" in out
        assert "1.0000" in out

    def test_eval_with_checkpoint_runs(self, tmp_path, capsys):
        ckpt, _ = make_ckpt(tmp_path)
        write_images(tmp_path / "lq", n=2, size=16, seed=3)
        write_images(tmp_path / "hq", n=2, size=16, seed=3)
        rc = main(["eval", "--ckpt", str(ckpt), "--lq-dir", str(tmp_path / "lq"),
                   "--hq-dir", str(tmp_path / "hq")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "mean" in out


class TestGradcheckInspect:
    def test_gradcheck_exit_zero(self, capsys):
        rc = main(["gradcheck", "--tolerance", "1e-4"])
        assert rc == 0
        assert "PASS" in capsys.readouterr().out

    def test_gradcheck_impossible_tolerance(self, capsys):
        rc = main(["gradcheck", "--tolerance", "0"])
        assert rc == 4
        assert "FAIL" in capsys.readouterr().out

    def test_inspect_total_matches_param_count(self, tmp_path, capsys):
        cfg = tiny_config(task="sr", scale=2, channels=16, heads=2)
        ckpt, _ = make_ckpt(tmp_path, cfg)
        rc = main(["inspect", "--ckpt", str(ckpt)])
        assert rc == 0
        out = capsys.readouterr().out
        assert f"total parameters {param_count(cfg)}" in out
