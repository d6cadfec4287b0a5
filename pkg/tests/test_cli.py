import json
import subprocess
import sys

import numpy as np
import pytest

from qnmf import cli
from qnmf.imaging import builtin_image
from qnmf.io import ImageFormatError, read_image, read_mask, read_ppm, write_image, write_mask, write_ppm
from qnmf.solvers import SolverDiverged


def run(*args):
    return cli.main([str(a) for a in args])


def test_ppm_round_trip_is_bit_exact(tmp_path):
    px = np.random.default_rng(0).integers(0, 256, (7, 9, 3)).astype(float)
    path = tmp_path / "a.ppm"
    write_ppm(path, px)
    np.testing.assert_array_equal(read_ppm(path), px)
    first = path.read_bytes()
    write_image(path, read_image(path))
    assert path.read_bytes() == first


def test_ppm_header_comments_and_maxval(tmp_path):
    path = tmp_path / "b.ppm"
    path.write_bytes(b"P6\n# made by hand\n2 1\n# another\n15\n" + bytes([15, 0, 5, 0, 15, 0]))
    np.testing.assert_allclose(read_ppm(path), [[[255, 0, 85], [0, 255, 0]]])


@pytest.mark.parametrize(
    "data", [b"P3\n1 1\n255\n", b"P6\n1 1\n", b"P6\n2 2\n255\n\x00\x01", b"P6\nx 1\n255\n\x00\x00\x00", b"P6\n1 1\n999\n"]
)
def test_ppm_rejects_bad_files(tmp_path, data):
    path = tmp_path / "bad.ppm"
    path.write_bytes(data)
    with pytest.raises(ImageFormatError):
        read_ppm(path)


def test_png_and_mask_round_trip(tmp_path):
    px = np.random.default_rng(1).integers(0, 256, (5, 6, 3)).astype(float)
    write_image(tmp_path / "a.png", px)
    np.testing.assert_array_equal(read_image(tmp_path / "a.png"), px)
    write_image(tmp_path / "c.png", px + 0.4 - 300 * (px > 250))
    assert read_image(tmp_path / "c.png").min() >= 0
    omega = np.random.default_rng(2).uniform(size=(5, 6)) < 0.5
    write_mask(tmp_path / "m.png", omega)
    np.testing.assert_array_equal(read_mask(tmp_path / "m.png"), omega)
    np.testing.assert_array_equal(read_image("builtin:two_tone64"), builtin_image("two_tone64"))


def test_denoise_repeat_is_byte_identical(tmp_path):
    for name in ("x1", "x2"):
        assert run("denoise", "--in", "builtin:two_tone32", "--out", tmp_path / f"{name}.png", "--sigma", 30, "--seed", 7) == 0
    assert (tmp_path / "x1.png").read_bytes() == (tmp_path / "x2.png").read_bytes()
    assert (tmp_path / "x1_trace.csv").read_bytes() == (tmp_path / "x2_trace.csv").read_bytes()
    side = json.loads((tmp_path / "x1.json").read_text())
    for key in ("psnr", "ssim", "config", "seed", "iters", "runtime_ms", "ssim_convention"):
        assert key in side
    assert side["seed"] == 7 and side["psnr"] > side["input_psnr"]
    assert side["config"]["group_size"] == 90


def test_deblur_applies_presets(tmp_path):
    out = tmp_path / "b.png"
    assert run("deblur", "--in", "builtin:textured32", "--out", out, "--kernel", "motion:20:60", "--sigma", 15) == 0
    cfg = json.loads(out.with_suffix(".json").read_text())["config"]
    assert cfg["beta0"] == 7.5 and cfg["gamma"] == 115.0
    assert run("deblur", "--in", "builtin:textured32", "--out", out, "--kernel", "gaussian:25:1.6", "--beta0", 3) == 0
    cfg = json.loads(out.with_suffix(".json").read_text())["config"]
    assert cfg["beta0"] == 3.0 and cfg["gamma"] == 65.0


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "run.cfg"
    conf.write_text("# experiment\ntask = rpca\nin = builtin:lowrank32\nimpulse = 0.1\nlambda = 1e4\nrho = 300\nmax-iter = 7\n")
    out = tmp_path / "r.png"
    assert run("run", "--config", conf, "--out", out, "--max-iter", 5) == 0
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["task"] == "rpca" and side["iters"] == 5 and side["config"]["lam"] == 1e4


def test_complete_with_mask_file(tmp_path):
    img = builtin_image("two_tone32")
    omega = np.random.default_rng(3).uniform(size=(32, 32)) < 0.6
    write_image(tmp_path / "in.png", img * omega[..., None])
    write_mask(tmp_path / "m.png", omega)
    write_image(tmp_path / "ref.png", img)
    out = tmp_path / "c.png"
    args = ["complete", "--in", tmp_path / "in.png", "--mask", tmp_path / "m.png", "--out", out]
    assert run(*args, "--ref", tmp_path / "ref.png", "--max-iter", 40, "--trace", tmp_path / "t.csv") == 0
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["psnr"] > side["input_psnr"]
    assert (tmp_path / "t.csv").read_text().startswith("iter,feas_residual")
    np.testing.assert_array_equal(read_image(out)[omega], img[omega])


def test_synth_outputs(tmp_path):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    assert run("synth", "--in", "builtin:textured64", "--out", a, "--noise", 30, "--seed", 1) == 0
    assert run("synth", "--in", "builtin:textured64", "--out", b, "--noise", 30, "--seed", 1) == 0
    assert a.read_bytes() == b.read_bytes()
    np.testing.assert_array_equal(read_image(tmp_path / "a_clean.png"), np.rint(builtin_image("textured64")))
    m = tmp_path / "m.png"
    assert run("synth", "--in", "builtin:lowrank512", "--out", m, "--mask", 0.5) == 0
    omega = read_mask(tmp_path / "m_mask.png")
    assert abs((~omega).mean() - 0.5) <= 0.01
    i = tmp_path / "i.png"
    assert run("synth", "--in", "builtin:lowrank64", "--out", i, "--impulse", 0.1) == 0
    assert read_mask(tmp_path / "i_support.png").sum() == round(0.1 * 64 * 64)


def test_directory_batch(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    for k in range(2):
        write_image(src / f"im{k}.png", builtin_image("two_tone32"))
    (src / "notes.txt").write_text("skip me")
    assert run("rpca", "--in", src, "--out", tmp_path / "dst", "--max-iter", 3) == 0
    assert sorted(p.name for p in (tmp_path / "dst").glob("*.png")) == ["im0.png", "im1.png"]


@pytest.mark.parametrize(
    "args",
    [
        ["denoise", "--in", "builtin:two_tone32"],
        ["denoise", "--in", "builtin:two_tone32", "--out", "x.png"],
        ["deblur", "--in", "builtin:two_tone32", "--out", "x.png"],
        ["deblur", "--in", "builtin:two_tone32", "--out", "x.png", "--kernel", "box:3"],
        ["complete", "--in", "builtin:two_tone32", "--out", "x.png"],
        ["complete", "--in", "builtin:two_tone32", "--out", "x.png", "--miss", 1.5],
        ["rpca", "--in", "builtin:nothing32", "--out", "x.png"],
        ["rpca", "--in", "builtin:two_tone32", "--out", "x.png", "--mu", 0.5],
        ["run", "--in", "builtin:two_tone32", "--out", "x.png"],
        ["denoise", "--task", "rpca", "--in", "builtin:two_tone32", "--out", "x.png"],
        ["denoise", "--bogus"],
        ["denoise", "--sigma", "abc"],
    ],
)
def test_config_errors_exit_1(tmp_path, monkeypatch, args):
    monkeypatch.chdir(tmp_path)
    assert run(*args) == 1


def test_bad_config_file_keys_exit_1(tmp_path):
    conf = tmp_path / "c.cfg"
    conf.write_text("colour = red\n")
    assert run("denoise", "--config", conf, "--in", "x", "--out", "y") == 1
    conf.write_text("sigma = loud\n")
    assert run("denoise", "--config", conf, "--in", "x", "--out", "y") == 1
    conf.write_text("just words\n")
    assert run("denoise", "--config", conf, "--in", "x", "--out", "y") == 1


def test_io_errors_exit_2(tmp_path):
    assert run("denoise", "--sigma", 10, "--in", tmp_path / "missing.png", "--out", tmp_path / "o.png") == 2
    (tmp_path / "junk.png").write_bytes(b"not an image")
    assert run("denoise", "--sigma", 10, "--in", tmp_path / "junk.png", "--out", tmp_path / "o.png") == 2
    out = tmp_path / "nodir" / "o.png"
    assert run("rpca", "--in", "builtin:two_tone32", "--out", out, "--impulse", 0.1, "--max-iter", 2) == 2
    assert run("denoise", "--config", tmp_path / "none.cfg", "--in", "a", "--out", "b") == 2


def test_solver_failure_exit_3(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise SolverDiverged("non-finite iterate")

    monkeypatch.setattr(cli, "rpca_restore", boom)
    assert run("rpca", "--in", "builtin:two_tone32", "--out", tmp_path / "o.png", "--impulse", 0.1) == 3


def test_module_and_script_entry_points(tmp_path):
    out = tmp_path / "s.png"
    proc = subprocess.run(
        [sys.executable, "-m", "qnmf", "synth", "--in", "builtin:two_tone32", "--out", str(out), "--noise", "5"],
        capture_output=True,
    )
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "qnmf", "denoise"], capture_output=True, text=True)
    assert proc.returncode == 1 and "config error" in proc.stderr
