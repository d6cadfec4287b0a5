import math

import numpy as np
import pytest
from oracles import f1_score

from qnmf.imaging import (
    BUILTIN_SEEDS,
    DEBLUR_PRESETS,
    DegradationSpec,
    DenoiseSchedule,
    builtin_image,
    deblur,
    default_config,
    degrade,
    group_threshold,
    make_kernel,
    mc_restore,
    nss_denoise,
    parse_kernel,
    rpca_restore,
    schedule_lambda,
    schedule_lookup,
    synthetic_image,
)
from qnmf.metrics import psnr
from qnmf.quaternion import quat_modulus


@pytest.mark.parametrize(
    "sigma, expected",
    [(5, (4, 80, 4)), (5.01, (4, 80, 6)), (20, (4, 80, 6)), (30, (5, 90, 8)), (40, (5, 90, 8)), (60, (5, 120, 9)), (75, (5, 140, 10))],
)
def test_schedule_table(sigma, expected):
    s = schedule_lookup(sigma)
    assert (s.patch_side, s.group_size, s.outer_iters) == expected
    assert s.alpha == 4.0
    assert s.lam == pytest.approx(2 * math.sqrt(5 * math.sqrt(2 * s.group_size) * sigma))


def test_schedule_lambda_value():
    c = math.sqrt(5 * math.sqrt(180) * 30)
    assert c == pytest.approx(44.86, abs=5e-3)
    assert schedule_lookup(30).lam == pytest.approx(89.72, abs=5e-3)
    assert schedule_lambda(30, 90) == 2 * c


def test_schedule_rejects_nonpositive():
    with pytest.raises(ValueError):
        schedule_lookup(0.0)


def test_schedule_spec_and_threshold():
    s = schedule_lookup(30)
    assert s.spec.patch_side == 5 and s.spec.group_size == 90 and s.spec.search_window == 30
    assert group_threshold(10.0, 4.0) == 20.0


def test_denoise_near_identity_on_clean_input():
    img = synthetic_image("textured", 48, 0)
    sched = DenoiseSchedule(1.0, 4, 20, 2, lam=1e-6)
    out = nss_denoise(img, 1.0, sched)
    assert psnr(img, out) >= 60


def test_denoise_piecewise_gain():
    img = synthetic_image("piecewise", 128, 3)
    noisy, _ = degrade(img, DegradationSpec("gaussian_noise", sigma=30), seed=4)
    out, history = nss_denoise(noisy, 30.0, return_history=True)
    assert psnr(img, out) >= psnr(img, noisy) + 8
    assert out.min() >= 0 and out.max() <= 255
    assert len(history) == 8 and history[0] == 30.0
    assert all(a >= b for a, b in zip(history, history[1:]))


def test_denoise_is_deterministic_and_validates():
    img = synthetic_image("two_tone", 32, 0)
    noisy, _ = degrade(img, DegradationSpec("gaussian_noise", sigma=20), seed=1)
    sched = DenoiseSchedule(20, 4, 16, 2, schedule_lambda(20, 16), search_window=12)
    np.testing.assert_array_equal(nss_denoise(noisy, 20, sched), nss_denoise(noisy, 20, sched))
    with pytest.raises(ValueError):
        nss_denoise(noisy, 0.0)
    with pytest.raises(ValueError):
        nss_denoise(noisy[:3, :3], 20, sched)


def test_uniform_and_gaussian_kernels():
    u = make_kernel("uniform")
    assert u.shape == (9, 9) and np.all(u == 1 / 81)
    g = make_kernel("gaussian")
    assert g.shape == (25, 25)
    assert abs(g.sum() - 1) <= 1e-12 and np.all(g >= 0)
    np.testing.assert_allclose(g, g[::-1, ::-1], atol=0)


def test_motion_kernel_is_a_thin_segment():
    k = make_kernel("motion", length=20, angle=60)
    assert abs(k.sum() - 1) <= 1e-12
    rows, cols = np.nonzero(k)
    vals = k[rows, cols]
    np.testing.assert_allclose(vals, vals[0])
    # Steep line: exactly one pixel per row.
    assert len(set(rows)) == len(rows)
    x, y = cols - cols.mean(), -(rows - rows.mean())
    slope = np.sum(x * y) / np.sum(x * x)
    assert math.degrees(math.atan(slope)) == pytest.approx(60, abs=2)
    extent = math.hypot(x.max() - x.min(), y.max() - y.min())
    assert 18 <= extent <= 20


def test_parse_kernel():
    kind, k = parse_kernel("gaussian:25:1.6")
    assert kind == "gaussian" and k.shape == (25, 25)
    assert parse_kernel("uniform:5")[1].shape == (5, 5)
    np.testing.assert_array_equal(parse_kernel("motion:20:60")[1], make_kernel("motion"))
    with pytest.raises(ValueError):
        parse_kernel("box:3")


def test_degradation_spec_validation():
    with pytest.raises(ValueError):
        DegradationSpec("fog")
    with pytest.raises(ValueError):
        DegradationSpec("mask", rate=1.5)
    with pytest.raises(ValueError):
        DegradationSpec("gaussian_noise", sigma=-1)


def test_degrade_identities():
    img = synthetic_image("textured", 32, 1)
    out, _ = degrade(img, DegradationSpec("gaussian_noise", sigma=0), seed=3)
    np.testing.assert_array_equal(out, img)
    out, info = degrade(img, DegradationSpec("mask", rate=0.0), seed=3)
    assert info["omega"].all()
    np.testing.assert_array_equal(out, img)


def test_noise_statistics():
    img = np.full((512, 512, 3), 128.0)
    out, _ = degrade(img, DegradationSpec("gaussian_noise", sigma=30), seed=0)
    assert abs(np.std(out - img) - 30) <= 0.02 * 30


def test_impulse_and_mask_exact_counts():
    img = synthetic_image("piecewise", 64, 2)
    out, info = degrade(img, DegradationSpec("impulse", rate=0.1), seed=5)
    assert info["support"].sum() == round(0.1 * 64 * 64)
    np.testing.assert_array_equal(out[~info["support"]], img[~info["support"]])
    assert out.min() >= 0 and out.max() <= 255
    out, info = degrade(img, DegradationSpec("mask", rate=0.3), seed=5)
    assert (~info["omega"]).sum() == round(0.3 * 64 * 64)
    assert not out[~info["omega"]].any()


def test_degrade_is_deterministic():
    img = synthetic_image("textured", 32, 1)
    spec = DegradationSpec("blur", sigma=5, kernel="motion:20:60")
    a, _ = degrade(img, spec, seed=9)
    b, _ = degrade(img, spec, seed=9)
    c, _ = degrade(img, spec, seed=10)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_builtin_images():
    img = builtin_image("two_tone64")
    np.testing.assert_array_equal(img, synthetic_image("two_tone", 64, BUILTIN_SEEDS["two_tone"]))
    assert builtin_image("textured128").shape == (128, 128, 3)
    for bad in ("nothing64", "textured", "textured8"):
        with pytest.raises(KeyError):
            builtin_image(bad)
    with pytest.raises(ValueError):
        synthetic_image("noise")


def test_default_configs():
    for kind, (beta0, gamma) in DEBLUR_PRESETS.items():
        cfg = default_config("deblur", kind)
        assert (cfg.beta0, cfg.gamma) == (beta0, gamma)
    assert default_config("deblur", "motion").beta0 == 7.5 and default_config("deblur", "motion").gamma == 115
    with pytest.raises(ValueError):
        default_config("denoise")


def test_completion_fully_observed_is_identity():
    img = synthetic_image("textured", 32, 0)
    res = mc_restore(img, np.ones((32, 32), bool), cfg=default_config("complete").replace(max_iter=20))
    np.testing.assert_array_equal(res.image, img)


def test_rpca_detects_impulses():
    img = builtin_image("lowrank64")
    noisy, info = degrade(img, DegradationSpec("impulse", rate=0.1), seed=0)
    res = rpca_restore(noisy)
    detected = quat_modulus(res.extra["sparse"]) > 1e-3
    assert f1_score(detected, info["support"]) >= 0.9
    assert psnr(img, res.image) >= psnr(img, noisy) + 20


@pytest.mark.parametrize("spec", ["uniform:9", "gaussian:25:1.6", "motion:20:60"])
def test_deblur_improves_psnr(spec):
    img = builtin_image("textured64")
    blurred, info = degrade(img, DegradationSpec("blur", sigma=5, kernel=spec), seed=0)
    kind = spec.split(":")[0]
    res = deblur(blurred, kind, info["kernel"])
    assert psnr(img, res.image) > psnr(img, blurred)
    assert res.trace.converged()
    with pytest.raises(ValueError):
        deblur(blurred, kind, info["kernel"], mode="patch")
