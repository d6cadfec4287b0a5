"""Command-line front end.

``qnmf <task> --in IN --out OUT [options]`` with task one of ``denoise``,
``deblur``, ``complete``, ``rpca`` or ``synth``.  Settings may also come
from a ``key=value`` file given with ``--config``; flags override it.

Exit status: 0 success, 1 configuration error, 2 I/O error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .imaging import (
    DEBLUR_NSS_SPEC,
    NSS_SPEC,
    DegradationSpec,
    deblur,
    default_config,
    degrade,
    mc_restore,
    nss_denoise,
    parse_kernel,
    rpca_restore,
    schedule_lookup,
)
from .io import read_image, read_mask, write_image, write_mask
from .linalg import SVDNonConvergence
from .metrics import SSIM_STD, SSIM_WIN, psnr, ssim
from .patches import PatchGroupSpec
from .solvers import SolverDiverged

log = logging.getLogger("qnmf")

TASKS = ("denoise", "deblur", "complete", "rpca", "synth")
IMAGE_SUFFIXES = (".png", ".ppm", ".pnm", ".bmp", ".tif", ".tiff")
SSIM_CONVENTION = f"mean over RGB channels, {SSIM_WIN}x{SSIM_WIN} Gaussian window std {SSIM_STD}, 8-bit scale"

# Solver fields settable from the command line or a config file.
ADMM_KEYS = ("lam", "alpha", "beta0", "mu", "gamma", "rho", "max_iter", "tol", "shrink_mode")
PATCH_KEYS = ("patch_side", "group_size", "search_window", "stride")
ALIASES = {"lambda": "lam", "in": "input", "out": "output", "noise": "sigma"}


class ConfigError(ValueError):
    """Bad or missing settings."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qnmf", description="Quaternion low-rank color image restoration.")
    p.add_argument("task", nargs="?", choices=TASKS + ("run",), help="task; 'run' takes it from --task or --config")
    p.add_argument("--task", dest="task_opt", choices=TASKS)
    p.add_argument("--config", help="key=value settings file; flags take precedence")
    p.add_argument("--in", dest="input", help="input image, directory, or builtin:<name>")
    p.add_argument("--out", dest="output", help="output image or directory")
    p.add_argument("--ref", help="clean reference image for PSNR/SSIM")
    p.add_argument("--mask", help="complete: mask image (0 = missing); synth: fraction of pixels to drop")
    p.add_argument("--synthesize", action="store_true", help="treat --in as clean and degrade it first")
    p.add_argument("--sigma", "--noise", dest="sigma", type=float, help="Gaussian noise std (0-255 scale)")
    p.add_argument("--kernel", help="blur kernel: uniform:9 | gaussian:25:1.6 | motion:20:60")
    p.add_argument("--miss", type=float, help="fraction of missing pixels")
    p.add_argument("--impulse", type=float, help="fraction of impulse-corrupted pixels")
    p.add_argument("--mode", choices=("global", "nss"))
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta0", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--shrink-mode", dest="shrink_mode", choices=("truncated", "theorem"))
    p.add_argument("--patch-side", dest="patch_side", type=int)
    p.add_argument("--group-size", dest="group_size", type=int)
    p.add_argument("--search-window", dest="search_window", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--outer-iters", dest="outer_iters", type=int)
    p.add_argument("--trace", help="solver trace CSV (default: <out stem>_trace.csv)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def read_config(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        out[ALIASES.get(key, key)] = value
    return out


def resolve(argv=None) -> dict:
    """Merge the config file with flags into one settings dict."""
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if v is not None and v is not False}
    settings = {}
    if args.config:
        file_settings = read_config(args.config)
        # Type-check file values through the parser itself.
        known = {a.dest: a for a in parser._actions}
        for key, value in file_settings.items():
            if key == "task":
                settings["task_opt"] = value
                continue
            action = known.get(key)
            if action is None or key in ("config", "help"):
                raise ConfigError(f"unknown config key {key!r}")
            if isinstance(action, argparse._StoreTrueAction):
                settings[key] = value.lower() in ("1", "true", "yes")
                continue
            try:
                settings[key] = action.type(value) if action.type else value
            except ValueError:
                raise ConfigError(f"bad value for {key}: {value!r}") from None
            if action.choices and settings[key] not in action.choices:
                raise ConfigError(f"{key} must be one of {list(action.choices)}")
    settings.update(flags)
    task = settings.pop("task", None)
    task_opt = settings.pop("task_opt", None)
    if task in (None, "run"):
        task = task_opt
    elif task_opt not in (None, task):
        raise ConfigError(f"conflicting tasks {task!r} and {task_opt!r}")
    if task not in TASKS:
        raise ConfigError("no task given; use a subcommand or --task")
    settings["task"] = task
    settings.setdefault("seed", 0)
    settings.setdefault("mode", "global")
    for key in ("input", "output"):
        if key not in settings:
            raise ConfigError(f"--{'in' if key == 'input' else 'out'} is required")
    return settings


def _admm_config(task: str, s: dict):
    kind = parse_kernel(s["kernel"])[0] if task == "deblur" else None
    cfg = default_config(task, kind)
    try:
        return cfg.replace(**{k: s[k] for k in ADMM_KEYS if k in s})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _patch_spec(base: PatchGroupSpec, s: dict) -> PatchGroupSpec:
    try:
        return replace(base, **{k: s[k] for k in PATCH_KEYS if k in s})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _require(s: dict, key: str, why: str):
    if s.get(key) is None:
        raise ConfigError(f"{s['task']} needs --{key.replace('_', '-')} {why}")
    return s[key]


def _check_rate(s: dict, key: str):
    if key in s and not 0.0 <= s[key] <= 1.0:
        raise ConfigError(f"--{key} must lie in [0, 1]")


def synthesize(clean: np.ndarray, s: dict) -> tuple[np.ndarray, dict]:
    """Apply every requested degradation in a fixed order: blur, noise, impulse, mask.

    Each step draws from its own stream derived from the seed.
    """
    out, info = clean, {}
    seed = s["seed"]
    steps = []
    if s.get("kernel"):
        steps.append(DegradationSpec("blur", sigma=s.get("sigma", 0.0), kernel=s["kernel"]))
    elif s.get("sigma"):
        steps.append(DegradationSpec("gaussian_noise", sigma=s["sigma"]))
    if s.get("impulse"):
        steps.append(DegradationSpec("impulse", rate=s["impulse"]))
    if s.get("miss") is not None:
        steps.append(DegradationSpec("mask", rate=s["miss"]))
    for k, spec in enumerate(steps):
        out, extra = degrade(out, spec, seed=[seed, k])
        info.update(extra)
    return out, info


def _task_degradation(s: dict) -> dict:
    # Only the degradation the task undoes is synthesized.
    task = s["task"]
    keep = {"seed": s["seed"]}
    if task == "denoise":
        keep["sigma"] = s["sigma"]
    elif task == "deblur":
        keep.update(kernel=s["kernel"], sigma=s.get("sigma", 0.0))
    elif task == "complete":
        keep["miss"] = _require(s, "miss", "to synthesize missing pixels")
    elif task == "rpca":
        keep["impulse"] = _require(s, "impulse", "to synthesize impulse noise")
    return keep


def _sidecar_path(out: Path) -> Path:
    return out.with_suffix(".json")


def _default_trace(out: Path) -> Path:
    return out.with_name(out.stem + "_trace.csv")


def _write_denoise_trace(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("iter", "sigma_est"))
        for k, v in enumerate(history):
            w.writerow((k, repr(float(v))))


def _metrics(ref, img) -> dict:
    if ref is None:
        return {"psnr": None, "ssim": None}
    return {"psnr": psnr(ref, img), "ssim": ssim(ref, img)}


def run_task(s: dict, src: str, dst: Path, trace_path: Path | None = None) -> dict:
    """Run one restoration; writes the image, the trace CSV and the JSON sidecar."""
    task = s["task"]
    for key in ("miss", "impulse"):
        _check_rate(s, key)
    if task == "denoise":
        _require(s, "sigma", "(noise std on the 0-255 scale)")
    if task == "deblur":
        _require(s, "kernel", "(e.g. motion:20:60)")
        try:
            parse_kernel(s["kernel"])
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"bad kernel {s['kernel']!r}: {exc}") from None

    source = read_image(src)
    ref = read_image(s["ref"]) if s.get("ref") else None
    omega = read_mask(s["mask"]) if s.get("mask") else None
    if s.get("synthesize") or str(src).startswith("builtin:"):
        ref = source
        degraded, info = synthesize(source, _task_degradation(s))
        omega = info.get("omega", omega)
    else:
        degraded = source
    if ref is not None and ref.shape != degraded.shape:
        raise ConfigError(f"reference shape {ref.shape} differs from input {degraded.shape}")

    mode = s["mode"]
    record = {"task": task, "mode": mode, "seed": s["seed"], "input": str(src)}
    start = time.perf_counter()
    if task == "denoise":
        sched = schedule_lookup(s["sigma"])
        sched = replace(
            sched,
            **{k: s[k] for k in ("lam", "alpha", "outer_iters", *PATCH_KEYS) if k in s},
        )
        restored, history = nss_denoise(degraded, s["sigma"], sched, return_history=True)
        iters, converged = len(history), None
        config = asdict(sched)
        trace_writer = lambda path: _write_denoise_trace(path, history)  # noqa: E731
    else:
        cfg = _admm_config(task, s)
        if task == "deblur":
            kind, kernel = parse_kernel(s["kernel"])
            spec = _patch_spec(DEBLUR_NSS_SPEC, s)
            res = deblur(degraded, kind, kernel, cfg, mode, spec)
            record["kernel"] = s["kernel"]
        elif task == "complete":
            if omega is None:
                raise ConfigError("complete needs --mask, or --synthesize with --miss")
            if omega.shape != degraded.shape[:2]:
                raise ConfigError(f"mask shape {omega.shape} differs from image {degraded.shape[:2]}")
            res = mc_restore(degraded, omega, mode, cfg, _patch_spec(NSS_SPEC, s))
        else:
            res = rpca_restore(degraded, mode, cfg, _patch_spec(NSS_SPEC, s))
        restored = res.image
        iters, converged = len(res.trace), res.trace.converged()
        config = asdict(cfg)
        if mode == "nss":
            config["patch"] = asdict(_patch_spec(DEBLUR_NSS_SPEC if task == "deblur" else NSS_SPEC, s))
        trace_writer = res.trace.to_csv
    runtime_ms = (time.perf_counter() - start) * 1e3

    write_image(dst, restored)
    trace_writer(trace_path or _default_trace(dst))
    metrics = _metrics(ref, restored)
    before = _metrics(ref, degraded)
    record.update(
        psnr=metrics["psnr"],
        ssim=metrics["ssim"],
        input_psnr=before["psnr"],
        input_ssim=before["ssim"],
        config=config,
        iters=iters,
        converged=converged,
        runtime_ms=runtime_ms,
        ssim_convention=SSIM_CONVENTION,
    )
    _sidecar_path(dst).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    log.info("%s -> %s: psnr %s, %d iterations", src, dst, record["psnr"], iters)
    return record


def run_synth(s: dict, src: str, dst: Path) -> dict:
    """Degrade a clean image; writes the degraded image, the clean copy and the mask/support maps."""
    for key in ("miss", "impulse"):
        _check_rate(s, key)
    if s.get("kernel"):
        try:
            parse_kernel(s["kernel"])
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"bad kernel {s['kernel']!r}: {exc}") from None
    if s.get("mask") is not None:
        try:
            s["miss"] = float(s["mask"])
        except ValueError:
            raise ConfigError(f"synth --mask takes a missing fraction, got {s['mask']!r}") from None
        _check_rate(s, "miss")
    clean = read_image(src)
    degraded, info = synthesize(clean, s)
    write_image(dst, degraded)
    write_image(dst.with_name(dst.stem + "_clean" + dst.suffix), clean)
    if "omega" in info:
        write_mask(dst.with_name(dst.stem + "_mask.png"), info["omega"])
    if "support" in info:
        write_mask(dst.with_name(dst.stem + "_support.png"), info["support"])
    record = {
        "task": "synth",
        "seed": s["seed"],
        "input": str(src),
        "sigma": s.get("sigma"),
        "kernel": s.get("kernel"),
        "miss": s.get("miss"),
        "impulse": s.get("impulse"),
        "psnr": psnr(clean, degraded),
    }
    _sidecar_path(dst).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return record


def _jobs(s: dict):
    src, dst = s["input"], Path(s["output"])
    if not str(src).startswith("builtin:") and Path(src).is_dir():
        files = sorted(p for p in Path(src).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise FileNotFoundError(f"no images in {src}")
        dst.mkdir(parents=True, exist_ok=True)
        return [(str(f), dst / (f.stem + ".png"), None) for f in files]
    trace = Path(s["trace"]) if s.get("trace") else None
    return [(src, dst, trace)]


def main(argv=None) -> int:
    try:
        s = resolve(argv)
    except ConfigError as exc:
        print(f"qnmf: config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"qnmf: cannot read config: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.INFO if s.get("verbose") else logging.WARNING, format="%(message)s")
    try:
        for src, dst, trace in _jobs(s):
            if s["task"] == "synth":
                run_synth(s, src, dst)
            else:
                run_task(s, src, dst, trace)
    except (ConfigError, KeyError) as exc:
        print(f"qnmf: config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"qnmf: I/O error: {exc}", file=sys.stderr)
        return 2
    except (SolverDiverged, SVDNonConvergence) as exc:
        print(f"qnmf: solver failed: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"qnmf: config error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
