"""``polaradmit`` command-line entry point.

Exit codes: 0 success / feasible data, 2 usage or I/O error, 3 infeasible
data, 4 training divergence.  Results go to stdout, progress to stderr.
"""
import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import pario
from .admissibility import ConstraintTolerance, dataset_report, project_to_feasible
from .errors import DegenerateBaseline, NonFiniteLoss, PolarAdmitError
from .metrics import dataset_features, fit_stats, frechet_distance, error_rate
from .synth import load_synth_spec, spec_from_mapping, synth_image, SynthSpec
from .tinygan import TrainConfig, generate_polar, models_from_state, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_DIVERGED = 4

log = logging.getLogger("polaradmit")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# input discovery


def load_polar_inputs(path):
    """Resolve a PMIR file, quad-PNG stem, directory or manifest into ``[(name, image)]``."""
    path = Path(path)
    items = []
    if path.is_dir():
        sources = [(p.stem, p) for p in pario.list_images(path, (".pmir",))]
        sources += [(Path(s).name, s) for s in pario.find_quad_stems(path)]
        sources.sort(key=lambda t: t[0])
    elif path.is_file() and pario.is_pmir(path):
        sources = [(path.stem, path)]
    elif path.is_file() and pario.is_manifest(path):
        sources = [(Path(e.path).stem if e.path.endswith(".pmir") else Path(e.path).name, e.path)
                   for e in pario.read_manifest(path) if e.domain == "POLAR"]
    elif pario.quad_paths(path)[0].exists():
        sources = [(path.name, path)]
    else:
        raise FileNotFoundError(f"no polarimetric input at {path}")
    if not sources:
        raise FileNotFoundError(f"no polarimetric images found in {path}")
    for name, src in sources:
        src = str(src)
        img = pario.read_pmir(src) if pario.is_pmir(src) else pario.read_quad_png(src)
        if img.shape[2] != 4:
            raise pario.FormatError(f"{src}: expected 4 intensity channels, got {img.shape[2]}")
        items.append((name, img))
    return items


def load_rgb_dir(path):
    files = pario.list_images(path, pario.RGB_EXTENSIONS)
    if not files:
        raise FileNotFoundError(f"no RGB images found in {path}")
    return [(p.stem, pario.read_rgb(p)) for p in files]


def tile_patches(images, patch):
    """Non-overlapping ``patch`` x ``patch`` tiles in row-major order, as (N, C, p, p)."""
    tiles = []
    for img in images:
        h, w = img.shape[:2]
        for i in range(0, h - patch + 1, patch):
            for j in range(0, w - patch + 1, patch):
                tiles.append(img[i:i + patch, j:j + patch].transpose(2, 0, 1))
    if not tiles:
        return np.empty((0, images[0].shape[2] if images else 0, patch, patch))
    return np.stack(tiles)


def _threads(args):
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("POLARADMIT_THREADS")
    return max(1, int(env)) if env else 1


def _out(text):
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args):
    if args.exact:
        tol = ConstraintTolerance.exact()
    else:
        tol = ConstraintTolerance(c1_abs=args.tol_c1_abs, c1_rel=args.tol_c1_rel,
                                  c2_abs=args.tol_c2_abs)
    items = load_polar_inputs(args.input)
    log.info("validating %d image(s)", len(items))
    report = dataset_report([img for _, img in items], tol=tol, threads=_threads(args))
    _out(report.to_json() if args.json else report.to_text())
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def cmd_project(args):
    items = load_polar_inputs(args.input)
    out = Path(args.output)
    single = len(items) == 1 and out.suffix == ".pmir"
    if not single:
        out.mkdir(parents=True, exist_ok=True)
    for name, img in items:
        fixed = project_to_feasible(img, orthogonal=args.orthogonal)
        pario.write_pmir(fixed, out if single else out / f"{name}.pmir", dtype="f64")
    log.info("projected %d image(s) to %s", len(items), out)
    return EXIT_OK


def _synth_spec(args):
    values = {}
    count = 1
    if args.spec:
        spec, count = load_synth_spec(args.spec)
    else:
        spec = SynthSpec()
    for key in ("height", "width", "dop_range", "intensity_range", "aolp_range", "corruption"):
        v = getattr(args, key)
        if v is not None:
            values[key] = str(v)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    if args.count is not None:
        count = args.count
    if count < 1:
        raise UsageError("count must be >= 1")
    return spec_from_mapping(values, base=spec), count


def cmd_synth(args):
    spec, count = _synth_spec(args)
    out = Path(args.output)
    if count == 1 and out.suffix == ".pmir":
        pario.write_pmir(synth_image(spec, 0), out, dtype=args.dtype)
    else:
        out.mkdir(parents=True, exist_ok=True)
        for k in range(count):
            pario.write_pmir(synth_image(spec, k), out / f"img_{k:05d}.pmir", dtype=args.dtype)
    log.info("wrote %d synthetic image(s) (%s) to %s", count, spec.corruption, out)
    return EXIT_OK


def cmd_train_toy(args):
    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = TrainConfig(**{**cfg.__dict__, "seed": args.seed})
    polar = [img for _, img in load_polar_inputs(args.polar)]
    rgb = [img for _, img in load_rgb_dir(args.rgb)]
    data_x = tile_patches(polar, cfg.patch)
    data_y = tile_patches(rgb, cfg.patch)
    log.info("training on %d polar and %d RGB patches", len(data_x), len(data_y))

    every = max(1, args.progress_every)

    def progress(rec):
        if rec.step % every == 0:
            log.info("step %d l_final=%.4g l_c1=%.4g l_c2=%.4g c2_frac=%.3f",
                     rec.step, rec.l_final, rec.l_c1, rec.l_c2, rec.c2_frac)

    try:
        result = train(cfg, data_x, data_y, progress=progress)
    except NonFiniteLoss as exc:
        log.error("%s; writing last good checkpoint", exc)
        pario.write_checkpoint(exc.checkpoint, args.out)
        if args.log:
            exc.log.write_csv(args.log)
        return EXIT_DIVERGED
    pario.write_checkpoint(result.state(), args.out)
    if args.log:
        result.log.write_csv(args.log)
    return EXIT_OK


def cmd_generate(args):
    state = pario.read_checkpoint(args.ckpt)
    m_yx = models_from_state(state)[1]
    if m_yx is None:
        raise pario.FormatError(f"{args.ckpt} has no m_yx generator")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    items = load_rgb_dir(args.rgb)
    for name, rgb in items:
        pario.write_pmir(generate_polar(m_yx, rgb), out / f"{name}.pmir", dtype="f64")
    log.info("generated %d polarimetric image(s) in %s", len(items), out)
    return EXIT_OK


def _feature_set(path, seed):
    path = Path(path)
    if path.is_file() and pario.is_pmir(path):
        arr = pario.read_pmir(path)
        if arr.shape[2] == 1:
            return arr[:, :, 0]
    imgs = [img for _, img in load_polar_inputs(path)]
    return dataset_features(imgs, seed)


def cmd_fd(args):
    fa = _feature_set(args.set_a, args.feature_seed)
    fb = _feature_set(args.set_b, args.feature_seed)
    for feats, dest in ((fa, args.save_a), (fb, args.save_b)):
        if dest:
            pario.write_pmir(feats[:, :, None], dest)
    _out(f"{frechet_distance(fit_stats(fa), fit_stats(fb)):.10g}")
    return EXIT_OK


def cmd_er(args):
    _out(f"{error_rate(args.ap_rgb, args.ap_polar):.4f}")
    return EXIT_OK


def cmd_convert(args):
    img = pario.read_quad_png(args.input)
    pario.write_pmir(img, args.output, dtype=args.dtype)
    return EXIT_OK


# ---------------------------------------------------------------------------


def _global_flags(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="override the random seed")
    p.add_argument("--threads", type=int, default=d,
                   help="worker threads for image batches (env POLARADMIT_THREADS)")
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="no progress output")


def build_parser():
    parser = argparse.ArgumentParser(prog="polaradmit", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        p.set_defaults(func=fn)
        return p

    p = add("validate", cmd_validate, "report C1/C2/C3 violations")
    p.add_argument("--input", required=True, help="PMIR file, quad-PNG stem, directory or manifest")
    p.add_argument("--tol-c1-abs", type=float, default=2.0)
    p.add_argument("--tol-c1-rel", type=float, default=1e-6)
    p.add_argument("--tol-c2-abs", type=float, default=0.0)
    p.add_argument("--exact", action="store_true", help="exact tolerances (floating-point slack only)")
    p.add_argument("--json", action="store_true")

    p = add("project", cmd_project, "repair images onto the feasible set")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="output .pmir file (single input) or directory")
    p.add_argument("--orthogonal", action="store_true", help="orthogonal calibration projection")

    p = add("synth", cmd_synth, "write synthetic polarimetric images")
    p.add_argument("--spec", help="key=value synth configuration file")
    p.add_argument("--output", required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--dop-range", dest="dop_range")
    p.add_argument("--intensity-range", dest="intensity_range")
    p.add_argument("--aolp-range", dest="aolp_range")
    p.add_argument("--corruption", help="none | c1_noise(sigma) | c2_inflate(factor) | negative_s0(fraction)")
    p.add_argument("--dtype", choices=tuple(pario.DTYPE_CODES), default="f64")

    p = add("train-toy", cmd_train_toy, "train the toy constrained CycleGAN")
    p.add_argument("--polar", required=True)
    p.add_argument("--rgb", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="CSV training log path")
    p.add_argument("--progress-every", type=int, default=50)

    p = add("generate", cmd_generate, "translate RGB images to polarimetric images")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--rgb", required=True)
    p.add_argument("--out", required=True)

    p = add("fd", cmd_fd, "Fréchet distance between two image or feature sets")
    p.add_argument("--set-a", required=True)
    p.add_argument("--set-b", required=True)
    p.add_argument("--feature-seed", type=int, default=0)
    p.add_argument("--save-a", help="write set A features as a PMIR matrix")
    p.add_argument("--save-b", help="write set B features as a PMIR matrix")

    p = add("er", cmd_er, "error rate evolution from two AP values")
    p.add_argument("--ap-rgb", type=float, required=True)
    p.add_argument("--ap-polar", type=float, required=True)

    p = add("convert", cmd_convert, "quad-PNG to PMIR")
    p.add_argument("--input", required=True, help="quad-PNG stem")
    p.add_argument("--output", required=True)
    p.add_argument("--dtype", choices=tuple(pario.DTYPE_CODES), default="f64")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except DegenerateBaseline as exc:
        log.error("DegenerateBaseline: %s", exc)
        return EXIT_USAGE
    except (OSError, PolarAdmitError, UsageError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
