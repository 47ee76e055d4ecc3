"""Command-line entry point: ``pcsnet <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Failures also print one JSON line ``{"error": code, "message": ...,
"exit_code": n}`` on stderr.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ._errors import DataError, NumericalError, PcsError
from .checks import run_suite
from .geometry import PointCloud, normalize_to_unit_sphere
from .io import read_cloud, read_mesh, sample_mesh_surface, write_cloud
from .metrics import evaluate
from .network import PcsNet, SaliencyNet, load_checkpoint
from .patching import Patch, extract_patches, make_partition
from .pipeline import SimplifyConfig, add_gaussian_noise, baseline_select, simplify_cloud
from .saliency import compute_saliency
from .trainer import TrainConfig, train_pcs, train_saliency_net, write_log_csv

MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except ValueError as exc:
        raise DataError("bad-json", f"{path}: {exc}") from None


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


# subcommands ---------------------------------------------------------------

def cmd_sample_mesh(args):
    mesh = read_mesh(args.input)
    write_cloud(sample_mesh_surface(mesh, args.count, args.seed), args.out)


def cmd_saliency(args):
    P = read_cloud(args.input).points
    # h is a unit-sphere length, so compute there and scale back
    Pn, _, radius = normalize_to_unit_sphere(P)
    s = compute_saliency(Pn, args.k, args.h, smooth=args.smooth) * radius
    write_cloud(PointCloud(P, s), args.out)


def cmd_patch(args):
    cloud = read_cloud(args.input)
    Pn, center, radius = normalize_to_unit_sphere(cloud.points)
    sal = None if cloud.saliency is None else cloud.saliency / radius
    if sal is None and (args.mode == "adaptive" or args.saliency):
        sal = compute_saliency(Pn, args.k, args.h)
    Tn = None
    if args.target is not None:
        T = read_cloud(args.target).points
        if T.shape != Pn.shape:
            raise DataError("length-mismatch", "--target must have the same number of points as --in")
        Tn = (T - center) / radius
    part = make_partition(Pn, args.patches, args.mode, args.seed, saliency=sal)
    patches = extract_patches(Pn, part, args.n, args.seed, saliency=sal, targets=Tn)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, patch in enumerate(patches):
        entry = {"seed_id": i, "seed_index": int(patch.seed_index),
                 "parent_indices": patch.parent_indices.tolist(),
                 "with_replacement": bool(patch.with_replacement),
                 "file": f"patch_{i:04d}.xyz"}
        write_cloud(PointCloud(patch.input_points, patch.input_saliency), out / entry["file"])
        if patch.target_points is not None:
            entry["target_file"] = f"target_{i:04d}.xyz"
            write_cloud(patch.target_points, out / entry["target_file"])
        entries.append(entry)
    _write_json(out / MANIFEST, {"mode": args.mode, "n": args.n, "seed": args.seed,
                                 "center": center.tolist(), "radius": radius, "patches": entries})


def _load_patches(directory):
    directory = Path(directory)
    manifest = _read_json(directory / MANIFEST)
    patches = []
    try:
        for e in manifest["patches"]:
            cloud = read_cloud(directory / e["file"])
            target = read_cloud(directory / e["target_file"]).points if "target_file" in e else None
            patches.append(Patch(np.asarray(e["parent_indices"]), e["seed_index"], cloud.points,
                                 cloud.saliency, target, e.get("with_replacement", False)))
    except (KeyError, TypeError) as exc:
        raise DataError("bad-manifest", f"manifest entry missing field {exc}") from None
    return patches


def _train_config(path):
    return TrainConfig.from_dict(_read_json(path)) if path else TrainConfig()


def _log_path(args):
    return args.log or str(Path(args.out).with_suffix(".csv"))


def cmd_train(args):
    cfg = _train_config(args.config)
    net, log = train_pcs(_load_patches(args.patch_dir), cfg, resume=args.resume,
                         checkpoint_path=args.out, checkpoint_every=args.checkpoint_every)
    write_log_csv(log, _log_path(args))


def cmd_train_saliency(args):
    cfg = _train_config(args.config)
    patches = _load_patches(args.data_dir)
    if any(p.input_saliency is None for p in patches):
        raise DataError("missing-saliency", "patch files need a saliency column (run `patch --saliency`)")
    net, log = train_saliency_net([p.input_points for p in patches],
                                  [p.input_saliency for p in patches], cfg,
                                  resume=args.resume, checkpoint_path=args.out,
                                  checkpoint_every=args.checkpoint_every)
    write_log_csv(log, _log_path(args))


def _load_net(path, cls):
    net, _ = load_checkpoint(path)
    if not isinstance(net, cls):
        raise DataError("bad-checkpoint", f"{path} holds a {net.kind!r} network")
    return net


def cmd_simplify(args):
    cloud = read_cloud(args.input)
    net = _load_net(args.ckpt, PcsNet)
    sal_net = _load_net(args.saliency_ckpt, SaliencyNet) if args.saliency_ckpt else None
    cfg = SimplifyConfig(num_patches=args.patches, patch_size=args.n, t=args.t)
    out = simplify_cloud(cloud.points, net, args.mode, args.target, cfg, args.seed,
                         saliency=cloud.saliency, saliency_net=sal_net)
    write_cloud(out, args.out)


def cmd_baseline(args):
    P = read_cloud(args.input).points
    write_cloud(baseline_select(P, args.target, args.method, args.seed), args.out)


def cmd_noise(args):
    P = read_cloud(args.input).points
    write_cloud(add_gaussian_noise(P, args.amplitude_pct, args.seed), args.out)


def cmd_metrics(args):
    points = read_cloud(args.points).points
    gt_mesh = read_mesh(args.gt_mesh) if args.gt_mesh else None
    gt_points = read_cloud(args.gt_cloud).points if args.gt_cloud else None
    recon = read_mesh(args.recon_mesh) if args.recon_mesh else None
    report = evaluate(points, gt_mesh=gt_mesh, gt_points=gt_points, recon_mesh=recon,
                      w=args.w, rng=args.seed)
    if args.out:
        Path(args.out).write_text(report.to_json(indent=2) + "\n")
    print(report.to_table(Path(args.points).stem))


def cmd_gradcheck(args):
    results = run_suite(full=args.full, tol=args.tol, seed=args.seed)
    failed = []
    for name, report in results:
        print(f"{'PASS' if report.passed else 'FAIL'} {name}: max rel error {report.max_rel_error:.3e}")
        if not report.passed:
            failed.append(name)
    if failed:
        raise NumericalError("gradcheck-failed", f"{len(failed)} case(s) failed: {', '.join(failed)}")


# parser --------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="pcsnet", description="Learned point-cloud simplification.")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="cap BLAS/OpenMP threads (default: all cores; 1 gives bit-reproducible runs)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.set_defaults(func=fn)
        return sp

    def seed(sp):
        sp.add_argument("--seed", type=int, default=0, help="random seed (default 0)")

    def train_args(sp):
        sp.add_argument("--config", help="JSON file with TrainConfig fields (default: built-in defaults)")
        sp.add_argument("--out", required=True, help="checkpoint path to write")
        sp.add_argument("--log", help="CSV loss log path (default: checkpoint path with .csv)")
        sp.add_argument("--resume", help="checkpoint to resume from (same config required)")
        sp.add_argument("--checkpoint-every", type=_positive_int, default=None,
                        help="also checkpoint every N epochs")

    sp = cmd("sample-mesh", cmd_sample_mesh, "Sample points uniformly by area from a mesh surface.")
    sp.add_argument("--in", dest="input", required=True, help="mesh file (.obj or .ply)")
    sp.add_argument("--count", type=_positive_int, required=True, help="number of samples")
    sp.add_argument("--out", required=True, help="output cloud (.xyz or .ply)")
    seed(sp)

    sp = cmd("saliency", cmd_saliency, "Write a cloud with a per-point saliency column.")
    sp.add_argument("--in", dest="input", required=True, help="input cloud")
    sp.add_argument("--k", type=_positive_int, default=20, help="neighborhood size (default 20)")
    sp.add_argument("--h", type=float, default=0.01, help="smoothing bandwidth on the unit sphere (default 0.01)")
    sp.add_argument("--smooth", action=argparse.BooleanOptionalAction, default=True,
                    help="Gaussian-smooth the raw saliency (default on)")
    sp.add_argument("--out", required=True, help="output cloud with 4th saliency column")

    sp = cmd("patch", cmd_patch, "Partition a cloud into fixed-size training patches.")
    sp.add_argument("--in", dest="input", required=True, help="input cloud (saliency column used if present)")
    sp.add_argument("--patches", type=_positive_int, default=120, help="number of patches (default 120)")
    sp.add_argument("--mode", choices=("uniform", "adaptive"), default="uniform", help="seeding mode")
    sp.add_argument("--n", type=_positive_int, default=1024, help="points per patch (default 1024)")
    sp.add_argument("--target", help="clean cloud matching --in row for row, stored as loss targets")
    sp.add_argument("--saliency", action="store_true", help="compute saliency when the input lacks it")
    sp.add_argument("--k", type=_positive_int, default=20, help="saliency neighborhood size (default 20)")
    sp.add_argument("--h", type=float, default=0.01, help="saliency smoothing bandwidth (default 0.01)")
    sp.add_argument("--out-dir", required=True, help="directory for patch files and manifest.json")
    seed(sp)

    sp = cmd("train", cmd_train, "Train the simplification network on a patch directory.")
    sp.add_argument("--patch-dir", required=True, help="directory written by `patch`")
    train_args(sp)

    sp = cmd("train-saliency", cmd_train_saliency, "Train the saliency network on patches with saliency.")
    sp.add_argument("--data-dir", required=True, help="directory written by `patch --saliency`")
    train_args(sp)

    sp = cmd("simplify", cmd_simplify, "Simplify a cloud with a trained network.")
    sp.add_argument("--in", dest="input", required=True, help="input cloud")
    sp.add_argument("--ckpt", required=True, help="simplification network checkpoint")
    sp.add_argument("--target", type=_positive_int, required=True, help="output point count")
    sp.add_argument("--mode", choices=("uniform", "adaptive", "baseline"), default="uniform",
                    help="uniform, saliency-adaptive, or baseline (no offset refinement)")
    sp.add_argument("--saliency-ckpt", help="saliency network for adaptive mode "
                    "(default: saliency column of --in, else geometric saliency)")
    sp.add_argument("--patches", type=_positive_int, default=None,
                    help="number of patches (default ceil(target / m))")
    sp.add_argument("--n", type=_positive_int, default=1024, help="points per patch input (default 1024)")
    sp.add_argument("--t", type=float, default=0.1, help="inference temperature (default 0.1)")
    sp.add_argument("--out", required=True, help="output cloud")
    seed(sp)

    sp = cmd("baseline", cmd_baseline, "Select a subset by farthest-point or random sampling.")
    sp.add_argument("--in", dest="input", required=True, help="input cloud")
    sp.add_argument("--method", choices=("fps", "random"), default="fps", help="selection method")
    sp.add_argument("--target", type=_positive_int, required=True, help="output point count")
    sp.add_argument("--out", required=True, help="output cloud")
    seed(sp)

    sp = cmd("noise", cmd_noise, "Add isotropic Gaussian noise.")
    sp.add_argument("--in", dest="input", required=True, help="input cloud")
    sp.add_argument("--amplitude-pct", type=float, required=True,
                    help="sigma as a percentage of the bounding-sphere radius")
    sp.add_argument("--out", required=True, help="output cloud")
    seed(sp)

    sp = cmd("metrics", cmd_metrics, "Compare a candidate cloud against a reference; prints a table.")
    ref = sp.add_mutually_exclusive_group(required=True)
    ref.add_argument("--gt-mesh", help="reference mesh (enables p2f)")
    ref.add_argument("--gt-cloud", help="reference cloud used verbatim as the dense sampling")
    sp.add_argument("--points", required=True, help="candidate cloud")
    sp.add_argument("--recon-mesh", help="mesh reconstructed from the candidate (enables triangle quality)")
    sp.add_argument("--w", type=_positive_int, default=10_000, help="surface samples per mesh (default 10000)")
    sp.add_argument("--out", help="write the report as JSON")
    seed(sp)

    sp = cmd("gradcheck", cmd_gradcheck, "Finite-difference gradient checks; exit 0 when all pass.")
    sp.add_argument("--full", action="store_true", help="include the full patch pipeline w.r.t. all parameters")
    sp.add_argument("--tol", type=float, default=1e-4, help="max relative error (default 1e-4)")
    seed(sp)
    return p


def _fail(code, message, exit_code):
    sys.stderr.write(json.dumps({"error": code, "message": message, "exit_code": exit_code}) + "\n")
    return exit_code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail("usage", str(exc), 1)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=args.threads):
            args.func(args)
    except PcsError as exc:
        return _fail(exc.code, str(exc), exc.exit_code)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail("io-error", f"{exc.strerror}: {exc.filename}", 2)
    except (FloatingPointError, OverflowError) as exc:
        return _fail("numerical", str(exc), 3)
    return 0
