"""Command-line entry point (``pcjag``)."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import aifm, plotting
from .codec import decode_joint, encode_joint, rd_loss, read_bitstream, write_bitstream
from .errors import MetricError, PcjagError
from .metrics import (
    RateDistortionPoint,
    bdbr_detail,
    correlation_analysis,
    d1_psnr,
    d2_psnr,
    estimate_normals,
    y_psnr,
)
from .pcio import load_cloud, save_cloud
from .recolor import recolor
from .workflows import RunManifest, run_rd_sweep, run_recolor_bench, sweep_csv, write_json

log = logging.getLogger("pcjag")


def _manifest_path(out):
    return f"{out}.manifest.json"


def _plot_path(out):
    return os.path.splitext(out)[0] + ".png"


def _int_list(s):
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")


def cmd_encode(a, m):
    with m.stage("read"):
        cloud = load_cloud(a.inp, a.bit_depth)
    with m.stage("encode"):
        stream = encode_joint(cloud, a.qg, a.qa)
    write_bitstream(stream, a.out)
    m.params.update(q_geom=a.qg, q_attr=a.qa, bit_depth=a.bit_depth, points=len(cloud),
                    **stream.bpp(len(cloud)))
    return a.out


def cmd_decode(a, m):
    with m.stage("decode"):
        cloud = decode_joint(read_bitstream(a.inp))
    save_cloud(cloud, a.out)
    m.params.update(points=len(cloud))
    return a.out


def cmd_recolor(a, m):
    with m.stage("read"):
        src = load_cloud(a.source, a.bit_depth)
        geom = load_cloud(a.geometry, a.bit_depth)
    with m.stage("recolor"):
        res = recolor(src, geom.points, a.mode)
    save_cloud(res.recolored, a.out)
    m.params.update(mode=a.mode, bit_depth=a.bit_depth)
    if a.report:
        write_json(a.report, {
            "mode": a.mode,
            "points": len(res.recolored),
            "overlap_count": res.overlap_count,
            "nna_count": res.nna_count,
            "elapsed_overlap": res.elapsed_overlap,
            "elapsed_nna": res.elapsed_nna,
            "elapsed": res.elapsed,
        })
        m.outputs["report"] = a.report
    return a.out


def cmd_metrics(a, m):
    ref = load_cloud(a.ref, a.bit_depth)
    test = load_cloud(a.test, a.bit_depth)
    want = {k for k in ("d1", "d2", "y") if getattr(a, k)} or {"d1", "d2", "y"}
    doc = {}
    with m.stage("metrics"):
        if "d1" in want:
            doc["d1_psnr"] = d1_psnr(ref, test, a.peak)
        if "d2" in want:
            doc["d2_psnr"] = d2_psnr(ref, test, estimate_normals(ref, a.radius), a.peak)
        if "y" in want:
            doc["y_psnr"] = y_psnr(ref, test)
    doc["lossless"] = sorted(k for k, v in doc.items() if v == float("inf"))
    doc["peak"] = a.peak if a.peak is not None else ref.peak
    write_json(a.json, doc)
    return a.json


def _read_curve(path):
    pts = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                pts.append(RateDistortionPoint(float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if pts:
                    raise MetricError(f"{path}: bad row {row!r}")
                # header line
    return pts


def cmd_bdrate(a, m):
    ca, cb = _read_curve(a.anchor), _read_curve(a.test)
    res = bdbr_detail(ca, cb)
    print(f"BD-rate: {res.percent:+.4f}% ({res.interpolation})")
    out = a.json or os.path.splitext(a.test)[0] + ".bdrate.json"
    if out:
        write_json(out, {"bdbr_percent": res.percent, "interpolation": res.interpolation,
                         "fallback": res.interpolation != "cubic",
                         "anchor": [list(p) for p in ca], "test": [list(p) for p in cb]})
    if a.plot:
        png = _plot_path(out or a.test)
        plotting.bd_curves(ca, cb, res.percent, png)
        m.outputs["figure"] = png
    return out


def cmd_correlate(a, m):
    cloud = load_cloud(a.inp, a.bit_depth)
    radii = list(np.arange(a.rmin, a.rmax + a.rstep / 2, a.rstep))
    with m.stage("correlate"):
        rep = correlation_analysis(cloud, a.anchors, radii, a.k, a.seed, a.selection)
    write_json(a.json, rep.as_dict())
    m.params.update(seed=a.seed, anchors=a.anchors, k=a.k, selection=a.selection)
    if a.plot:
        png = _plot_path(a.json)
        plotting.correlation(rep, png)
        m.outputs["figure"] = png
    return a.json


def cmd_sweep(a, m):
    cloud = load_cloud(a.inp, a.bit_depth)
    want = tuple(k for k in ("d1", "d2", "y") if getattr(a, k)) or ("d1", "d2", "y")
    rows = run_rd_sweep(cloud, a.qg, a.qa, want, manifest=m, normal_radius=a.radius)
    os.makedirs(a.out_dir, exist_ok=True)
    out = os.path.join(a.out_dir, "rd.csv")
    with open(out, "w", newline="") as fh:
        fh.write(sweep_csv(rows))
    m.params.update(qg=a.qg, qa=a.qa, bit_depth=a.bit_depth, metrics=list(want))
    if a.plot:
        png = os.path.join(a.out_dir, "rd.png")
        plotting.rd_curves(rows, png)
        m.outputs["figure"] = png
    return out


def cmd_recolor_bench(a, m):
    cloud = load_cloud(a.inp, a.bit_depth)
    with m.stage("bench"):
        rep = run_recolor_bench(cloud, a.displace, a.drop, a.trials, a.seed)
    write_json(a.json, rep)
    m.params.update(seed=a.seed, trials=a.trials, displace=a.displace, drop=a.drop)
    if a.plot:
        png = _plot_path(a.json)
        plotting.recolor_times(rep, png)
        m.outputs["figure"] = png
    return a.json


def cmd_loss(a, m):
    orig = load_cloud(a.orig, a.bit_depth)
    stream = read_bitstream(a.bin)
    dec = decode_joint(stream)
    rep = rd_loss(orig, stream, dec, lambdas=(a.lambda_g, a.lambda_a), omega=a.omega)
    write_json(a.json, rep.as_dict())
    return a.json


def cmd_fuse_demo(a, m):
    cloud = load_cloud(a.inp, a.bit_depth)
    if a.config:
        cfg = aifm.load_config(a.config)
    else:
        cfg = aifm.AifmConfig.random(a.seed, alpha=a.alpha, geom_channels=a.channels,
                                     prior_channels=a.channels, scales=a.scales)
    with m.stage("fuse"):
        results = aifm.fuse_multiscale(cloud, cfg, geom_seed=a.seed + 1)
    levels = []
    for i, r in enumerate(results):
        levels.append({
            "scale": i,
            "stride": r.fused.stride,
            "points": len(r.fused),
            "exchanged": r.exchanged,
            "kept": int(r.keep.sum()),
            "mean_score": float(r.scores.mean()) if len(r.scores) else 0.0,
        })
    write_json(a.json, {"alpha": cfg.alpha, "seed": a.seed, "levels": levels})
    m.params.update(seed=a.seed, alpha=cfg.alpha, channels=cfg.geom_channels, scales=cfg.scales)
    return a.json


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pcjag", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--bit-depth", type=int, default=10,
                        help="voxelization precision (default 10)")
        return sp

    sp = add("encode", cmd_encode, "encode a PLY into a two-stream bitstream")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--qg", type=int, required=True)
    sp.add_argument("--qa", type=int, required=True)

    sp = add("decode", cmd_decode, "decode a bitstream into a PLY")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out", required=True)

    sp = add("recolor", cmd_recolor, "transfer source colors onto another geometry")
    sp.add_argument("--source", required=True)
    sp.add_argument("--geometry", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", choices=("conventional", "optimized"), default="optimized")
    sp.add_argument("--report")

    sp = add("metrics", cmd_metrics, "D1/D2/Y PSNR between two clouds")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--d1", action="store_true")
    sp.add_argument("--d2", action="store_true")
    sp.add_argument("--y", action="store_true")
    sp.add_argument("--peak", type=float)
    sp.add_argument("--radius", type=float, default=30.0, help="normal estimation radius")
    sp.add_argument("--json", required=True)

    sp = add("bdrate", cmd_bdrate, "BD-rate between two bpp,quality CSV curves")
    sp.add_argument("--anchor", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--json")
    sp.add_argument("--plot", action="store_true")

    sp = add("correlate", cmd_correlate, "geometry/attribute correlation study")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--anchors", type=int, default=100)
    sp.add_argument("--rmin", type=float, default=10)
    sp.add_argument("--rmax", type=float, default=200)
    sp.add_argument("--rstep", type=float, default=10)
    sp.add_argument("--k", type=int, default=20)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--selection", choices=("random", "nearest"), default="random")
    sp.add_argument("--json", required=True)
    sp.add_argument("--plot", action="store_true")

    sp = add("sweep", cmd_sweep, "RD sweep over (qg, qa) pairs")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--qg", type=_int_list, required=True)
    sp.add_argument("--qa", type=_int_list, required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--d1", action="store_true")
    sp.add_argument("--d2", action="store_true")
    sp.add_argument("--y", action="store_true")
    sp.add_argument("--radius", type=float, default=30.0)
    sp.add_argument("--plot", action="store_true")

    sp = add("recolor-bench", cmd_recolor_bench, "time conventional vs optimized recolor")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--trials", type=int, default=1)
    sp.add_argument("--displace", type=float, default=0.05)
    sp.add_argument("--drop", type=float, default=0.0)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--json", required=True)
    sp.add_argument("--plot", action="store_true")

    sp = add("loss", cmd_loss, "joint RD loss of a bitstream")
    sp.add_argument("--orig", required=True)
    sp.add_argument("--bin", required=True)
    sp.add_argument("--lambda-g", type=float, required=True)
    sp.add_argument("--lambda-a", type=float, required=True)
    sp.add_argument("--omega", type=float, default=1.0)
    sp.add_argument("--json", required=True)

    sp = add("fuse-demo", cmd_fuse_demo, "run feature fusion with a seeded config")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--alpha", type=float, default=aifm.ALPHA)
    sp.add_argument("--channels", type=int, default=aifm.DEFAULT_CHANNELS)
    sp.add_argument("--scales", type=int, default=4)
    sp.add_argument("--config", help="aifm.json written by save_config")
    sp.add_argument("--json", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    man = RunManifest(args.command)
    man.inputs = {("in" if k == "inp" else k): getattr(args, k) for k in ("inp", "source", "geometry", "ref", "test",
                                                 "anchor", "orig", "bin")
                  if getattr(args, k, None)}
    try:
        with man.stage("total"):
            out = args.func(args, man)
    except PcjagError as exc:
        print(f"pcjag: contract violated [{exc.contract}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"pcjag: contract violated [io]: {exc}", file=sys.stderr)
        return 2
    if out:
        man.outputs["main"] = out
        man.write(_manifest_path(out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
