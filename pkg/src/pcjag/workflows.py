"""Multi-stage runs used by the CLI: RD sweeps, recolor benchmarks and the
run manifest written beside every output."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

from . import __version__
from .codec import decode_joint, encode_joint, rd_loss
from .errors import PcjagError, PreconditionError
from .metrics import d1_psnr, d2_psnr, estimate_normals, y_psnr
from .pcio import ColoredPointCloud
from .recolor import recolor_bench

SWEEP_COLUMNS = ("qg", "qa", "bpp_geom", "bpp_attr", "bpp_total", "d1", "d2", "y_psnr")
TIMING_KEYS = frozenset({"timings", "conventional_s", "optimized_s", "speedup",
                         "reduction_pct", "elapsed_overlap", "elapsed_nna", "elapsed"})


@dataclass
class RunManifest:
    command: str
    inputs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    tool_version: str = __version__
    timings: dict = field(default_factory=dict)

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0

    def write(self, path):
        write_json(path, {
            "command": self.command,
            "inputs": self.inputs,
            "params": self.params,
            "outputs": self.outputs,
            "tool_version": self.tool_version,
            "timings": self.timings,
        })


def jsonable(x):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, dict):
        return {k: jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    return x


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def strip_timings(doc):
    """Drop wall-clock fields; what remains is deterministic under a fixed seed."""
    if isinstance(doc, dict):
        return {k: strip_timings(v) for k, v in doc.items() if k not in TIMING_KEYS}
    if isinstance(doc, list):
        return [strip_timings(v) for v in doc]
    return doc


def _fmt(v):
    if isinstance(v, float):
        return "lossless" if v == math.inf else repr(v)
    return "" if v is None else str(v)


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in SWEEP_COLUMNS])
    return buf.getvalue()


def run_rd_sweep(cloud: ColoredPointCloud, qg_list, qa_list, metrics=("d1", "d2", "y"),
                 lambdas=None, omega: float = 1.0, manifest: RunManifest | None = None,
                 normal_radius: float = 30.0) -> list:
    """Encode/decode/measure every (qg, qa) pair, qg-major, in the given order.

    With ``lambdas`` each row also carries the RD loss terms.
    """
    if not qg_list or not qa_list:
        raise PreconditionError("qg and qa lists must be nonempty")
    manifest = manifest or RunManifest("sweep")
    normals = None
    if "d2" in metrics:
        with manifest.stage("normals"):
            normals = estimate_normals(cloud, normal_radius)
    rows = []
    for qg in qg_list:
        for qa in qa_list:
            try:
                with manifest.stage("encode"):
                    stream = encode_joint(cloud, qg, qa)
                with manifest.stage("decode"):
                    dec = decode_joint(stream.to_bytes())
                row = {"qg": qg, "qa": qa, **stream.bpp(len(cloud))}
                with manifest.stage("metrics"):
                    row["d1"] = d1_psnr(cloud, dec) if "d1" in metrics else None
                    row["d2"] = d2_psnr(cloud, dec, normals) if "d2" in metrics else None
                    row["y_psnr"] = y_psnr(cloud, dec) if "y" in metrics else None
                if lambdas is not None:
                    rep = rd_loss(cloud, stream, dec, lambdas=lambdas, omega=omega)
                    row.update(l_total=rep.l_total, l_geom=rep.l_geom, l_attr=rep.l_attr)
            except PcjagError as exc:
                raise type(exc)(f"sweep pair (qg={qg}, qa={qa}): {exc}") from exc
            rows.append(row)
    return rows


def run_recolor_bench(cloud: ColoredPointCloud, displace_prob: float, drop_prob: float,
                      trials: int, seed: int) -> dict:
    return recolor_bench(cloud, displace_prob, drop_prob, trials, seed)
