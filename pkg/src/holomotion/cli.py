"""Command-line front end.

    holomotion --spec family.yaml --out results --cmd sweep-L --seed 7

Exit status: 0 success, 1 validation failure, 2 numerical-budget failure.
Every artifact starts with '#' header lines (tool version, spec hash,
seed, command); files are written to a temporary name and renamed, and a
failed run removes the artifacts it already wrote.
"""
import argparse
import csv
import io
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .branches import (BranchError, TubeSpec, inverse_branch_iterate, kingman_estimate,
                       sample_backward_orbit)
from .cycles import CycleError, cycle_columns, cycles_to_rows, find_periodic
from .family import FamilySpecError, load_family, validate_family
from .measures import MeasureError, depth_for_budget, pullback_measure
from .motion import (MotionError, build_web, equicontinuity, graph_intersections,
                     grand_orbit_proximity, misiurewicz_scan, motion_columns, pushforward_check,
                     web_rows)
from .solvers import SolverError
from .stability import StabilityError, classify_report, grid_columns, grid_rows, harmonicity_grid

COMMANDS = ("validate", "sweep-L", "cycles", "web", "branches", "all")
JOBS = {"sweep-L": 1, "cycles": 2, "web": 3, "branches": 4}
NUMERICAL = (MeasureError, StabilityError, MotionError, BranchError, SolverError, CycleError,
             np.linalg.LinAlgError, FloatingPointError)


class ValidationFailure(RuntimeError):
    pass


@dataclass
class RunConfig:
    spec_path: str
    command: str
    out: str
    seed: int = 0
    mesh: int = None
    depth: int = None
    period: int = 3
    budget: int = None
    tolerances: dict = field(default_factory=dict)

    def job_seed(self, job):
        """Per-job seed from the master seed; independent of execution order."""
        ss = np.random.SeedSequence([self.seed, JOBS.get(job, 0)])
        return int(ss.generate_state(1, dtype=np.uint32)[0])


class Writer:
    """Atomic artifact writer that remembers what it produced."""

    def __init__(self, out, header):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.header = header
        self.written = []

    def _put(self, name, data, binary=False):
        path = self.out / name
        tmp = self.out / f".{name}.tmp"
        with open(tmp, "wb" if binary else "w", newline=None if binary else "") as fh:
            fh.write(data)
        os.replace(tmp, path)
        self.written.append(path)
        return path

    def csv(self, name, columns, rows, extra=None):
        buf = io.StringIO()
        for k, v in list(self.header.items()) + list((extra or {}).items()):
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
        return self._put(name, buf.getvalue())

    def text(self, name, blocks):
        """Key-value report: one '[section]' block per dict."""
        buf = io.StringIO()
        for k, v in self.header.items():
            buf.write(f"# {k}: {v}\n")
        for title, d in blocks:
            buf.write(f"[{title}]\n")
            for k, v in d.items():
                buf.write(f"{k}: {_fmt(v)}\n")
            buf.write("\n")
        return self._put(name, buf.getvalue())

    def png(self, name, img):
        buf = io.BytesIO()
        Image.fromarray(img, mode="L").save(buf, format="PNG")
        return self._put(name, buf.getvalue(), binary=True)

    def cleanup(self):
        for p in self.written:
            try:
                p.unlink()
            except FileNotFoundError:
                pass
        self.written = []


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in v)
    if isinstance(v, complex):
        return f"{v.real!r}{v.imag:+}j"
    return str(v)


# ---------------------------------------------------------------- rendering


def read_grid_csv(path):
    meta = {}
    rows = []
    with open(path) as fh:
        lines = fh.readlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            k, _, v = line[1:].partition(":")
            meta[k.strip()] = v.strip()
        elif line.strip():
            body.append(line)
    if len(body) < 2:
        raise ValueError(f"{path}: grid CSV has no data rows")
    rd = list(csv.reader(body))
    head, rows = rd[0], rd[1:]
    if "stencil_max" not in head or "lam0_re" not in head:
        raise ValueError(f"{path}: not a grid CSV (missing columns)")
    try:
        cols = {h: np.array([r[i] for r in rows]) for i, h in enumerate(head)}
        re = cols["lam0_re"].astype(float)
        im = cols["lam0_im"].astype(float)
        s = cols["stencil_max"].astype(float)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed grid CSV ({exc})") from None
    return re, im, s, meta


def render_grid(re, im, s, theta=None):
    """Grayscale stencil-magnitude image in row-major mesh order.

    Linear scale clamped at the 99th percentile; with a known theta the
    clamp is at least 10 theta, so a grid of pure noise stays dark.
    """
    if len(s) == 0:
        raise ValueError("empty grid")
    xs = np.unique(np.round(re, 12))
    ys = np.unique(np.round(im, 12))
    img = np.zeros((len(ys), len(xs)))
    ix = np.searchsorted(xs, np.round(re, 12))
    iy = np.searchsorted(ys, np.round(im, 12))
    v = np.where(np.isfinite(s), s, 0.0)
    np.maximum.at(img, (iy, ix), v)
    top = float(np.percentile(v, 99))
    if theta is not None and np.isfinite(theta):
        top = max(top, 10 * theta)
    if top <= 0:
        top = 1.0
    return (np.clip(img / top, 0, 1) * 255).round().astype(np.uint8)


def render_grid_file(csv_path, png_path=None):
    re, im, s, meta = read_grid_csv(csv_path)
    theta = float(meta["theta"]) if "theta" in meta else None
    img = render_grid(re, im, s, theta)
    if png_path is not None:
        Image.fromarray(img, mode="L").save(png_path)
    return img


# ---------------------------------------------------------------- commands


def cmd_validate(spec, cfg, w):
    rep = validate_family(spec, seed=cfg.seed)
    w.text("validate.txt", [("validate", rep.summary())])
    if not rep.ok:
        raise ValidationFailure("; ".join(rep.messages) or "family failed validation")
    return {"valid": True}


def _depth(spec, cfg, default):
    if cfg.depth is not None:
        return int(cfg.depth)
    if cfg.budget is not None:
        return depth_for_budget(spec.k, spec.d, cfg.budget)
    return min(default, depth_for_budget(spec.k, spec.d))


def cmd_sweep(spec, cfg, w):
    mesh = spec.domain.mesh_U(cfg.mesh)
    grid = harmonicity_grid(spec, mesh, depth=_depth(spec, cfg, 12), rng_seed=cfg.job_seed("sweep-L"))
    rep = classify_report(grid)
    extra = {"theta": repr(grid.theta), "noise_floor": repr(grid.noise_floor), "step": repr(grid.h)}
    path = w.csv("grid.csv", grid_columns(spec.m, grid.stencil.shape[1]), grid_rows(grid), extra)
    re, im, s, _ = read_grid_csv(path)
    w.png("grid.png", render_grid(re, im, s, grid.theta))
    out = {"theta": grid.theta, "nodes": len(mesh)}
    out.update(rep.summary())
    out["lower_bound_L"] = grid.meta["lower_bound_L"]
    return out


def _base_cycles(spec, cfg):
    lam0 = np.array(spec.domain.center, dtype=complex)
    return lam0, find_periodic(spec, lam0, cfg.period, rng_seed=cfg.job_seed("cycles"))


def cmd_cycles(spec, cfg, w):
    lam0, cycles = _base_cycles(spec, cfg)
    w.csv("cycles.csv", cycle_columns(spec.k, spec.m), cycles_to_rows(cycles))
    mesh = spec.domain.mesh_U(cfg.mesh)
    web = build_web(spec, mesh, cfg.period, rng_seed=cfg.job_seed("cycles"), max_hole_fraction=1.0)
    w.csv("tracks.csv", motion_columns(spec.k, spec.m), web_rows(web))
    rep = sum(c.repelling and bool(c.in_julia) for c in cycles)
    return {"cycles": len(cycles), "repelling_j_cycles": rep, "tracked_atoms": len(web),
            "hole_fraction": web.report["hole_fraction"]}


def cmd_web(spec, cfg, w):
    mesh = spec.domain.mesh_U(cfg.mesh)
    seed = cfg.job_seed("web")
    web = build_web(spec, mesh, cfg.period, rng_seed=seed)
    w.csv("web.csv", motion_columns(spec.k, spec.m), web_rows(web))
    b = mesh.base
    ref = pullback_measure(spec, mesh.nodes[b], depth=_depth(spec, cfg, 10), rng_seed=seed)
    push = pushforward_check(web, b, ref, seed=seed)
    inter, gmin = graph_intersections(spec, web)
    probe = grand_orbit_proximity(web, spec, 3, 1, seed=seed)
    blocks = [("web", dict(web.report)), ("pushforward", {"node": b, "distance": push}),
              ("intersections", {"count": len(inter), "min_separation": gmin,
                                 "equicontinuity": equicontinuity(web)})]
    for i, it in enumerate(inter):
        blocks.append((f"intersection.{i}", {"pair": it.pair, "lam": it.lam, "separation": it.separation}))
    blocks.append(("grand_orbit", {"n_f": probe.n_f, "n_b": probe.n_b,
                                   "min_distance": float(probe.distances.min()),
                                   "suspects": len(probe.suspects)}))
    if spec.m == 1:
        cand = misiurewicz_scan(spec, mesh, web, n_f=3)
        blocks.append(("misiurewicz", {"candidates": len(cand)}))
        for i, c in enumerate(cand):
            blocks.append((f"misiurewicz.{i}", {"lam": c.lam, "residual": c.residual, "atom": c.atom}))
    w.text("web_report.txt", blocks)
    return {"atoms": len(web), "pushforward": push, "intersections": len(inter), "min_separation": gmin}


def cmd_branches(spec, cfg, w):
    lam0 = np.array(spec.domain.center, dtype=complex)
    seed = cfg.job_seed("branches")
    cyc = [c for c in find_periodic(spec, lam0, 1, rng_seed=seed) if c.repelling and c.in_julia]
    if not cyc:
        raise BranchError("no repelling fixed point to start backward orbits")
    base = cyc[0].points[0]
    orbit = sample_backward_orbit(spec, base, 50, seed, lam=lam0)
    rep = inverse_branch_iterate(spec, orbit, TubeSpec(0.05), 20, seed=seed)
    kg = kingman_estimate(spec, base, p=1, n_orbits=16, depth=50, lam=lam0, seed=seed)
    w.csv("branches.csv", ["n", "u_hat", "image_radius", "lipschitz"], rep.rows())
    blocks = [("contraction", rep.summary()),
              ("kingman", {"estimate": kg.estimate, "ci_low": kg.ci[0], "ci_high": kg.ci[1],
                           "bound": kg.bound, "violation": kg.violation})]
    w.text("branches_report.txt", blocks)
    return {"A": rep.A, "verified": rep.verified, "kingman": kg.estimate}


RUNNERS = {"validate": cmd_validate, "sweep-L": cmd_sweep, "cycles": cmd_cycles, "web": cmd_web,
           "branches": cmd_branches}


def dispatch(cfg):
    """Run one command; returns (exit status, summary dict)."""
    try:
        spec = load_family(cfg.spec_path)
    except (FamilySpecError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1, {"error": str(exc)}
    header = {"tool": f"holomotion {__version__}", "spec_hash": spec.spec_hash(), "seed": cfg.seed,
              "command": cfg.command}
    w = Writer(cfg.out, header)
    steps = ["validate", "sweep-L", "cycles", "web", "branches"] if cfg.command == "all" else [cfg.command]
    summary = {}
    try:
        if cfg.command != "validate":
            rep = validate_family(spec, seed=cfg.seed)
            if not rep.ok:
                raise ValidationFailure("; ".join(rep.messages) or "family failed validation")
        for s in steps:
            for k, v in RUNNERS[s](spec, cfg, w).items():
                summary[f"{s}.{k}"] = v
    except ValidationFailure as exc:
        w.cleanup()
        print(f"validation failed: {exc}", file=sys.stderr)
        return 1, {"error": str(exc)}
    except NUMERICAL as exc:
        w.cleanup()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2, {"error": str(exc)}
    except BaseException:
        w.cleanup()
        raise
    w.text("summary.txt", [("summary", summary)])
    return 0, summary


def build_parser():
    p = argparse.ArgumentParser(prog="holomotion", description=__doc__.splitlines()[0])
    p.add_argument("--spec", required=True, help="family file (YAML)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--cmd", required=True, choices=COMMANDS)
    p.add_argument("--seed", type=int, default=0, help="master seed (unsigned 64-bit)")
    p.add_argument("--mesh", type=int, default=None, help="mesh points per axis")
    p.add_argument("--depth", type=int, default=None, help="pullback depth")
    p.add_argument("--period", type=int, default=3, help="cycle period / web level")
    p.add_argument("--budget", type=int, default=None, help="atom budget for pullback trees")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if not 0 <= args.seed < 2 ** 64:
        print("error: seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 1
    cfg = RunConfig(args.spec, args.cmd, args.out, args.seed, args.mesh, args.depth, args.period, args.budget)
    status, summary = dispatch(cfg)
    for k, v in summary.items():
        print(f"{k}: {_fmt(v)}")
    return status


if __name__ == "__main__":
    sys.exit(main())
