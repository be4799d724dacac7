"""Command-line front end.

Exit codes: 0 success, 2 configuration or input error, 3 numeric abort.
"""
from __future__ import annotations

import argparse
import contextlib
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import config as C
from . import grid as G
from . import network as N
from . import oracle as O
from . import training as T

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _load(args):
    cfg = C.load_config(args.config) if args.config else C.RunConfig()
    over = {}
    if getattr(args, "out", None):
        over["out"] = args.out
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "iterations", None) is not None:
        over["iterations"] = args.iterations
    if getattr(args, "deterministic", False):
        over["deterministic"] = True
    cfg = C.validate(replace(cfg, **over))
    os.makedirs(cfg.out, exist_ok=True)
    cfg.write(os.path.join(cfg.out, "config.txt"))
    return cfg


def _limits(cfg):
    if cfg.deterministic:
        from threadpoolctl import threadpool_limits
        # single-threaded BLAS makes every reduction order fixed
        return threadpool_limits(1)
    return contextlib.nullcontext()


def _raster_data(cfg):
    if not cfg.data_dir:
        raise C.ConfigError("raster problems need data_dir")
    try:
        return G.read_raster_data(cfg.data_dir)
    except (OSError, G.GridFormatError) as exc:
        raise C.ConfigError(f"cannot load raster data: {exc}") from None


def _progress(cfg):
    every = max(cfg.iterations // 20, 1)

    def log(it, row):
        if (it + 1) % every == 0:
            l1 = "" if np.isnan(row[6]) else f" l1={row[6]:.4g}"
            print(f"iter {it + 1}: total={row[1]:.6g}{l1}", file=sys.stderr, flush=True)
    return log


def solution_grid(params, problem, cfg):
    """u on a regular grid: space-time (rows = t) in 1D, u(T, .) in 2D."""
    nx, ny = cfg.grid_nx, cfg.grid_ny
    if problem.input_dim == 2:
        dom = problem.domain
        tmpl = G.RasterGrid(np.zeros((ny, nx)), dom.lo, 0.0, (dom.hi - dom.lo) / (nx - 1),
                            problem.T / (ny - 1))
        xy = tmpl.nodes()
        vals = N.predict(params, xy[:, ::-1]).reshape(ny, nx)
        return tmpl.like(vals)
    if problem.name == "raster":
        return G.eval_on_grid(params, problem.params["raster"].thickness_tT, problem.T)
    dom = problem.domain
    r = dom.radius
    tmpl = G.RasterGrid(np.zeros((ny, nx)), dom.center[0] - r, dom.center[1] - r,
                        2 * r / (nx - 1), 2 * r / (ny - 1))
    return G.eval_on_grid(params, tmpl, problem.T)


def cmd_train(args):
    cfg = _load(args)
    data = _raster_data(cfg) if cfg.problem == "raster" else None
    prob = C.build_problem(cfg, data)
    arch = C.architecture(cfg, prob)
    kw = dict(sizes=cfg.sizes(), lr=cfg.lr, profile=cfg.profile(), milestones=cfg.milestones,
              eval_points=cfg.eval_points, eval_every=cfg.eval_every,
              init_scheme=cfg.init_scheme, checkpoint_dir=cfg.out, log=_progress(cfg))
    with _limits(cfg):
        if cfg.problem == "raster" and cfg.stage1_iters > 0:
            rep = T.two_stage_train(prob, arch, cfg.weights(), cfg.stage1_iters, cfg.iterations,
                                    cfg.seed, stage1_tol=cfg.stage1_tol,
                                    stage1_lr=cfg.stage1_lr, **kw)
            N.save_params(rep.extra["stage1_params"], os.path.join(cfg.out, "stage1.ckpt"))
        else:
            rep = T.train(prob, arch, cfg.weights(), cfg.iterations, cfg.seed, **kw)
    rep.write_csv(os.path.join(cfg.out, "history.csv"))
    N.save_params(rep.params, os.path.join(cfg.out, "final.ckpt"))
    if cfg.save_grids:
        G.write_grid(solution_grid(rep.params, prob, cfg), os.path.join(cfg.out, "solution.grid"))
    msg = f"trained {cfg.problem}: {cfg.iterations} iterations in {rep.wall_time:.1f}s"
    if "final_l1" in rep.extra:
        msg += f", L1 = {rep.extra['final_l1']:.6g}"
    if cfg.problem == "raster":
        msg += f", L1 at T vs data = {T.raster_l1_at_T(rep.params, data):.6g}"
    print(msg)
    return EXIT_OK


def _sweep_builder(cfg, data):
    def build(mu, p):
        return C.build_problem(replace(cfg, mu=mu, p=p), data)
    return build


class _ExactAtT:
    def __init__(self, problem, seed, n=10_000):
        ev = T.eval_set(problem, seed, n)
        ev[:, 0] = problem.T
        self.points = ev
        self.exact = problem.exact(ev)

    def __call__(self, params):
        return float(np.mean(np.abs(N.predict(params, self.points) - self.exact)))


def cmd_sweep(args):
    cfg = _load(args)
    if cfg.problem not in ("raster", "sia-mms"):
        raise C.ConfigError("sweeps need an SIA problem (raster or sia-mms)")
    mus = cfg.mu_list or [cfg.mu if cfg.mu is not None else 5e-4]
    ps = cfg.p_list or [cfg.p]
    data = _raster_data(cfg) if cfg.problem == "raster" else None
    build = _sweep_builder(cfg, data)
    probe = build(mus[0], ps[0])
    score = T.GridTarget(data) if data is not None else _ExactAtT(probe, cfg.seed)
    conf = dict(arch=C.architecture(cfg, probe), weights=cfg.weights(),
                iterations=cfg.iterations, seed=cfg.seed, sizes=cfg.sizes(), lr=cfg.lr,
                milestones=cfg.milestones, profile=cfg.profile(), eval_every=cfg.eval_every,
                init_scheme=cfg.init_scheme, stage1_iters=cfg.stage1_iters, stage1_lr=cfg.stage1_lr,
                stage1_tol=cfg.stage1_tol, out=cfg.out)
    with _limits(cfg):
        rows = T.mu_sweep(build, mus, ps, score, conf, jobs=args.jobs)
    path = os.path.join(cfg.out, "sweep.csv")
    T.write_sweep_csv(rows, path)
    for r in rows:
        if r.status == "failed":
            print(f"warning: run mu={r.mu:g} p={r.p:g} failed: {r.error}", file=sys.stderr)
    best = [r for r in rows if r.best]
    if best:
        print(f"best: mu={best[0].mu:g} p={best[0].p:g} L1={best[0].l1_at_T:.6g}")
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_oracle(args):
    cfg = _load(args)
    if cfg.problem != "mms1d":
        raise C.ConfigError("the finite-difference oracle covers mms1d only")
    kw = {} if cfg.gamma is None else {"gamma": cfg.gamma}
    t0 = time.perf_counter()
    fd = O.solve_mms1d(cfg.nx, cfg.nt, **kw)
    path = os.path.join(cfg.out, "oracle.grid")
    G.write_grid(fd.to_raster(), path)
    l1 = O.grid_l1(fd, O.exact_on_fd(fd, **kw))
    print(f"wrote {path} ({fd.nt + 1}x{fd.nx}) in {time.perf_counter() - t0:.1f}s; "
          f"L1 vs exact = {l1:.6g}")
    return EXIT_OK


def cmd_eval(args):
    for path in (args.checkpoint, args.grid):
        if not os.path.exists(path):
            raise C.ConfigError(f"missing file: {path}")
    try:
        params = N.load_params(args.checkpoint)
        grid = G.read_grid(args.grid)
    except (ValueError, OSError) as exc:
        raise C.ConfigError(str(exc)) from None
    if params.spec.input_dim == 2:
        # 1D problems: the grid is space-time with rows along t
        xy = grid.nodes()
        pred = grid.like(N.predict(params, xy[:, ::-1]).reshape(grid.shape))
    else:
        pred = G.eval_on_grid(params, grid, args.t)
    mask = None
    if args.mask:
        mask = G.read_grid(args.mask).values != 0
    l1 = G.l1_vs(pred, grid, mask)
    print(f"L1 = {l1!r}")
    return EXIT_OK


def cmd_gen_synthetic(args):
    cfg = _load(args)
    data = G.synthetic_raster(cfg.mu_star, cfg.p, cfg.gamma, cfg.grid_nx, cfg.grid_ny,
                              cfg.eps_time)
    G.write_raster_data(data, cfg.out)
    print(f"wrote synthetic raster data to {cfg.out} (gamma = {data.meta['gamma']:.6g})")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="icepinn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, iterations=True):
        p.add_argument("--config", help="key = value run configuration")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int)
        p.add_argument("--deterministic", action="store_true",
                       help="single-threaded BLAS for bit-identical reruns")
        if iterations:
            p.add_argument("--iterations", type=int)

    p = sub.add_parser("train", help="train one PINN")
    common(p)
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("sweep", help="independent runs over mu_list x p_list")
    common(p)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("oracle", help="finite-difference reference for mms1d")
    common(p, iterations=False)
    p.set_defaults(func=cmd_oracle)
    p = sub.add_parser("eval", help="L1 of a checkpoint against a grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--t", type=float, default=1.0, help="time for 2D spatial grids")
    p.add_argument("--mask", help="grid whose nonzero cells are compared")
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("gen-synthetic", help="write a synthetic raster dataset")
    common(p, iterations=False)
    p.set_defaults(func=cmd_gen_synthetic)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except C.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except T.TrainingAborted as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        pts = getattr(exc, "points", None)
        if pts is not None and len(pts):
            print("offending points (first 10):", file=sys.stderr)
            for row in np.asarray(pts)[:10]:
                print("  " + " ".join(f"{v:.6g}" for v in row), file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
