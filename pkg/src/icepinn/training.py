"""Loss assembly, sampling, Adam, schedules, and the training drivers."""
from __future__ import annotations

import csv
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import jet as J
from . import network as N
from .parabolic import residual_parabolic
from .problems import BREAKPOINT_REJECT
from .sia import SIA_PAIRS, residual_sia

COMPONENTS = ("pde", "obstacle", "boundary", "initial")
CSV_COLUMNS = ("iter", "total") + COMPONENTS + ("l1",)

ADAM_B1, ADAM_B2, ADAM_EPS = 0.9, 0.999, 1e-8
MMS_MILESTONES = ((500, 0.5), (750, 0.5))
RASTER_MILESTONES = ((5000, 0.5), (10000, 0.5), (15000, 0.5))
BASE_LR = {"mms": 5e-4, "raster": 5e-3}


class TrainingAborted(RuntimeError):
    def __init__(self, message, report=None, points=None):
        super().__init__(message)
        self.report = report
        self.points = points


@dataclass
class LossWeights:
    alpha: float = 1.0          # PDE
    beta: float = 4000.0        # obstacle, SIA mode
    gamma_w: float = 1.0        # boundary
    delta: float = 1.0          # initial
    penalty_coeff: float = 1e-5  # obstacle, linear parabolic mode

    def __post_init__(self):
        vals = asdict(self).values()
        if any(not (np.isfinite(v) and v >= 0) for v in vals):
            raise ValueError("loss weights must be finite and nonnegative")
        if not any(v > 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")

    def obstacle_weight(self, mode):
        return self.penalty_coeff if mode == "linear_parabolic" else self.beta


@dataclass
class CollocationBatch:
    interior: np.ndarray          # (N_pde, 1 + n) space-time
    boundary: np.ndarray          # (N_b, 1 + n)
    boundary_values: np.ndarray
    initial: np.ndarray           # (N_i, 1 + n), column 0 == 0
    initial_values: np.ndarray

    @property
    def sizes(self):
        return len(self.interior), len(self.boundary), len(self.initial)


def _open_times(rng, n, T):
    t = rng.uniform(0.0, T, size=n)
    bad = t <= 0.0
    while np.any(bad):
        t[bad] = rng.uniform(0.0, T, size=bad.sum())
        bad = t <= 0.0
    return t


def _interior_space(problem, rng, n):
    xs = problem.domain.sample_interior(rng, n)
    if problem.breakpoint_distance is None:
        return xs
    bad = problem.breakpoint_distance(xs) <= BREAKPOINT_REJECT
    while np.any(bad):
        xs[bad] = problem.domain.sample_interior(rng, int(bad.sum()))
        bad = problem.breakpoint_distance(xs) <= BREAKPOINT_REJECT
    return xs


def sample_batch(problem, sizes, rng):
    """Fresh uniform collocation points; ``sizes`` = (N_pde, N_boundary, N_initial)."""
    n_pde, n_b, n_i = (int(s) for s in sizes)
    if min(n_pde, n_b, n_i) <= 0:
        raise ValueError("batch sizes must be positive")
    T = problem.T
    interior = np.column_stack([_open_times(rng, n_pde, T), _interior_space(problem, rng, n_pde)])
    boundary = np.column_stack([rng.uniform(0.0, T, size=n_b),
                                problem.domain.sample_boundary(rng, n_b)])
    xs0 = problem.domain.sample_interior(rng, n_i)
    initial = np.column_stack([np.zeros(n_i), xs0])
    return CollocationBatch(interior, boundary, problem.boundary_target(boundary),
                            initial, problem.initial_target(xs0))


# losses ---------------------------------------------------------------------------

@dataclass
class LossResult:
    total: J.Var
    components: dict      # weighted contributions, sum == total
    raw: dict             # unweighted means
    residual: J.Var

    def values(self):
        return {k: float(v) for k, v in self.components.items()}


def _mse_to(v, target):
    return J.mean(J.square(v - target))


def _assemble(tape, layers, params, batch, problem, weights, jet, residual):
    u = jet.u()
    psi = problem.obstacle(batch.interior)
    raw_obs = J.mean(J.square(J.max0(psi - u)))
    vb = N.value_graph(tape, params, batch.boundary, layers)
    vi = N.value_graph(tape, params, batch.initial, layers)
    raw = {"pde": J.mean(J.square(residual)),
           "obstacle": raw_obs,
           "boundary": _mse_to(vb, batch.boundary_values),
           "initial": _mse_to(vi, batch.initial_values)}
    w = {"pde": weights.alpha, "obstacle": weights.obstacle_weight(problem.mode),
         "boundary": weights.gamma_w, "initial": weights.delta}
    comp = {k: raw[k] * w[k] for k in COMPONENTS}
    total = comp["pde"] + comp["obstacle"] + comp["boundary"] + comp["initial"]
    return LossResult(total, {k: float(v.value) for k, v in comp.items()},
                      {k: float(v.value) for k, v in raw.items()}, residual), comp


def _check_finite(res, batch):
    r = res.residual.value
    if not np.all(np.isfinite(r)):
        raise TrainingAborted("non-finite PDE residual", points=batch.interior[~np.isfinite(r)])
    if not np.isfinite(res.total.value):
        raise TrainingAborted(f"non-finite loss: {res.components}", points=batch.interior)


def loss_linear_parabolic(params, batch, problem, weights, tape=None, layers=None):
    if problem.mode != "linear_parabolic":
        raise ValueError("loss_linear_parabolic needs a linear_parabolic problem")
    tape = tape or J.Tape()
    layers = layers if layers is not None else N.bind(tape, params)
    n = problem.domain.dim
    jet = N.jet_graph(tape, params, batch.interior, layers, pairs=[(i, i) for i in range(1, n + 1)])
    res = residual_parabolic(jet, problem.forcing_at(batch.interior))
    out, _ = _assemble(tape, layers, params, batch, problem, weights, jet, res)
    _check_finite(out, batch)
    return out


def loss_sia(params, batch, problem, weights, tape=None, layers=None):
    if problem.mode != "sia":
        raise ValueError("loss_sia needs an sia problem")
    tape = tape or J.Tape()
    layers = layers if layers is not None else N.bind(tape, params)
    st = batch.interior
    jet = N.jet_graph(tape, params, st, layers, pairs=SIA_PAIRS)
    bgrad, bhess = problem.bed_derivs(st[:, 1:])
    res = residual_sia(jet, problem.constants, bgrad, bhess, problem.forcing_at(st))
    out, _ = _assemble(tape, layers, params, batch, problem, weights, jet, res)
    _check_finite(out, batch)
    return out


def compute_loss(params, batch, problem, weights, tape=None, layers=None):
    fn = loss_sia if problem.mode == "sia" else loss_linear_parabolic
    return fn(params, batch, problem, weights, tape, layers)


def loss_and_grads(params, batch, problem, weights):
    tape = J.Tape()
    try:
        layers = N.bind(tape, params)
        res = compute_loss(params, batch, problem, weights, tape, layers)
        return res, tape.backward(res.total)
    finally:
        tape.release()


# optimizer ------------------------------------------------------------------------

def lr_schedule(profile, iteration, milestones=None):
    """Learning-rate multiplier at ``iteration``: product of milestones passed."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    if milestones is None:
        if profile == "mms":
            milestones = MMS_MILESTONES
        elif profile == "raster":
            milestones = RASTER_MILESTONES
        else:
            raise ValueError(f"unknown lr profile {profile!r}")
    mult = 1.0
    for it, m in milestones:
        if iteration >= it:
            mult *= m
    return mult


@dataclass
class OptimizerState:
    base_lr: float
    milestones: tuple = MMS_MILESTONES
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    def lr(self):
        return self.base_lr * lr_schedule(None, self.step, self.milestones)


def adam_step(state, params, grads):
    """One Adam update in place on ``params``; the schedule uses the pre-step count."""
    for slot, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingAborted(f"non-finite gradient in {slot}")
        if g.shape != params.get(slot).shape:
            raise ValueError(f"gradient shape {g.shape} for {slot} does not match parameter")
    lr = state.lr()
    state.step += 1
    t = state.step
    c1 = 1.0 - ADAM_B1 ** t
    c2 = 1.0 - ADAM_B2 ** t
    for slot, g in grads.items():
        m = state.m.get(slot)
        if m is None:
            m = state.m[slot] = np.zeros_like(g)
            state.v[slot] = np.zeros_like(g)
        v = state.v[slot]
        m *= ADAM_B1
        m += (1.0 - ADAM_B1) * g
        v *= ADAM_B2
        with np.errstate(over="ignore"):
            v += (1.0 - ADAM_B2) * g * g
        with np.errstate(over="ignore", invalid="ignore"):
            upd = params.get(slot) - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        if not np.all(np.isfinite(upd)):
            raise TrainingAborted(f"non-finite parameters in {slot} after update")
        params.set(slot, upd)
    return params, state


# reports ---------------------------------------------------------------------------

@dataclass
class TrainReport:
    history: np.ndarray            # (iters, 7): iter, total, pde, obstacle, boundary, initial, l1
    params: N.NetworkParams
    wall_time: float = 0.0
    config: dict = field(default_factory=dict)
    status: str = "ok"
    snapshots: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def column(self, name):
        return self.history[:, CSV_COLUMNS.index(name)]

    @property
    def final_l1(self):
        col = self.column("l1") if len(self.history) else np.array([])
        col = col[~np.isnan(col)]
        return float(col[-1]) if len(col) else float("nan")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in self.history:
                cells = [str(int(row[0]))] + [repr(float(v)) for v in row[1:6]]
                cells.append("" if np.isnan(row[6]) else repr(float(row[6])))
                w.writerow(cells)


def read_history_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {rows[0]}")
    return np.array([[float(c) if c else np.nan for c in r] for r in rows[1:]]).reshape(-1, 7)


def smoothed(values, window=100):
    values = np.asarray(values, dtype=np.float64)
    if len(values) < window:
        window = max(len(values), 1)
    return np.convolve(values, np.ones(window) / window, mode="valid")


# training loop -----------------------------------------------------------------------

def eval_set(problem, seed, n=10_000):
    """Fixed interior evaluation points; independent of the training stream."""
    rng = np.random.default_rng([seed, 2])
    xs = problem.domain.sample_interior(rng, n)
    return np.column_stack([rng.uniform(0.0, problem.T, size=n), xs])


def train(problem, arch, weights, iterations, seed, sizes=(1000, 1000, 1000),
          lr=None, profile="mms", milestones=None, init=None, eval_points=10_000,
          eval_every=1, checkpoint_dir=None, snapshot_at=(), log=None, init_scheme="uniform"):
    """Adam training of a PINN on ``problem``; returns a TrainReport.

    ``init`` may supply starting parameters (two-stage training).  On a
    non-finite loss or gradient the last finite parameters are written to
    ``checkpoint_dir`` (if given) and TrainingAborted is raised.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if arch.input_dim != problem.input_dim:
        raise ValueError(f"architecture input_dim {arch.input_dim} does not match problem "
                         f"dimension {problem.input_dim}")
    params = init.copy() if init is not None else N.init_params(arch, seed, init_scheme)
    if milestones is None:
        milestones = MMS_MILESTONES if profile == "mms" else RASTER_MILESTONES
    base_lr = BASE_LR[profile] if lr is None else lr
    state = OptimizerState(base_lr, tuple(milestones))
    rng = np.random.default_rng([seed, 1])
    ev = eval_set(problem, seed, eval_points) if problem.exact is not None else None
    ev_exact = problem.exact(ev) if ev is not None else None
    config = {"problem": problem.name, "arch": asdict(arch), "weights": asdict(weights),
              "iterations": iterations, "seed": seed, "sizes": tuple(sizes), "lr": base_lr,
              "profile": profile, "milestones": tuple(milestones), "eval_points": eval_points,
              "init": params.init_scale}
    history = np.full((iterations, len(CSV_COLUMNS)), np.nan)
    snapshots = {}
    start = time.perf_counter()
    last_good = params.copy()
    for it in range(iterations):
        batch = sample_batch(problem, sizes, rng)
        try:
            res, grads = loss_and_grads(params, batch, problem, weights)
            history[it, :6] = (it, float(res.total.value), *(res.components[k] for k in COMPONENTS))
            last_good = params.copy()
            adam_step(state, params, grads)
        except (TrainingAborted, J.NumericDomainError, FloatingPointError) as exc:
            report = TrainReport(history[:it], last_good, time.perf_counter() - start, config,
                                 status="aborted", snapshots=snapshots)
            if checkpoint_dir:
                os.makedirs(checkpoint_dir, exist_ok=True)
                N.save_params(last_good, os.path.join(checkpoint_dir, "last_good.ckpt"))
            pts = getattr(exc, "points", None)
            raise TrainingAborted(f"iteration {it}: {exc}", report, pts) from exc
        if ev is not None and ((it + 1) % eval_every == 0 or it == iterations - 1):
            # error of the parameters that produced this row's loss
            history[it, 6] = float(np.mean(np.abs(N.predict(last_good, ev) - ev_exact)))
        if it + 1 in snapshot_at:
            snapshots[it + 1] = params.copy()
        if log is not None:
            log(it, history[it])
    report = TrainReport(history, params, time.perf_counter() - start, config,
                         snapshots=snapshots)
    if ev is not None:
        report.extra["final_l1"] = float(np.mean(np.abs(N.predict(params, ev) - ev_exact)))
    return report


# two-stage raster pipeline ---------------------------------------------------------------

class StageOneFailed(TrainingAborted):
    pass


def stage_one_fit(data, arch, seed, iterations=3000, lr=5e-3, milestones=None,
                  tol=1e-3, init=None, init_scheme="uniform"):
    """Fit u(0, x, y) to the t = 0 thickness grid (mean square over valid nodes).

    Time is frozen: the first-layer time weights are zeroed and kept at zero,
    so the result equals the fitted profile at every t.  Fitting only t = 0
    would leave the time direction free, and a deep relu2 net then blows up
    for t > 0.  Returns (params, relative L1, loss history).  Full-batch over
    grid nodes.
    """
    g0 = data.thickness_t0
    xy = g0.nodes()
    vals = g0.values.ravel()
    keep = g0.valid().ravel()
    pts = np.column_stack([np.zeros(keep.sum()), xy[keep]])
    target = vals[keep]
    params = init.copy() if init is not None else N.init_params(arch, seed, init_scheme)
    params.weights[0][:, 0] = 0.0
    if milestones is None:
        milestones = tuple((int(iterations * f), 0.5) for f in (0.4, 0.6, 0.75, 0.9))
    state = OptimizerState(lr, tuple(milestones))
    losses = np.empty(iterations)
    for it in range(iterations):
        tape = J.Tape()
        layers = N.bind(tape, params)
        loss = _mse_to(N.value_graph(tape, params, pts, layers), target)
        losses[it] = float(loss.value)
        if not np.isfinite(losses[it]):
            raise StageOneFailed(f"stage 1: non-finite loss at iteration {it}")
        grads = tape.backward(loss)
        tape.release()
        grads[("W", 0)][:, 0] = 0.0
        adam_step(state, params, grads)
    scale = np.mean(np.abs(target))
    rel = float(np.mean(np.abs(N.predict(params, pts) - target)) / scale)
    return params, rel, losses


def two_stage_train(problem, arch, weights, stage1_iters, stage2_iters, seed,
                    stage1_tol=1e-3, stage1_lr=5e-3, stage1=None, **train_kw):
    """Stage 1 fits the t = 0 grid; stage 2 runs the SIA loss from those parameters.

    ``stage1`` may pass a precomputed (params, rel_l1) pair to reuse across runs.
    """
    data = problem.params["raster"]
    if stage1 is None:
        p1, rel, _ = stage_one_fit(data, arch, seed, stage1_iters, stage1_lr,
                                   init_scheme=train_kw.get("init_scheme", "uniform"))
    else:
        p1, rel = stage1
    if not rel <= stage1_tol:
        raise StageOneFailed(f"stage 1 relative L1 {rel:.3e} above threshold {stage1_tol:.1e}")
    train_kw.setdefault("profile", "raster")
    report = train(problem, arch, weights, stage2_iters, seed, init=p1, **train_kw)
    report.extra["stage1_rel_l1"] = rel
    report.extra["stage1_params"] = p1
    return report


def raster_l1_at_T(params, data, t=1.0):
    from .grid import eval_on_grid, l1_vs
    g = data.thickness_tT
    return l1_vs(eval_on_grid(params, g, t), g)


class GridTarget:
    """Picklable sweep scorer: L1 of u(t, .) against the data's final grid."""

    def __init__(self, data, t=1.0):
        self.data = data
        self.t = t

    def __call__(self, params):
        return raster_l1_at_T(params, self.data, self.t)


# sweep ----------------------------------------------------------------------------------

@dataclass
class SweepRow:
    mu: float
    p: float
    l1_at_T: float
    status: str
    best: bool = False
    error: str = ""


_SWEEP = {}


def _sweep_one(index):
    # reads shared state from _SWEEP so problem closures are never pickled
    st = _SWEEP
    mu, p = st["tasks"][index]
    cfg = st["cfg"]
    try:
        prob = st["build"](mu, p)
        common = dict(sizes=cfg.get("sizes", (1000, 1000, 1000)), lr=cfg.get("lr"),
                      milestones=cfg.get("milestones"), eval_every=cfg.get("eval_every", 1),
                      init_scheme=cfg.get("init_scheme", "uniform"))
        if prob.name == "raster":
            rep = two_stage_train(prob, cfg["arch"], cfg["weights"], cfg.get("stage1_iters", 0),
                                  cfg["iterations"], cfg["seed"],
                                  stage1_tol=cfg.get("stage1_tol", 1e-3), stage1=st["stage1"],
                                  **common)
        else:
            rep = train(prob, cfg["arch"], cfg["weights"], cfg["iterations"], cfg["seed"],
                        profile=cfg.get("profile", "mms"), **common)
        out_dir = cfg.get("out")
        if out_dir:
            run_dir = os.path.join(out_dir, run_dir_name(mu, p))
            os.makedirs(run_dir, exist_ok=True)
            rep.write_csv(os.path.join(run_dir, "history.csv"))
            N.save_params(rep.params, os.path.join(run_dir, "final.ckpt"))
        l1 = float(st["score"](rep.params))
        if not np.isfinite(l1):
            return SweepRow(mu, p, float("nan"), "failed", error="non-finite L1")
        return SweepRow(mu, p, l1, "ok")
    except Exception as exc:  # one run failing must not stop the sweep
        return SweepRow(mu, p, float("nan"), "failed", error=f"{type(exc).__name__}: {exc}")


def run_dir_name(mu, p):
    return f"mu{mu:g}_p{p:g}"


def mu_sweep(build, mu_values, p_values, score, config, jobs=1):
    """One independent run per (mu, p).

    ``build(mu, p)`` returns the ProblemSpec for a grid point and
    ``score(params)`` the L1 of a trained run.  ``config`` keys: arch, weights,
    iterations, seed, sizes, lr, milestones, profile, eval_every, init_scheme, out, and for
    raster problems stage1_iters, stage1_lr, stage1_tol, or stage1 = (params, rel)
    to reuse an existing fit.  Rows come back in
    (p, mu) order with the argmin over successful rows flagged.
    """
    mu_values, p_values = list(mu_values), list(p_values)
    if not mu_values or not p_values:
        raise ValueError("mu and p lists must be nonempty")
    cfg = dict(config)
    stage1 = cfg.pop("stage1", None)
    probe = build(mu_values[0], p_values[0])
    if probe.name == "raster" and stage1 is None:
        # stage 1 does not involve mu or p; fit once and share
        p1, rel, _ = stage_one_fit(probe.params["raster"], cfg["arch"], cfg["seed"],
                                   cfg.get("stage1_iters", 3000), cfg.get("stage1_lr", 5e-3),
                                   init_scheme=cfg.get("init_scheme", "uniform"))
        stage1 = (p1, rel)
    tasks = [(mu, p) for p in p_values for mu in mu_values]
    _SWEEP.clear()
    _SWEEP.update(tasks=tasks, cfg=cfg, build=build, score=score, stage1=stage1)
    try:
        if jobs > 1:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as ex:
                rows = list(ex.map(_sweep_one, range(len(tasks))))
        else:
            rows = [_sweep_one(k) for k in range(len(tasks))]
    finally:
        _SWEEP.clear()
    ok = [r for r in rows if r.status == "ok"]
    if ok:
        min(ok, key=lambda r: r.l1_at_T).best = True
    return rows


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("mu", "p", "l1_at_T", "status"))
        for r in rows:
            status = "best" if r.best else r.status
            w.writerow((repr(r.mu), repr(r.p), "" if np.isnan(r.l1_at_T) else repr(r.l1_at_T),
                        status))
