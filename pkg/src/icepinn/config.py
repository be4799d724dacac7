"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Unknown keys are rejected.
``auto`` selects a problem-dependent default (see ``build_problem``).
"""
from __future__ import annotations

from dataclasses import dataclass, fields

AUTO = "auto"


class ConfigError(ValueError):
    pass


def _bool(s):
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _float_list(s):
    return [float(v) for v in s.replace(",", " ").split()]


def _milestones(s):
    # "500:0.5 750:0.5"
    out = []
    for tok in s.replace(",", " ").split():
        it, m = tok.split(":")
        out.append((int(it), float(m)))
    return out


def _opt(conv):
    def parse(s):
        return None if s.strip().lower() in (AUTO, "", "none") else conv(s)
    return parse


@dataclass
class RunConfig:
    problem: str = "mms1d"            # mms1d, mms2d-case1, mms2d-case2, sia-mms, raster
    # network
    hidden_layers: int = 5
    width: int = 128
    activation: str = "relu2"
    init_scheme: str = "uniform"      # uniform (zero biases) | uniform-bias
    # loss weights
    alpha: float = 1.0
    beta: float = 4000.0
    gamma_w: float = 1.0
    delta: float = 1.0
    penalty_coeff: float = 1e-5
    # optimization
    iterations: int = 5000
    seed: int = 0
    lr_profile: str | None = None     # mms | raster; auto: raster for raster problems
    lr: float | None = None           # auto: 5e-4 (mms) / 5e-3 (raster)
    milestones: list | None = None    # "it:mult ..."; auto: profile default
    n_pde: int = 1000
    n_boundary: int = 1000
    n_initial: int = 1000
    eval_points: int = 10_000
    eval_every: int = 1
    deterministic: bool = False
    # problem constants
    gamma: float | None = None        # MMS decay rate; auto: problem default
    p: float = 4.0
    mu: float | None = None           # auto: 0.01 (sia-mms) / 5e-4 (raster)
    eps_time: float = 1e-6
    # raster pipeline
    data_dir: str = ""
    mass_balance: str | None = None   # zero | synthetic; auto: from data manifest
    stage1_iters: int = 3000
    stage1_lr: float = 5e-3
    stage1_tol: float = 1e-3
    # sweep
    mu_list: list | None = None
    p_list: list | None = None
    # oracle
    nx: int = 401
    nt: int = 2000
    # synthetic data
    mu_star: float = 5e-4
    grid_nx: int = 65
    grid_ny: int = 65
    # outputs
    out: str = "run"
    save_grids: bool = False

    def weights(self):
        from .training import LossWeights
        return LossWeights(self.alpha, self.beta, self.gamma_w, self.delta, self.penalty_coeff)

    def sizes(self):
        return (self.n_pde, self.n_boundary, self.n_initial)

    def profile(self):
        if self.lr_profile:
            return self.lr_profile
        return "raster" if self.problem == "raster" else "mms"

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                s = AUTO
            elif f.name == "milestones":
                s = " ".join(f"{it}:{m!r}" for it, m in v)
            elif isinstance(v, list):
                s = " ".join(repr(float(x)) for x in v)
            elif isinstance(v, bool):
                s = "true" if v else "false"
            else:
                s = repr(v) if isinstance(v, float) else str(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())


_PARSERS = {
    "int": int, "float": float, "str": str, "bool": _bool,
    "float | None": _opt(float), "str | None": _opt(str),
    "list | None": _opt(_float_list),
}
_KEYS = {f.name: f for f in fields(RunConfig)}


def _parser(name):
    if name == "milestones":
        return _opt(_milestones)
    return _PARSERS[_KEYS[name].type]


def parse_config(text, source="<config>"):
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        try:
            values[key] = _parser(key)(val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{n}: bad value for {key!r}: {exc}") from None
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path)


def validate(cfg):
    from .problems import PROBLEM_IDS
    if cfg.problem not in PROBLEM_IDS:
        raise ConfigError(f"unknown problem {cfg.problem!r}")
    if cfg.activation not in ("relu2", "tanh"):
        raise ConfigError(f"unknown activation {cfg.activation!r}")
    from .network import INIT_SCHEMES
    if cfg.init_scheme not in INIT_SCHEMES:
        raise ConfigError(f"unknown init_scheme {cfg.init_scheme!r}")
    if cfg.lr_profile not in (None, "mms", "raster"):
        raise ConfigError(f"unknown lr_profile {cfg.lr_profile!r}")
    if cfg.mass_balance not in (None, "zero", "synthetic"):
        raise ConfigError(f"unknown mass_balance {cfg.mass_balance!r}")
    for k in ("hidden_layers", "width", "n_pde", "n_boundary", "n_initial", "eval_points",
              "eval_every", "nx", "nt", "stage1_iters"):
        if getattr(cfg, k) < 1 and not (k == "stage1_iters" and getattr(cfg, k) == 0):
            raise ConfigError(f"{k} must be positive")
    if cfg.iterations < 0:
        raise ConfigError("iterations must be >= 0")
    try:
        cfg.weights()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def build_problem(cfg, data=None):
    """ProblemSpec for ``cfg`` (raster problems need loaded ``data``)."""
    from .problems import make_problem
    kw = {}
    if cfg.problem in ("mms1d", "mms2d-case1", "mms2d-case2"):
        if cfg.gamma is not None:
            kw["gamma"] = cfg.gamma
    elif cfg.problem == "sia-mms":
        kw = {"p": cfg.p, "eps_time": cfg.eps_time}
        if cfg.mu is not None:
            kw["mu"] = cfg.mu
        if cfg.gamma is not None:
            kw["gamma"] = cfg.gamma
    elif cfg.problem == "raster":
        kw = {"data": data, "p": cfg.p, "eps_time": cfg.eps_time,
              "mu": 5e-4 if cfg.mu is None else cfg.mu, "mass_balance": cfg.mass_balance}
    return make_problem(cfg.problem, **kw)


def architecture(cfg, problem):
    from .network import ArchitectureSpec
    return ArchitectureSpec(problem.input_dim, cfg.hidden_layers, cfg.width, cfg.activation)
