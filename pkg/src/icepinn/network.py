"""Fully-connected networks evaluated in value mode and in jet mode."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import jet as J

CHECKPOINT_MAGIC = "icepinn-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ArchitectureSpec:
    input_dim: int = 2
    hidden_layers: int = 5
    width: int = 128
    activation: str = "relu2"
    output_dim: int = 1

    def __post_init__(self):
        if self.input_dim not in (2, 3):
            raise ValueError(f"input_dim must be 2 or 3, got {self.input_dim}")
        if self.hidden_layers < 1:
            raise ValueError("hidden_layers must be >= 1")
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.activation not in ("relu2", "tanh"):
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.output_dim != 1:
            raise ValueError("only scalar-output networks are supported")

    def layer_shapes(self):
        dims = [self.input_dim] + [self.width] * self.hidden_layers + [self.output_dim]
        return [(dims[k + 1], dims[k]) for k in range(len(dims) - 1)]


@dataclass
class NetworkParams:
    spec: ArchitectureSpec
    weights: list
    biases: list
    seed: int | None = None
    init_scale: str = "uniform(+-1/sqrt(fan_in)), zero bias"
    meta: dict = field(default_factory=dict)

    def copy(self):
        return NetworkParams(self.spec, [w.copy() for w in self.weights],
                             [b.copy() for b in self.biases], self.seed, self.init_scale,
                             dict(self.meta))

    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def slots(self):
        """Parameter slot names in layer order."""
        out = []
        for k in range(len(self.weights)):
            out += [("W", k), ("b", k)]
        return out

    def get(self, slot):
        kind, k = slot
        return self.weights[k] if kind == "W" else self.biases[k]

    def set(self, slot, value):
        kind, k = slot
        if kind == "W":
            self.weights[k] = value
        else:
            self.biases[k] = value

    def flat(self):
        return np.concatenate([self.get(s).ravel() for s in self.slots()])

    def with_flat(self, vec):
        out = self.copy()
        pos = 0
        for s in self.slots():
            arr = self.get(s)
            out.set(s, np.asarray(vec[pos:pos + arr.size], dtype=np.float64).reshape(arr.shape))
            pos += arr.size
        return out


INIT_SCHEMES = {
    "uniform": "uniform(+-1/sqrt(fan_in)), zero bias",
    "uniform-bias": "uniform(+-1/sqrt(fan_in)) weights and biases",
}


def init_params(spec, seed, scheme="uniform"):
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases 0.

    ``scheme="uniform-bias"`` also draws biases from the same interval (the
    default of common deep-learning libraries).  Zero biases make a deep relu2
    network a homogeneous polynomial of the inputs, which trains slowly.
    """
    if scheme not in INIT_SCHEMES:
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for m, n in spec.layer_shapes():
        bound = 1.0 / np.sqrt(n)
        weights.append(rng.uniform(-bound, bound, size=(m, n)))
        if scheme == "uniform-bias":
            biases.append(rng.uniform(-bound, bound, size=m))
        else:
            biases.append(np.zeros(m))
    return NetworkParams(spec, weights, biases, seed=seed, init_scale=INIT_SCHEMES[scheme])


def _check_points(params, points):
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] != params.spec.input_dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, network expects "
                         f"{params.spec.input_dim}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite input point")
    return pts


def bind(tape, params):
    """Register every weight and bias of ``params`` on ``tape``."""
    return [(tape.param(w, ("W", k)), tape.param(b, ("b", k)))
            for k, (w, b) in enumerate(zip(params.weights, params.biases))]


def _layers(tape, params, layers):
    if layers is None:
        layers = [(tape.const(w), tape.const(b)) for w, b in zip(params.weights, params.biases)]
    return layers


def value_graph(tape, params, points, layers=None):
    """Taped value-mode forward pass; returns a Var of shape (N,)."""
    pts = _check_points(params, points)
    layers = _layers(tape, params, layers)
    act = params.spec.activation
    z = tape.const(pts)
    for w, b in layers[:-1]:
        z = J.activate(act, J.dense(z, w, b))
    w, b = layers[-1]
    return J.dense(z, w, b)[:, 0]


def jet_graph(tape, params, points, layers=None, pairs=None):
    """Taped jet-mode forward pass; returns the output Jet (width 1)."""
    pts = _check_points(params, points)
    layers = _layers(tape, params, layers)
    act = params.spec.activation
    z = J.seed_inputs(tape, pts, pairs)
    for w, b in layers[:-1]:
        z = J.activation_forward(act, J.affine_forward(w, b, z))
    w, b = layers[-1]
    return J.affine_forward(w, b, z)


def forward_value(params, points):
    """Network output at each point; ndarray of shape (N,)."""
    return value_graph(J.Tape(), params, points).value


def forward_jets(params, points, pairs=None):
    """Output Jet (value, input gradient, input Hessian) at each point."""
    return jet_graph(J.Tape(), params, points, pairs=pairs)


def predict(params, points, chunk=65536):
    """Untaped value evaluation for large point sets."""
    pts = _check_points(params, points)
    act = params.spec.activation
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        z = pts[s:s + chunk]
        for w, b in zip(params.weights[:-1], params.biases[:-1]):
            z = J.activation_derivs(act, z @ w.T + b)[0]
        out[s:s + chunk] = (z @ params.weights[-1].T + params.biases[-1])[:, 0]
    return out


# checkpoint file -------------------------------------------------------------
#
# Text container:
#   line 1: "icepinn-checkpoint 1"
#   line 2: "input_dim=<d> hidden_layers=<L> width=<m> activation=<name> output_dim=1 seed=<s>"
#   then for each layer k = 0..L: a line "layer <k> <rows> <cols>", <rows> lines of
#   <cols> weights (row-major), then one line of <rows> biases.
# Values are written with 17 significant digits so a round trip is bit-exact.

def _fmt(row):
    return " ".join(f"{v:.17g}" for v in row)


def save_params(params, path):
    s = params.spec
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
             f"input_dim={s.input_dim} hidden_layers={s.hidden_layers} width={s.width} "
             f"activation={s.activation} output_dim={s.output_dim} seed={params.seed}"]
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        lines.append(f"layer {k} {w.shape[0]} {w.shape[1]}")
        lines.extend(_fmt(row) for row in w)
        lines.append(_fmt(b))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path):
    with open(path) as fh:
        text = fh.read()
    lines = io.StringIO(text).read().splitlines()
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    if int(magic[1]) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {magic[1]}")
    header = dict(tok.split("=", 1) for tok in lines[1].split())
    seed = None if header.get("seed", "None") == "None" else int(header["seed"])
    spec = ArchitectureSpec(int(header["input_dim"]), int(header["hidden_layers"]),
                            int(header["width"]), header["activation"],
                            int(header["output_dim"]))
    weights, biases = [], []
    pos = 2
    for k, (m, n) in enumerate(spec.layer_shapes()):
        tag = lines[pos].split()
        if tag[0] != "layer" or int(tag[1]) != k or (int(tag[2]), int(tag[3])) != (m, n):
            raise ValueError(f"{path}: bad layer header {lines[pos]!r}")
        rows = [np.array(lines[pos + 1 + r].split(), dtype=np.float64) for r in range(m)]
        w = np.vstack(rows)
        b = np.array(lines[pos + 1 + m].split(), dtype=np.float64)
        if w.shape != (m, n) or b.shape != (m,):
            raise ValueError(f"{path}: layer {k} has wrong shape")
        weights.append(w)
        biases.append(b)
        pos += m + 2
    return NetworkParams(spec, weights, biases, seed=seed)
