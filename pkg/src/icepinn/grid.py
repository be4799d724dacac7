"""Raster grids: text file format, interpolation, synthetic data, and metrics.

File format: a header line

    nx=<int> ny=<int> x0=<float> y0=<float> dx=<float> dy=<float> nodata=<float>

followed by ``ny`` lines of ``nx`` whitespace-separated values.  Row 0 is the
minimum y.  Node (i, j) sits at (x0 + i dx, y0 + j dy).  Values are written
with 17 significant digits, so write followed by read is bit-exact.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import sia as S
from .domains import Rectangle

HEADER_KEYS = ("nx", "ny", "x0", "y0", "dx", "dy", "nodata")
DEFAULT_NODATA = -9999.0


@dataclass
class RasterGrid:
    values: np.ndarray
    x0: float = 0.0
    y0: float = 0.0
    dx: float = 1.0
    dy: float = 1.0
    nodata: float = DEFAULT_NODATA

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("grid values must be 2-D (ny, nx)")
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError("grid spacing must be positive")

    @property
    def ny(self):
        return self.values.shape[0]

    @property
    def nx(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def xs(self):
        return self.x0 + self.dx * np.arange(self.nx)

    def ys(self):
        return self.y0 + self.dy * np.arange(self.ny)

    def nodes(self):
        """Node coordinates as an (ny*nx, 2) array in row-major order."""
        X, Y = np.meshgrid(self.xs(), self.ys())
        return np.column_stack([X.ravel(), Y.ravel()])

    def valid(self):
        return self.values != self.nodata

    def like(self, values):
        return RasterGrid(values, self.x0, self.y0, self.dx, self.dy, self.nodata)

    def same_frame(self, other):
        return (self.shape == other.shape and self.x0 == other.x0 and self.y0 == other.y0
                and self.dx == other.dx and self.dy == other.dy)


class GridFormatError(ValueError):
    pass


def write_grid(grid, path):
    head = (f"nx={grid.nx} ny={grid.ny} x0={grid.x0!r} y0={grid.y0!r} dx={grid.dx!r} "
            f"dy={grid.dy!r} nodata={grid.nodata!r}")
    rows = [" ".join(f"{v:.17g}" for v in row) for row in grid.values]
    with open(path, "w") as fh:
        fh.write(head + "\n" + "\n".join(rows) + "\n")


def read_grid(path):
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise GridFormatError(f"{path}: empty file")
    header = {}
    for tok in lines[0].split():
        if "=" not in tok:
            raise GridFormatError(f"{path}: malformed header token {tok!r}")
        key, val = tok.split("=", 1)
        header[key] = val
    missing = [k for k in HEADER_KEYS if k not in header]
    extra = [k for k in header if k not in HEADER_KEYS]
    if missing or extra:
        raise GridFormatError(f"{path}: header missing {missing} / unknown {extra}")
    try:
        nx, ny = int(header["nx"]), int(header["ny"])
        x0, y0, dx, dy, nodata = (float(header[k]) for k in ("x0", "y0", "dx", "dy", "nodata"))
    except ValueError as exc:
        raise GridFormatError(f"{path}: bad header value ({exc})") from None
    if nx < 1 or ny < 1:
        raise GridFormatError(f"{path}: nx and ny must be positive")
    if len(lines) - 1 != ny:
        raise GridFormatError(f"{path}: expected {ny} rows, found {len(lines) - 1}")
    values = np.empty((ny, nx))
    for j, line in enumerate(lines[1:]):
        cells = line.split()
        if len(cells) != nx:
            raise GridFormatError(f"{path}: row {j} has {len(cells)} values, expected {nx}")
        try:
            values[j] = [float(c) for c in cells]
        except ValueError:
            raise GridFormatError(f"{path}: non-numeric cell in row {j}") from None
    return RasterGrid(values, x0, y0, dx, dy, nodata)


# interpolation ----------------------------------------------------------------------

def _locate(grid, x, y):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    fx = (x - grid.x0) / grid.dx
    fy = (y - grid.y0) / grid.dy
    tol = 1e-9
    if np.any((fx < -tol) | (fx > grid.nx - 1 + tol) | (fy < -tol) | (fy > grid.ny - 1 + tol)):
        raise ValueError("query point outside grid extent")
    fx = np.clip(fx, 0.0, grid.nx - 1)
    fy = np.clip(fy, 0.0, grid.ny - 1)
    i = np.minimum(np.floor(fx).astype(int), max(grid.nx - 2, 0))
    j = np.minimum(np.floor(fy).astype(int), max(grid.ny - 2, 0))
    return i, j, fx - i, fy - j


def _corners(grid, i, j):
    v = grid.values
    i1 = np.minimum(i + 1, grid.nx - 1)
    j1 = np.minimum(j + 1, grid.ny - 1)
    c = (v[j, i], v[j, i1], v[j1, i], v[j1, i1])
    for arr in c:
        if np.any(arr == grid.nodata):
            raise ValueError("nodata cell in interpolation neighbourhood")
    return c


def bilinear_sample(grid, x, y):
    i, j, s, t = _locate(grid, x, y)
    v00, v10, v01, v11 = _corners(grid, i, j)
    return (v00 * (1 - s) * (1 - t) + v10 * s * (1 - t) + v01 * (1 - s) * t + v11 * s * t)


def bilinear_gradient(grid, x, y):
    """Derivative of the bilinear patch containing each point, shape (N, 2)."""
    i, j, s, t = _locate(grid, x, y)
    v00, v10, v01, v11 = _corners(grid, i, j)
    gx = ((v10 - v00) * (1 - t) + (v11 - v01) * t) / grid.dx
    gy = ((v01 - v00) * (1 - s) + (v11 - v10) * s) / grid.dy
    return np.column_stack([gx, gy])


class BedSampler:
    """Bed gradient and Hessian from a grid.

    The gradient is the bilinear interpolant of central-difference gradient
    grids; the Hessian is the patchwise derivative of that interpolant,
    symmetrized.  A single bilinear patch has no diagonal curvature, which
    would drop the div(grad b) part of the flux.
    """

    def __init__(self, bed):
        if np.any(~bed.valid()):
            raise ValueError("bed grid contains nodata")
        gy, gx = np.gradient(bed.values, bed.dy, bed.dx)
        self.bed = bed
        self.gx = bed.like(gx)
        self.gy = bed.like(gy)

    def value(self, xy):
        return bilinear_sample(self.bed, xy[:, 0], xy[:, 1])

    def __call__(self, xy):
        x, y = xy[:, 0], xy[:, 1]
        grad = np.column_stack([bilinear_sample(self.gx, x, y), bilinear_sample(self.gy, x, y)])
        dgx = bilinear_gradient(self.gx, x, y)
        dgy = bilinear_gradient(self.gy, x, y)
        hess = np.empty((len(x), 2, 2))
        hess[:, 0, 0] = dgx[:, 0]
        hess[:, 1, 1] = dgy[:, 1]
        hess[:, 0, 1] = hess[:, 1, 0] = 0.5 * (dgx[:, 1] + dgy[:, 0])
        return grad, hess


# raster problem data ------------------------------------------------------------------

@dataclass
class RasterProblemData:
    thickness_t0: RasterGrid
    thickness_tT: RasterGrid
    bed: RasterGrid
    year0: float = 2000.0
    yearT: float = 2018.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for g in (self.thickness_tT, self.bed):
            if not self.thickness_t0.same_frame(g):
                raise ValueError("raster grids must share shape and georeference")
        for g in (self.thickness_t0, self.thickness_tT):
            v = g.values[g.valid()]
            if np.any(v < 0):
                raise ValueError("thickness must be nonnegative")

    def year_to_t(self, year):
        return (year - self.year0) / (self.yearT - self.year0)


GRID_FILES = {"thickness_t0": "thickness_t0.grid", "thickness_tT": "thickness_tT.grid",
              "bed": "bed.grid"}
MANIFEST = "manifest.txt"


def write_raster_data(data, directory):
    os.makedirs(directory, exist_ok=True)
    for key, fname in GRID_FILES.items():
        write_grid(getattr(data, key), os.path.join(directory, fname))
    meta = {"year0": data.year0, "yearT": data.yearT, **data.meta}
    with open(os.path.join(directory, MANIFEST), "w") as fh:
        for k in sorted(meta):
            fh.write(f"{k}={meta[k]!r}\n" if isinstance(meta[k], float) else f"{k}={meta[k]}\n")


def read_raster_data(directory):
    grids = {k: read_grid(os.path.join(directory, f)) for k, f in GRID_FILES.items()}
    meta = {}
    path = os.path.join(directory, MANIFEST)
    if os.path.exists(path):
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line and not line.startswith("#"):
                    k, v = line.split("=", 1)
                    meta[k.strip()] = v.strip()
    year0 = float(meta.pop("year0", 2000.0))
    yearT = float(meta.pop("yearT", 2018.0))
    return RasterProblemData(grids["thickness_t0"], grids["thickness_tT"], grids["bed"],
                             year0, yearT, meta)


# synthetic data ---------------------------------------------------------------------

SYNTH_CENTER = (0.5, 0.5)
SYNTH_SCALE = 0.2   # normalized radius of the unit physical disk


def synthetic_bed_radial(r, p):
    """Test bed shifted down inside r <= 0.75 so it is continuous (same gradient)."""
    b = S.sia_bed(r, p)
    return np.where(r <= S.R_STAR_SIA, b - S.sia_bed(S.R_STAR_SIA, p), 0.0)


def _synthetic_exact_jet(st, p, gamma):
    from .problems import sia_exact_jet
    return sia_exact_jet(st, p, gamma, SYNTH_CENTER, SYNTH_SCALE)


def calibrate_gamma(mu_star, p, eps_time=1e-6, n=4001):
    """Decay rate making the time term and the flux divergence equally large.

    Both are averaged over the ice-covered radius at t = 0; the time term is
    -gamma g'(u0) u0, so gamma is the ratio of the two means.
    """
    consts = S.SIAConstants(p=p, mu=mu_star, eps_time=eps_time)
    r = np.linspace(1e-3, 3.0, n)
    u0 = S.sia_u0(r, p)
    ice = (u0 > 0) & (np.abs(r - S.R_STAR_SIA) > 1e-3)
    r = r[ice]
    # with gamma = 0 the radial residual is minus the flux divergence
    div = -S.radial_residual(r * SYNTH_SCALE, 0.0, p, 0.0, consts, SYNTH_SCALE)
    w = r  # area weight
    time_mag = np.sum(w * np.abs(S.g_prime(u0[ice], p, eps_time) * u0[ice]))
    return float(np.sum(w * np.abs(div)) / time_mag)


def synthetic_raster(mu_star=5e-4, p=4.0, gamma=None, nx=65, ny=65, eps_time=1e-6):
    """Synthetic raster data built from the radial shallow-ice test solution.

    Domain [0,1]^2; the unit physical disk is centred at (0.5, 0.5) with
    normalized radius 0.2.  thickness_t0 = u0, thickness_tT = u0 exp(-gamma),
    bed = continuous test bed.  ``gamma=None`` calibrates it from (mu_star, p).
    """
    if nx < 16 or ny < 16:
        raise ValueError("synthetic rasters need nx, ny >= 16")
    if gamma is None:
        gamma = calibrate_gamma(mu_star, p, eps_time)
    template = RasterGrid(np.zeros((ny, nx)), 0.0, 0.0, 1.0 / (nx - 1), 1.0 / (ny - 1))
    xy = template.nodes()
    r = np.hypot(xy[:, 0] - SYNTH_CENTER[0], xy[:, 1] - SYNTH_CENTER[1]) / SYNTH_SCALE
    u0 = S.sia_u0(r, p).reshape(ny, nx)
    uT = u0 if gamma == 0 else u0 * np.exp(-gamma)
    bed = synthetic_bed_radial(r, p).reshape(ny, nx)
    meta = {"source": "synthetic", "mass_balance": "synthetic", "boundary": "zero",
            "mu_star": float(mu_star), "p": float(p), "gamma": float(gamma),
            "eps_time": float(eps_time)}
    return RasterProblemData(template.like(u0), template.like(uT), template.like(bed),
                             meta=meta)


def synthetic_mass_balance(data, bed_sampler, mu_star, p, gamma, eps_time):
    """Mass balance making the test solution exact for the grid-sampled bed at mu_star."""
    consts = S.SIAConstants(p=p, mu=mu_star, eps_time=eps_time)

    def mass_balance(st, _consts):
        # fixed at mu_star: sweeps change the model's mu, not the data
        grad, hess = bed_sampler(st[:, 1:])
        jet = _synthetic_exact_jet(st, p, gamma)
        return S.residual_sia(jet, consts, grad, hess, 0.0)

    return mass_balance


# raster problem -------------------------------------------------------------------------

def raster_problem(data, p=4.0, mu=5e-4, eps_time=1e-6, mass_balance=None):
    """SIA problem on the normalized raster domain [0,1]^2, t in [0,1].

    ``mass_balance``: "zero" (default for real data) or "synthetic" (uses the
    generator parameters recorded with the data).  Boundary target is u = 0.
    """
    from .problems import ProblemSpec

    g0 = data.thickness_t0
    x1 = g0.x0 + g0.dx * (g0.nx - 1)
    y1 = g0.y0 + g0.dy * (g0.ny - 1)
    dom = Rectangle(g0.x0, x1, g0.y0, y1)
    bed = BedSampler(data.bed)
    consts = S.SIAConstants(p=p, mu=mu, eps_time=eps_time)
    if mass_balance is None:
        mass_balance = data.meta.get("mass_balance", "zero")
    if mass_balance == "zero":
        forcing = lambda st, _c: np.zeros(len(st))  # noqa: E731
    elif mass_balance == "synthetic":
        m = data.meta
        forcing = synthetic_mass_balance(data, bed, float(m["mu_star"]), float(m["p"]),
                                         float(m["gamma"]), float(m.get("eps_time", eps_time)))
    else:
        raise ValueError(f"unknown mass balance {mass_balance!r}")

    return ProblemSpec(
        name="raster", mode="sia", domain=dom,
        obstacle=lambda st: np.zeros(len(st)),
        forcing=forcing,
        boundary_target=lambda st: np.zeros(len(st)),
        initial_target=lambda xs: bilinear_sample(g0, xs[:, 0], xs[:, 1]),
        exact=None, constants=consts, bed_derivs=bed,
        params={"p": p, "mu": mu, "eps_time": eps_time, "mass_balance": mass_balance,
                "raster": data})


# evaluation --------------------------------------------------------------------------

def eval_on_grid(params, grid_template, t):
    """Network u(t, x, y) at every node of ``grid_template``."""
    from .network import predict
    xy = grid_template.nodes()
    st = np.column_stack([np.full(len(xy), float(t)), xy])
    vals = predict(params, st).reshape(grid_template.shape)
    return grid_template.like(vals)


def l1_vs(a, b, mask=None):
    """Mean absolute difference over cells valid in both grids (and in ``mask``)."""
    av = a.values if isinstance(a, RasterGrid) else np.asarray(a, dtype=np.float64)
    bv = b.values if isinstance(b, RasterGrid) else np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise ValueError(f"shape mismatch {av.shape} vs {bv.shape}")
    keep = np.ones(av.shape, dtype=bool)
    if isinstance(a, RasterGrid):
        keep &= a.valid()
    if isinstance(b, RasterGrid):
        keep &= b.valid()
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    if not keep.any():
        raise ValueError("empty comparison mask")
    return float(np.mean(np.abs(av[keep] - bv[keep])))


def grid_from_geotiff(path):  # pragma: no cover
    """Placeholder for georeferenced input.

    Real survey data must be reprojected, co-registered and resampled onto a
    common node grid upstream, then written in the text format above.
    """
    raise NotImplementedError("convert georeferenced rasters to the text grid format first")
