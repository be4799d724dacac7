"""Problem definitions and the string-keyed registry.

Every callable takes space-time points ``st`` of shape (N, 1 + n) with time
in column 0, except ``initial_target`` which takes spatial points (N, n).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import parabolic as P
from . import sia as S
from .domains import Disk, Interval, Rectangle

PROBLEM_IDS = ("mms1d", "mms2d-case1", "mms2d-case2", "sia-mms", "raster")
BREAKPOINT_REJECT = 1e-9


@dataclass
class ProblemSpec:
    name: str
    mode: str                      # "linear_parabolic" or "sia"
    domain: object
    obstacle: Callable
    forcing: Callable
    boundary_target: Callable
    initial_target: Callable
    exact: Optional[Callable] = None
    gamma: float = 0.0
    T: float = 1.0
    constants: Optional[S.SIAConstants] = None
    bed_derivs: Optional[Callable] = None
    breakpoint_distance: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("linear_parabolic", "sia"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "sia" and (self.constants is None or self.bed_derivs is None):
            raise ValueError("sia problems need constants and bed derivatives")

    @property
    def input_dim(self):
        return 1 + self.domain.dim

    def forcing_at(self, st):
        """Source term at ``st``; SIA mass balances may depend on the constants."""
        if self.mode == "sia":
            return self.forcing(st, self.constants)
        return self.forcing(st)

    def with_constants(self, **changes):
        """Copy with SIA constants replaced (e.g. a different mu for a sweep)."""
        return replace(self, constants=replace(self.constants, **changes))


# 1D -----------------------------------------------------------------------------

def mms1d(gamma=P.GAMMA_1D):
    def exact(st):
        return P.u_exact_1d(st[:, 1], st[:, 0], gamma)

    return ProblemSpec(
        name="mms1d", mode="linear_parabolic", domain=Interval(0.0, 1.0),
        obstacle=lambda st: P.psi_1d(st[:, 1]),
        forcing=lambda st: P.forcing_1d(st[:, 1], st[:, 0], gamma),
        boundary_target=exact,
        initial_target=lambda xs: P.u_exact_1d(xs[:, 0], 0.0, gamma),
        exact=exact, gamma=gamma,
        breakpoint_distance=lambda xs: P.breakpoint_distance_1d(xs[:, 0]),
        params={"gamma": gamma})


# 2D -----------------------------------------------------------------------------

def mms2d(case, gamma=None):
    if gamma is None:
        gamma = P.default_gamma_2d(case)
    dom = Disk(P.R_OUTER)

    def exact(st):
        return P.u_exact_2d(dom.radius_of(st[:, 1:]), st[:, 0], case, gamma)

    return ProblemSpec(
        name=f"mms2d-case{case}", mode="linear_parabolic", domain=dom,
        obstacle=lambda st: P.psi_2d(dom.radius_of(st[:, 1:]), case),
        forcing=lambda st: P.forcing_2d(dom.radius_of(st[:, 1:]), st[:, 0], case, gamma),
        boundary_target=exact,
        initial_target=lambda xs: P.u0_2d(dom.radius_of(xs)),
        exact=exact, gamma=gamma,
        breakpoint_distance=lambda xs: np.abs(dom.radius_of(xs) - P.R_STAR),
        params={"case": case, "gamma": gamma})


# SIA manufactured solution -----------------------------------------------------------

def sia_radial_bed_derivs(xy, p, center=(0.0, 0.0), scale=1.0):
    """Bed gradient (N,2) and Hessian (N,2,2) of the radial test bed."""
    r = np.hypot(xy[:, 0] - center[0], xy[:, 1] - center[1])
    _, b1, b2 = S.sia_bed_radial_derivs(r / scale, p)
    return S.radial_to_cartesian(xy, center, None, b1 / scale, b2 / scale ** 2)[1:]


def sia_exact_jet(st, p, gamma, center=(0.0, 0.0), scale=1.0):
    """Analytic jet of the manufactured solution over (t, x, y)."""
    xy = st[:, 1:]
    r = np.hypot(xy[:, 0] - center[0], xy[:, 1] - center[1])
    U, U1, U2 = S.sia_u0_radial_derivs(r / scale, p)
    e = np.exp(-gamma * st[:, 0])
    u, grad, hess = S.radial_to_cartesian(xy, center, U * e, U1 * e / scale,
                                          U2 * e / scale ** 2)
    g = np.column_stack([-gamma * u, grad])
    h = np.zeros((len(u), 3, 3))
    h[:, 0, 0] = gamma ** 2 * u
    h[:, 0, 1:] = h[:, 1:, 0] = -gamma * grad
    h[:, 1:, 1:] = hess
    return S.ArrayJet(u, g, h)


def sia_mms(p=4.0, mu=0.01, eps_time=1e-6, gamma=0.5):
    consts = S.SIAConstants(p=p, mu=mu, eps_time=eps_time)
    dom = Disk(1.0)

    def exact(st):
        return S.sia_u_exact(dom.radius_of(st[:, 1:]), st[:, 0], p, gamma)

    def mass_balance(st, consts):
        # manufactured with the problem's own constants
        return S.radial_residual(dom.radius_of(st[:, 1:]), st[:, 0], p, gamma, consts)

    return ProblemSpec(
        name="sia-mms", mode="sia", domain=dom,
        obstacle=lambda st: np.zeros(len(st)),
        forcing=mass_balance,
        boundary_target=exact,
        initial_target=lambda xs: S.sia_u0(dom.radius_of(xs), p),
        exact=exact, gamma=gamma, constants=consts,
        bed_derivs=lambda xy: sia_radial_bed_derivs(xy, p),
        breakpoint_distance=lambda xs: np.minimum(np.abs(dom.radius_of(xs) - S.R_STAR_SIA),
                                                  dom.radius_of(xs)),
        params={"p": p, "mu": mu, "eps_time": eps_time, "gamma": gamma})


def make_problem(name, **kwargs):
    """Build a registered problem.  ``raster`` needs ``data`` (see grid module)."""
    if name == "mms1d":
        return mms1d(**kwargs)
    if name in ("mms2d-case1", "mms2d-case2"):
        return mms2d(int(name[-1]), **kwargs)
    if name == "sia-mms":
        return sia_mms(**kwargs)
    if name == "raster":
        from .grid import raster_problem
        return raster_problem(**kwargs)
    raise KeyError(f"unknown problem {name!r}; known: {', '.join(PROBLEM_IDS)}")
