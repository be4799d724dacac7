"""Projected implicit-Euler finite differences for the 1D parabolic obstacle problem."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from . import parabolic as P


@dataclass
class FDGrid:
    values: np.ndarray      # (nt + 1, nx)
    T: float = 1.0

    @property
    def nt(self):
        return self.values.shape[0] - 1

    @property
    def nx(self):
        return self.values.shape[1]

    @property
    def dx(self):
        return 1.0 / (self.nx - 1)

    @property
    def dt(self):
        return self.T / self.nt

    def xs(self):
        return np.linspace(0.0, 1.0, self.nx)

    def ts(self):
        return np.linspace(0.0, self.T, self.nt + 1)

    def to_raster(self):
        """As a RasterGrid with x along columns and t along rows."""
        from .grid import RasterGrid
        return RasterGrid(self.values, 0.0, 0.0, self.dx, self.dt)


def project(u, psi):
    return np.maximum(u, psi)


def solve_obstacle_fd(psi, f, g, u0, nx, nt, T=1.0):
    """March u_t = u_xx + f on [0,1] with u >= psi.

    ``psi(t, x)``, ``f(t, x)``, ``g(t, x)`` take a scalar t and the node array;
    ``u0(x)`` gives the initial state.  Each step solves
    (I - dt D2) u+ = u + dt f(t+) with Dirichlet rows pinned to g, then projects.
    """
    if nx < 3 or nt < 1:
        raise ValueError("need nx >= 3 and nt >= 1")
    x = np.linspace(0.0, 1.0, nx)
    dx = 1.0 / (nx - 1)
    dt = T / nt
    assert dt > 0
    lam = dt / dx ** 2
    ab = np.zeros((3, nx))
    ab[0, 2:] = -lam
    ab[1, :] = 1.0 + 2.0 * lam
    ab[2, :-2] = -lam
    ab[1, 0] = ab[1, -1] = 1.0
    out = np.empty((nt + 1, nx))
    u = np.asarray(u0(x), dtype=np.float64).copy()
    out[0] = u
    for n in range(1, nt + 1):
        t = n * dt
        rhs = u + dt * f(t, x)
        gb = g(t, x)
        rhs[0], rhs[-1] = gb[0], gb[-1]
        u = solve_banded((1, 1), ab, rhs, check_finite=False)
        u = project(u, psi(t, x))
        u[0], u[-1] = gb[0], gb[-1]
        out[n] = u
    return FDGrid(out, T)


def _forcing_1d_nodes(t, x, gamma):
    # nodes may land on the kinks; use the one-sided (left) branch there
    xs = np.where(P.breakpoint_distance_1d(x) <= P.BREAK_TOL, x - 1e-9, x)
    return P.forcing_1d(xs, t, gamma)


def solve_mms1d(nx=401, nt=2000, gamma=P.GAMMA_1D):
    """Oracle run on the 1D test data: its obstacle, forcing, and exact boundary/initial values."""
    return solve_obstacle_fd(
        psi=lambda t, x: P.psi_1d(x),
        f=lambda t, x: _forcing_1d_nodes(t, x, gamma),
        g=lambda t, x: P.u_exact_1d(x, t, gamma),
        u0=lambda x: P.u_exact_1d(x, 0.0, gamma),
        nx=nx, nt=nt)


def exact_on_fd(grid, gamma=P.GAMMA_1D):
    X, Tt = np.meshgrid(grid.xs(), grid.ts())
    return P.u_exact_1d(X, Tt, gamma)


def grid_l1(a, b):
    """Mean absolute difference over all entries."""
    av = a.values if hasattr(a, "values") else np.asarray(a, dtype=np.float64)
    bv = b.values if hasattr(b, "values") else np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise ValueError(f"shape mismatch {av.shape} vs {bv.shape}")
    return float(np.mean(np.abs(av - bv)))


def network_on_fd(params, grid):
    """Network values on the FD space-time nodes, shape (nt + 1, nx)."""
    from .network import predict
    X, Tt = np.meshgrid(grid.xs(), grid.ts())
    return predict(params, np.column_stack([Tt.ravel(), X.ravel()])).reshape(X.shape)
