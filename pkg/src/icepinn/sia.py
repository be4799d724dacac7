"""Transformed shallow-ice physics: time term, flux, and the strong-form residual.

Unknown u relates to ice thickness by H = u^((p-1)/(2p)).  With a frozen
bed and no sliding the PDE in the ice-covered region reads

    d/dt g(u) - div( mu |grad u - Phi|^(p-2) (grad u - Phi) ) = a

with the regularized time term g(u) = (u^2 + eps)^alpha u,
alpha = (3p-1)/(4p) - 1, and Phi = -(2p/(p-1)) u^((p+1)/(2p)) grad b.

Manufactured solution: a radial profile u0(r) decaying as exp(-gamma t) over a
bed b(r) that coincides with u0 on r <= R_STAR_SIA.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jet as J

R_STAR_SIA = 0.75
DELTA_FLUX = 1e-10
P_MIN, P_MAX = 2.8, 5.0


@dataclass(frozen=True)
class SIAConstants:
    p: float = 4.0
    mu: float = 1.0
    eps_time: float = 1e-6
    rho_g: float = 1.0
    softness: float = 0.0
    delta_flux: float = DELTA_FLUX

    def __post_init__(self):
        if not (P_MIN <= self.p <= P_MAX):
            raise ValueError(f"Glen exponent p={self.p} outside [{P_MIN}, {P_MAX}]")
        # mu = 0 (zero softness) and eps_time = 0 are admitted for analysis;
        # eps_time = 0 then fails with a domain error wherever u reaches 0
        if not self.mu >= 0:
            raise ValueError("mu must be nonnegative")
        if not self.eps_time >= 0:
            raise ValueError("eps_time must be nonnegative")
        if self.softness < 0:
            raise ValueError("softness must be nonnegative")

    @property
    def alpha(self):
        return time_exponent(self.p)

    @property
    def phi_coeff(self):
        return 2.0 * self.p / (self.p - 1.0)

    @property
    def phi_power(self):
        return (self.p + 1.0) / (2.0 * self.p)


def time_exponent(p):
    return (3.0 * p - 1.0) / (4.0 * p) - 1.0


def g_time(u, p, eps):
    """(u^2 + eps)^alpha u."""
    u = np.asarray(u, dtype=np.float64)
    base = u * u + eps
    if np.any(base <= 0):
        raise J.NumericDomainError("time term undefined at u = 0 with eps = 0")
    return base ** time_exponent(p) * u


def g_prime(u, p, eps):
    """d/du of :func:`g_time`: (u^2+eps)^(alpha-1) ((u^2+eps) + 2 alpha u^2)."""
    u = np.asarray(u, dtype=np.float64)
    a = time_exponent(p)
    base = u * u + eps
    if np.any(base <= 0):
        raise J.NumericDomainError("time term undefined at u = 0 with eps = 0")
    return base ** (a - 1.0) * (base + 2.0 * a * u * u)


def phi_field(u, grad_b, p):
    """-(2p/(p-1)) max(u,0)^((p+1)/(2p)) grad b; rows of ``grad_b`` are 2-vectors."""
    u = np.asarray(u, dtype=np.float64)
    grad_b = np.asarray(grad_b, dtype=np.float64)
    uc = np.maximum(u, 0.0)
    k = (p + 1.0) / (2.0 * p)
    safe = np.where(uc > 0, uc, 1.0)
    uk = np.where(uc > 0, np.exp(k * np.log(safe)), 0.0)
    return -(2.0 * p / (p - 1.0)) * uk[..., None] * grad_b


def mu_constant(softness, p, rho_g):
    """Flux coefficient for depth-constant softness A: 2 (rho_g (p-1)/(2p))^(p-1) A/(p+1)."""
    if softness < 0 or p <= 1 or rho_g <= 0:
        raise ValueError("need softness >= 0, p > 1, rho_g > 0")
    return 2.0 * (rho_g * (p - 1.0) / (2.0 * p)) ** (p - 1.0) * softness / (p + 1.0)


# manufactured solution ---------------------------------------------------------

def _exps(p):
    return p / (p - 1.0), 1.0 / (p - 1.0)


def _inner(r, p):
    q, a = _exps(p)
    return -r ** q + (1.0 - r) ** q + q * r


def _inner_d1(r, p):
    q, a = _exps(p)
    return q * (1.0 - r ** a - (1.0 - r) ** a)


def _inner_d2(r, p):
    q, a = _exps(p)
    rs = np.where(r > 0, r, np.nan)
    return q * a * ((1.0 - r) ** (a - 1.0) - rs ** (a - 1.0))


def _check(r, p):
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValueError("r must be finite and nonnegative")
    if not (P_MIN <= p <= P_MAX):
        raise ValueError(f"Glen exponent p={p} outside [{P_MIN}, {P_MAX}]")
    return r


def sia_u0(r, p):
    """Initial profile: F/G/E form for r <= 0.75, then its tangent line, floored at 0."""
    r = _check(r, p)
    rin = np.minimum(r, R_STAR_SIA)
    tangent = _inner(R_STAR_SIA, p) + _inner_d1(R_STAR_SIA, p) * (r - R_STAR_SIA)
    return np.where(r <= R_STAR_SIA, _inner(rin, p), np.maximum(tangent, 0.0))


def sia_u0_radial_derivs(r, p):
    """(u0, u0', u0'') in r; u0'' is NaN at r = 0 where it is unbounded."""
    r = _check(r, p)
    rin = np.minimum(r, R_STAR_SIA)
    u = sia_u0(r, p)
    inside = r <= R_STAR_SIA
    d1_out = np.where(u > 0, _inner_d1(R_STAR_SIA, p), 0.0)
    d1 = np.where(inside, _inner_d1(rin, p), d1_out)
    d2 = np.where(inside, _inner_d2(rin, p), 0.0)
    return u, d1, d2


def sia_bed(r, p):
    r = _check(r, p)
    rin = np.minimum(r, R_STAR_SIA)
    return np.where(r <= R_STAR_SIA, _inner(rin, p), 0.0)


def sia_bed_radial_derivs(r, p):
    r = _check(r, p)
    rin = np.minimum(r, R_STAR_SIA)
    inside = r <= R_STAR_SIA
    return (sia_bed(r, p), np.where(inside, _inner_d1(rin, p), 0.0),
            np.where(inside, _inner_d2(rin, p), 0.0))


def sia_u_exact(r, t, p, gamma):
    return sia_u0(r, p) * np.exp(-gamma * np.asarray(t, dtype=np.float64))


def radial_residual(r, t, p, gamma, consts, scale=1.0):
    """u_t-term minus flux divergence for the manufactured solution, in radial form.

    ``scale`` is the physical length of one domain unit's worth of radius: the
    profile is u0(rho / scale) when the domain radius is ``scale``.  Uses
    div(F e_r) = F' + F / rho.  Used as the mass balance that makes the
    manufactured solution exact.
    """
    rho = np.asarray(r, dtype=np.float64)
    rr = rho / scale
    U, U1, U2 = sia_u0_radial_derivs(rr, p)
    _, B1, B2 = sia_bed_radial_derivs(rr, p)
    U1, U2, B1, B2 = U1 / scale, U2 / scale ** 2, B1 / scale, B2 / scale ** 2
    e = np.exp(-gamma * np.asarray(t, dtype=np.float64))
    u, ur, urr, ut = U * e, U1 * e, U2 * e, -gamma * U * e
    k = consts.phi_power
    c = consts.phi_coeff
    uc = np.maximum(u, 0.0)
    safe = np.where(uc > 0, uc, 1.0)
    uk = np.where(uc > 0, safe ** k, 0.0)
    ukm1 = np.where(uc > 0, safe ** (k - 1.0), 0.0)
    V = ur + c * uk * B1
    V1 = urr + c * (k * ukm1 * ur * B1 + uk * B2)
    Q = V * V + consts.delta_flux
    F = consts.mu * Q ** ((p - 2.0) / 2.0) * V
    F1 = consts.mu * Q ** ((p - 4.0) / 2.0) * (Q + (p - 2.0) * V * V) * V1
    div = F1 + F / rho
    return g_prime(uc, p, consts.eps_time) * ut - div


def radial_to_cartesian(xy, center, f0, f1, f2):
    """Value, gradient (N,2) and Hessian (N,2,2) of a radial function f(|xy - center|)."""
    xy = np.asarray(xy, dtype=np.float64)
    dx = xy[:, 0] - center[0]
    dy = xy[:, 1] - center[1]
    r = np.hypot(dx, dy)
    rs = np.where(r > 0, r, 1.0)
    nx, ny = dx / rs, dy / rs
    grad = np.column_stack([f1 * nx, f1 * ny])
    tang = np.where(r > 0, f1 / rs, f2)
    hess = np.empty((len(r), 2, 2))
    hess[:, 0, 0] = f2 * nx * nx + tang * (1.0 - nx * nx)
    hess[:, 1, 1] = f2 * ny * ny + tang * (1.0 - ny * ny)
    hess[:, 0, 1] = hess[:, 1, 0] = (f2 - tang) * nx * ny
    return f0, grad, hess


# residual -----------------------------------------------------------------------

class _NumpyOps:
    @staticmethod
    def max0(a):
        return np.maximum(a, 0.0)

    @staticmethod
    def pos_power(a, e):
        safe = np.where(a > 0, a, 1.0)
        return np.where(a > 0, safe ** e, 0.0)

    @staticmethod
    def power(a, e):
        return a ** e


class _TapeOps:
    max0 = staticmethod(J.max0)
    pos_power = staticmethod(J.pos_power)
    power = staticmethod(J.power)


class ArrayJet:
    """Untaped jet with the accessor interface of :class:`icepinn.jet.Jet`.

    ``grad`` is (N, d) and ``hess`` (N, d, d) over inputs (t, x, y).
    """

    def __init__(self, value, grad, hess):
        self.value_ = np.asarray(value, dtype=np.float64)
        self.grad_ = np.asarray(grad, dtype=np.float64)
        self.hess_ = np.asarray(hess, dtype=np.float64)
        self.d = self.grad_.shape[1]

    def u(self):
        return self.value_

    def d1(self, i):
        return self.grad_[:, i]

    def d2(self, i, j):
        return self.hess_[:, i, j]


SIA_PAIRS = [(1, 1), (1, 2), (2, 2)]


def residual_sia(jet, consts, bed_grad, bed_hess, mass_balance):
    """Strong-form residual g'(u) u_t - div(flux) - a at each point.

    ``jet`` is a network jet over (t, x, y) carrying Hessian pairs
    (1,1), (1,2), (2,2), or an :class:`ArrayJet`.  ``bed_grad`` (N,2) and
    ``bed_hess`` (N,2,2) are spatial bed derivatives; ``mass_balance`` (N,).
    u is clamped at 0 inside every power law.
    """
    ops = _NumpyOps if isinstance(jet, ArrayJet) else _TapeOps
    p = consts.p
    k, c = consts.phi_power, consts.phi_coeff
    a = consts.alpha
    u = jet.u()
    uc = ops.max0(u)
    ut, ux, uy = jet.d1(0), jet.d1(1), jet.d1(2)
    uxx, uxy, uyy = jet.d2(1, 1), jet.d2(1, 2), jet.d2(2, 2)
    bx, by = bed_grad[:, 0], bed_grad[:, 1]
    bxx, bxy, byy = bed_hess[:, 0, 0], bed_hess[:, 0, 1], bed_hess[:, 1, 1]

    base = uc * uc + consts.eps_time
    gp = ops.power(base, a - 1.0) * (base + 2.0 * a * uc * uc)
    time_term = gp * ut

    uk = ops.pos_power(u, k)
    ukm1 = ops.pos_power(u, k - 1.0)
    # V = grad u - Phi, Phi = -c u^k grad b
    vx = ux + c * uk * bx
    vy = uy + c * uk * by
    ck = c * k * ukm1
    vxx = uxx + ck * ux * bx + c * uk * bxx
    vxy = uxy + ck * uy * bx + c * uk * bxy  # d/dy of vx
    vyx = uxy + ck * ux * by + c * uk * bxy  # d/dx of vy
    vyy = uyy + ck * uy * by + c * uk * byy
    qn = vx * vx + vy * vy + consts.delta_flux
    s = ops.power(qn, (p - 2.0) / 2.0)
    s_prime = ops.power(qn, (p - 4.0) / 2.0)
    div_v = vxx + vyy
    # sum_j V_j d_j q with d_j q = 2 (vx d_j vx + vy d_j vy)
    vdq = 2.0 * (vx * (vx * vxx + vy * vyx) + vy * (vx * vxy + vy * vyy))
    div_flux = consts.mu * (s * div_v + 0.5 * (p - 2.0) * s_prime * vdq)
    return time_term - div_flux - mass_balance

