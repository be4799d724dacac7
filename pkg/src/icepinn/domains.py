"""Spatial domains with uniform interior and boundary samplers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Interval:
    lo: float = 0.0
    hi: float = 1.0
    dim = 1

    def sample_interior(self, rng, n):
        x = rng.uniform(self.lo, self.hi, size=n)
        # open interval: uniform() may return lo exactly
        bad = (x <= self.lo) | (x >= self.hi)
        while np.any(bad):
            x[bad] = rng.uniform(self.lo, self.hi, size=bad.sum())
            bad = (x <= self.lo) | (x >= self.hi)
        return x[:, None]

    def sample_boundary(self, rng, n):
        return np.where(rng.random(n) < 0.5, self.lo, self.hi)[:, None]

    def contains(self, x, strict=True):
        x = np.asarray(x)[..., 0]
        return (x > self.lo) & (x < self.hi) if strict else (x >= self.lo) & (x <= self.hi)

    def on_boundary(self, x, tol=1e-12):
        x = np.asarray(x)[..., 0]
        return (np.abs(x - self.lo) <= tol) | (np.abs(x - self.hi) <= tol)


@dataclass(frozen=True)
class Disk:
    radius: float = 1.0
    center: tuple = (0.0, 0.0)
    dim = 2

    def sample_interior(self, rng, n):
        r = self.radius * np.sqrt(rng.random(n))
        r = np.minimum(r, np.nextafter(self.radius, 0.0))
        th = rng.uniform(0.0, 2.0 * np.pi, size=n)
        return np.column_stack([self.center[0] + r * np.cos(th), self.center[1] + r * np.sin(th)])

    def sample_boundary(self, rng, n):
        th = rng.uniform(0.0, 2.0 * np.pi, size=n)
        return np.column_stack([self.center[0] + self.radius * np.cos(th),
                                self.center[1] + self.radius * np.sin(th)])

    def radius_of(self, xy):
        xy = np.asarray(xy)
        return np.hypot(xy[..., 0] - self.center[0], xy[..., 1] - self.center[1])

    def contains(self, xy, strict=True):
        r = self.radius_of(xy)
        return r < self.radius if strict else r <= self.radius * (1 + 1e-12)

    def on_boundary(self, xy, tol=1e-12):
        return np.abs(self.radius_of(xy) - self.radius) <= tol * max(1.0, self.radius)


@dataclass(frozen=True)
class Rectangle:
    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0
    dim = 2

    def sample_interior(self, rng, n):
        x = rng.uniform(self.x0, self.x1, size=n)
        y = rng.uniform(self.y0, self.y1, size=n)
        return np.column_stack([x, y])

    def sample_boundary(self, rng, n):
        wx, wy = self.x1 - self.x0, self.y1 - self.y0
        s = rng.uniform(0.0, 2.0 * (wx + wy), size=n)
        x = np.empty(n)
        y = np.empty(n)
        edges = np.cumsum([wx, wy, wx, wy])
        e0 = s < edges[0]
        e1 = (s >= edges[0]) & (s < edges[1])
        e2 = (s >= edges[1]) & (s < edges[2])
        e3 = s >= edges[2]
        x[e0], y[e0] = self.x0 + s[e0], self.y0
        x[e1], y[e1] = self.x1, self.y0 + (s[e1] - edges[0])
        x[e2], y[e2] = self.x1 - (s[e2] - edges[1]), self.y1
        x[e3], y[e3] = self.x0, self.y1 - (s[e3] - edges[2])
        return np.column_stack([x, y])

    def contains(self, xy, strict=True):
        xy = np.asarray(xy)
        x, y = xy[..., 0], xy[..., 1]
        if strict:
            return (x > self.x0) & (x < self.x1) & (y > self.y0) & (y < self.y1)
        return (x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)

    def on_boundary(self, xy, tol=1e-12):
        xy = np.asarray(xy)
        x, y = xy[..., 0], xy[..., 1]
        near = ((np.abs(x - self.x0) <= tol) | (np.abs(x - self.x1) <= tol)
                | (np.abs(y - self.y0) <= tol) | (np.abs(y - self.y1) <= tol))
        return near & self.contains(xy, strict=False)
