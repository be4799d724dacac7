import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icepinn import oracle as O
from icepinn import parabolic as P


def _zero(t, x):
    return np.zeros_like(x)


def test_heat_kernel_decay():
    grid = O.solve_obstacle_fd(lambda t, x: np.full_like(x, -1e6), _zero, _zero,
                               lambda x: np.sin(np.pi * x), nx=201, nt=1000, T=0.1)
    x = grid.xs()
    want = np.exp(-np.pi ** 2 * 0.1) * np.sin(np.pi * x)
    mid = slice(1, -1)
    assert np.max(np.abs(grid.values[-1, mid] / want[mid] - 1)) <= 0.02


def test_constant_fixed_point():
    c = 0.7
    const = lambda t, x: np.full_like(x, c)  # noqa: E731
    grid = O.solve_obstacle_fd(const, _zero, const, lambda x: np.full_like(x, c), 21, 30)
    assert np.all(grid.values == c)


def test_grid_shape_and_boundary_rows():
    g = lambda t, x: np.full_like(x, 1.0 + t)  # noqa: E731
    grid = O.solve_obstacle_fd(lambda t, x: np.zeros_like(x), _zero, g,
                               lambda x: np.full_like(x, 1.0), nx=11, nt=7)
    assert grid.values.shape == (8, 11) and grid.nt == 7 and grid.nx == 11
    assert grid.dx == 0.1 and grid.dt == pytest.approx(1 / 7)
    np.testing.assert_array_equal(grid.values[1:, 0], 1.0 + grid.ts()[1:])
    np.testing.assert_array_equal(grid.values[1:, -1], 1.0 + grid.ts()[1:])


def test_bad_sizes():
    with pytest.raises(ValueError):
        O.solve_obstacle_fd(_zero, _zero, _zero, lambda x: 0 * x, nx=2, nt=5)
    with pytest.raises(ValueError):
        O.solve_obstacle_fd(_zero, _zero, _zero, lambda x: 0 * x, nx=5, nt=0)


@pytest.fixture(scope="module")
def mms_grid():
    return O.solve_mms1d(nx=401, nt=2000)


def test_mms1d_matches_exact(mms_grid):
    assert O.grid_l1(mms_grid, O.exact_on_fd(mms_grid)) <= 0.02


def test_mms1d_obstacle_and_boundary(mms_grid):
    psi = P.psi_1d(mms_grid.xs())
    assert np.min(mms_grid.values[1:] - psi) >= -1e-12
    ts = mms_grid.ts()
    np.testing.assert_array_equal(mms_grid.values[:, 0], P.u_exact_1d(0.0, ts))
    np.testing.assert_array_equal(mms_grid.values[:, -1], P.u_exact_1d(1.0, ts))


def test_refinement_trend():
    # compare coarse solutions on the shared nodes of the coarsest grid
    sols = {nx: O.solve_mms1d(nx=nx, nt=400) for nx in (101, 201, 401)}
    a = sols[101].values
    b = sols[201].values[:, ::2]
    c = sols[401].values[:, ::4]
    assert O.grid_l1(a, b) > O.grid_l1(b, c)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_comparison_principle(seed):
    rng = np.random.default_rng(seed)
    nx, nt = 31, 40
    coeff = rng.normal(size=3)
    psi = lambda t, x: 0.3 * np.sin(np.pi * x) * coeff[0] - 0.2  # noqa: E731
    f = lambda t, x: coeff[1] * np.cos(3 * x) + coeff[2] * t  # noqa: E731
    base = rng.uniform(0, 1, nx)
    bump = rng.uniform(0, 0.5, nx)
    bump[[0, -1]] = 0.0
    g = lambda t, x: np.full_like(x, base[0]) * 0 + np.where(x < 0.5, base[0], base[-1])  # noqa: E731
    lo = O.solve_obstacle_fd(psi, f, g, lambda x: base, nx, nt)
    hi = O.solve_obstacle_fd(psi, f, g, lambda x: base + bump, nx, nt)
    assert np.all(hi.values >= lo.values - 1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_projection_idempotent(seed):
    rng = np.random.default_rng(seed)
    u, psi = rng.normal(size=50), rng.normal(size=50)
    once = O.project(u, psi)
    assert np.array_equal(O.project(once, psi), once)
    assert np.all(once >= psi)


def test_grid_l1_examples():
    a = np.random.default_rng(0).normal(size=(4, 6))
    assert O.grid_l1(a, a) == 0.0
    assert O.grid_l1(a, a + 1) == pytest.approx(1.0, abs=1e-15)
    checker = np.where((np.add.outer(np.arange(4), np.arange(6)) % 2) == 0, 1.0, -1.0)
    assert O.grid_l1(checker, np.zeros((4, 6))) == 1.0
    with pytest.raises(ValueError):
        O.grid_l1(a, a[:, :5])


def test_to_raster_axes():
    grid = O.FDGrid(np.arange(12.0).reshape(3, 4), T=0.5)
    r = grid.to_raster()
    assert r.shape == (3, 4) and r.dx == pytest.approx(1 / 3) and r.dy == 0.25
    assert np.array_equal(r.values, grid.values)


def test_forcing_nodes_on_kink():
    x = np.array([P.X_LEFT, 0.5])
    f = O._forcing_1d_nodes(0.3, x, P.GAMMA_1D)
    assert np.all(np.isfinite(f))
