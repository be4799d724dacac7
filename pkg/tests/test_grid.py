import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icepinn import grid as G
from icepinn import sia as S
from icepinn.network import ArchitectureSpec, init_params
from icepinn.problems import sia_exact_jet
from icepinn.grid import GridFormatError, RasterGrid


# file format ---------------------------------------------------------------------------

def _roundtrip(grid, tmp_path):
    path = tmp_path / "g.grid"
    G.write_grid(grid, path)
    return G.read_grid(path)


def _same(a, b):
    return (np.array_equal(a.values, b.values) and a.x0 == b.x0 and a.y0 == b.y0
            and a.dx == b.dx and a.dy == b.dy and a.nodata == b.nodata)


def test_one_by_one_roundtrip(tmp_path):
    g = RasterGrid(np.zeros((1, 1)))
    assert _same(g, _roundtrip(g, tmp_path))


def test_nodata_roundtrip(tmp_path):
    g = RasterGrid(np.array([[1.5, -9999.0, 2.0], [0.1, 0.2, 1 / 3]]), 0.0, 0.0, 0.5, 1.0)
    back = _roundtrip(g, tmp_path)
    assert _same(g, back) and back.valid().sum() == 5


def test_header_parse(tmp_path):
    path = tmp_path / "h.grid"
    path.write_text("nx=3 ny=2 x0=0 y0=0 dx=0.5 dy=1.0 nodata=-9999\n1 2 3\n4 5 6\n")
    g = G.read_grid(path)
    assert (g.nx, g.ny, g.x0, g.y0, g.dx, g.dy, g.nodata) == (3, 2, 0.0, 0.0, 0.5, 1.0, -9999.0)
    assert g.values[1].tolist() == [4.0, 5.0, 6.0]


@pytest.mark.parametrize("text", [
    "",
    "nx=3 ny=2 x0=0 y0=0 dx=0.5 dy=1.0\n1 2 3\n4 5 6\n",
    "nx=3 ny=2 x0=0 y0=0 dx=0.5 dy=1.0 nodata=-9999 extra=1\n1 2 3\n4 5 6\n",
    "nx=3 ny=2 x0=0 y0=0 dx=0.5 dy=1.0 nodata=-9999\n1 2 3\n4 5\n",
    "nx=3 ny=2 x0=0 y0=0 dx=0.5 dy=1.0 nodata=-9999\n1 2 3\n",
    "nx=3 ny=2 x0=0 y0=0 dx=0.5 dy=1.0 nodata=-9999\n1 2 3\n4 five 6\n",
    "nx=three ny=2 x0=0 y0=0 dx=0.5 dy=1.0 nodata=-9999\n1 2 3\n4 5 6\n",
    "nx 3\n",
])
def test_malformed(tmp_path, text):
    path = tmp_path / "bad.grid"
    path.write_text(text)
    with pytest.raises(GridFormatError):
        G.read_grid(path)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), nx=st.integers(1, 9), ny=st.integers(1, 9))
def test_roundtrip_property(tmp_path_factory, seed, nx, ny):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(ny, nx)) * 10.0 ** rng.integers(-8, 8, size=(ny, nx))
    vals[rng.random((ny, nx)) < 0.2] = -9999.0
    g = RasterGrid(vals, rng.normal(), rng.normal(), rng.uniform(1e-3, 2), rng.uniform(1e-3, 2))
    assert _same(g, _roundtrip(g, tmp_path_factory.mktemp("rt")))


def test_grid_validation():
    with pytest.raises(ValueError):
        RasterGrid(np.zeros(3))
    with pytest.raises(ValueError):
        RasterGrid(np.zeros((2, 2)), dx=0.0)


# interpolation --------------------------------------------------------------------------

def _affine_grid(nx=7, ny=5):
    g = RasterGrid(np.zeros((ny, nx)), 0.2, -0.4, 0.25, 0.3)
    xy = g.nodes()
    return g.like((xy[:, 0] + 2 * xy[:, 1]).reshape(ny, nx))


def test_sample_at_nodes_exact():
    g = RasterGrid(np.random.default_rng(0).normal(size=(4, 5)), 1.0, 2.0, 0.5, 0.25)
    xy = g.nodes()
    assert np.array_equal(G.bilinear_sample(g, xy[:, 0], xy[:, 1]), g.values.ravel())


def test_constant_grid():
    g = RasterGrid(np.full((4, 4), 3.25))
    assert np.all(G.bilinear_sample(g, [0.3, 2.9], [1.7, 0.0]) == 3.25)
    assert np.all(G.bilinear_gradient(g, [0.3, 2.9], [1.7, 0.0]) == 0)


def test_affine_midcell():
    g = _affine_grid()
    x = g.x0 + g.dx * (np.arange(6) + 0.5)
    y = g.y0 + g.dy * (np.arange(6) % 4 + 0.5)
    np.testing.assert_allclose(G.bilinear_sample(g, x, y), x + 2 * y, rtol=0, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(fx=st.floats(0, 1), fy=st.floats(0, 1), a=st.floats(-5, 5), b=st.floats(-5, 5),
       c=st.floats(-5, 5))
def test_affine_reproduction_property(fx, fy, a, b, c):
    g = RasterGrid(np.zeros((5, 6)), -1.0, 0.5, 0.4, 0.2)
    xy = g.nodes()
    g = g.like((a + b * xy[:, 0] + c * xy[:, 1]).reshape(5, 6))
    x = g.x0 + fx * g.dx * 5
    y = g.y0 + fy * g.dy * 4
    assert G.bilinear_sample(g, x, y)[0] == pytest.approx(a + b * x + c * y, abs=1e-12)
    np.testing.assert_allclose(G.bilinear_gradient(g, x, y)[0], [b, c], atol=1e-12)


def test_sampling_errors():
    g = RasterGrid(np.array([[1.0, 2.0], [3.0, -9999.0]]))
    with pytest.raises(ValueError):
        G.bilinear_sample(g, 0.5, 0.5)
    with pytest.raises(ValueError):
        G.bilinear_sample(_affine_grid(), 100.0, 0.0)


def test_bed_sampler_quadratic():
    # np.gradient is exact for quadratics in the interior, so is the Hessian
    g = RasterGrid(np.zeros((41, 41)), 0.0, 0.0, 0.025, 0.025)
    xy = g.nodes()
    bed = g.like((0.5 * xy[:, 0] ** 2 + 0.3 * xy[:, 0] * xy[:, 1] - xy[:, 1] ** 2).reshape(41, 41))
    grad, hess = G.BedSampler(bed)(np.array([[0.41, 0.53], [0.7, 0.2]]))
    np.testing.assert_allclose(grad[0], [0.41 + 0.3 * 0.53, 0.3 * 0.41 - 2 * 0.53], atol=1e-12)
    np.testing.assert_allclose(hess[1], [[1.0, 0.3], [0.3, -2.0]], atol=1e-10)


# raster data ------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def synth():
    return G.synthetic_raster()


def test_synthetic_properties(synth):
    assert np.all(synth.thickness_t0.values >= synth.bed.values - 1e-12)
    c = synth.thickness_t0.values[32, 32]
    assert c == pytest.approx(1.0, abs=1e-12)
    assert np.all(synth.thickness_tT.values <= synth.thickness_t0.values)
    assert synth.meta["gamma"] > 0


def test_synthetic_bed_continuous():
    r = np.linspace(0, 3, 30001)
    b = G.synthetic_bed_radial(r, 4.0)
    assert np.max(np.abs(np.diff(b))) < 1e-3
    assert np.all(b[r > S.R_STAR_SIA] == 0)


def test_synthetic_gamma_zero_and_determinism(tmp_path):
    d0 = G.synthetic_raster(gamma=0.0, nx=17, ny=19)
    assert np.array_equal(d0.thickness_tT.values, d0.thickness_t0.values)
    a, b = tmp_path / "a", tmp_path / "b"
    G.write_raster_data(G.synthetic_raster(nx=17, ny=17), a)
    G.write_raster_data(G.synthetic_raster(nx=17, ny=17), b)
    for f in list(G.GRID_FILES.values()) + [G.MANIFEST]:
        assert (a / f).read_bytes() == (b / f).read_bytes()
    with pytest.raises(ValueError):
        G.synthetic_raster(nx=15)


def test_raster_data_roundtrip(tmp_path, synth):
    G.write_raster_data(synth, tmp_path)
    back = G.read_raster_data(tmp_path)
    for key in G.GRID_FILES:
        assert _same(getattr(back, key), getattr(synth, key))
    assert float(back.meta["mu_star"]) == synth.meta["mu_star"]
    assert back.year_to_t(2018.0) == 1.0 and back.year_to_t(2009.0) == 0.5


def test_raster_data_validation(synth):
    bad = RasterGrid(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        G.RasterProblemData(synth.thickness_t0, bad, synth.bed)
    neg = synth.thickness_t0.like(-np.ones(synth.thickness_t0.shape))
    with pytest.raises(ValueError):
        G.RasterProblemData(neg, synth.thickness_tT, synth.bed)


def test_calibrated_mass_balance_consistency(synth):
    # at mu_star the exact synthetic field satisfies the raster problem's PDE
    prob = G.raster_problem(synth, mu=synth.meta["mu_star"])
    rng = np.random.default_rng(0)
    xy = rng.uniform(0.1, 0.9, size=(500, 2))
    st_ = np.column_stack([rng.uniform(0.05, 1, 500), xy])
    jet = sia_exact_jet(st_, 4.0, synth.meta["gamma"], G.SYNTH_CENTER, G.SYNTH_SCALE)
    g, h = prob.bed_derivs(xy)
    res = S.residual_sia(jet, prob.constants, g, h, prob.forcing_at(st_))
    assert np.max(np.abs(res)) <= 1e-9
    other = G.raster_problem(synth, mu=10 * synth.meta["mu_star"])
    res2 = S.residual_sia(jet, other.constants, g, h, other.forcing_at(st_))
    assert np.max(np.abs(res2)) > 1e-3


def test_raster_problem_targets(synth):
    prob = G.raster_problem(synth)
    xy = synth.thickness_t0.nodes()
    np.testing.assert_array_equal(prob.initial_target(xy), synth.thickness_t0.values.ravel())
    assert prob.domain.x1 == 1.0 and prob.domain.y1 == 1.0
    with pytest.raises(ValueError):
        G.raster_problem(synth, mass_balance="lots")


# evaluation -----------------------------------------------------------------------------

def test_l1_vs_examples(synth):
    g = synth.thickness_t0
    assert G.l1_vs(g, g) == 0.0
    assert G.l1_vs(g, g.like(g.values + 2.0)) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        G.l1_vs(g, g, mask=np.zeros(g.shape, bool))
    with pytest.raises(ValueError):
        G.l1_vs(g, RasterGrid(np.zeros((2, 2))))
    masked = g.like(np.where(np.arange(g.values.size).reshape(g.shape) % 2, g.nodata, g.values))
    assert G.l1_vs(masked, g.like(g.values + 1)) == 1.0


def test_eval_on_grid_shape(synth):
    p = init_params(ArchitectureSpec(3, 2, 8), 0, "uniform-bias")
    out = G.eval_on_grid(p, synth.thickness_tT, 1.0)
    assert out.same_frame(synth.thickness_tT)
    assert np.all(np.isfinite(out.values))
