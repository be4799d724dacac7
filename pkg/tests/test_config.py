import pytest

from icepinn import config as C


def test_defaults_roundtrip():
    cfg = C.RunConfig()
    back = C.parse_config(cfg.to_text())
    assert back == cfg


def test_parse_values_and_comments():
    text = """
    # a comment
    problem = sia-mms
    hidden_layers = 3   # trailing
    width = 16
    penalty_coeff = 1e-3
    milestones = 100:0.5 200:0.5
    mu_list = 5e-6, 5e-4 2.0
    lr = auto
    deterministic = yes
    init_scheme = uniform-bias
    """
    cfg = C.parse_config(text)
    assert cfg.problem == "sia-mms" and cfg.hidden_layers == 3 and cfg.width == 16
    assert cfg.penalty_coeff == 1e-3
    assert cfg.milestones == [(100, 0.5), (200, 0.5)]
    assert cfg.mu_list == [5e-6, 5e-4, 2.0]
    assert cfg.lr is None and cfg.deterministic and cfg.init_scheme == "uniform-bias"
    assert C.parse_config(cfg.to_text()) == cfg


@pytest.mark.parametrize("text", [
    "bogus = 1",
    "width = 3\nwidth = 4",
    "width = three",
    "problem = heat",
    "activation = relu",
    "lr_profile = cosine",
    "mass_balance = lots",
    "init_scheme = xavier",
    "width = 0",
    "iterations = -1",
    "alpha = -1",
    "alpha = 0\nbeta = 0\ngamma_w = 0\ndelta = 0\npenalty_coeff = 0",
    "just words",
    "deterministic = maybe",
])
def test_rejects(text):
    with pytest.raises(C.ConfigError):
        C.parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(C.ConfigError):
        C.load_config(tmp_path / "nope.txt")


def test_profile_and_problem():
    assert C.RunConfig().profile() == "mms"
    assert C.RunConfig(problem="raster").profile() == "raster"
    cfg = C.parse_config("problem = sia-mms\np = 2.8\nmu = 0.02")
    prob = C.build_problem(cfg)
    assert prob.constants.p == 2.8 and prob.constants.mu == 0.02
    assert C.architecture(cfg, prob).input_dim == 3
    prob = C.build_problem(C.parse_config("problem = mms2d-case2\ngamma = 0.3"))
    assert prob.gamma == 0.3


def test_weights_and_sizes():
    cfg = C.parse_config("beta = 10\nn_pde = 7")
    assert cfg.weights().beta == 10.0 and cfg.sizes() == (7, 1000, 1000)
