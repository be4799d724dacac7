import numpy as np
import pytest

from icepinn.network import ArchitectureSpec, init_params


def central_diff(f, x, h):
    """Gradient of scalar f at x by central differences."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


@pytest.fixture
def tiny_tanh_net():
    return init_params(ArchitectureSpec(2, 2, 6, "tanh"), 3)


def random_tanh_net(rng, input_dim):
    layers = int(rng.integers(1, 4))
    width = int(rng.integers(2, 9))
    spec = ArchitectureSpec(input_dim, layers, width, "tanh")
    params = init_params(spec, int(rng.integers(0, 2**31)))
    # nonzero biases and O(1) weights so second derivatives are not tiny
    params.weights = [w * 1.5 for w in params.weights]
    params.biases = [rng.normal(0, 0.5, size=b.shape) for b in params.biases]
    return params


ACCEPTANCE = {}


def record(criterion, ok, detail):
    """Acceptance outcome, printed in the terminal summary."""
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
