import numpy as np
import pytest

from pelspeech.autodiff import Tensor, numerical_grad, relative_error


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def check_grads(f, tensors, h=1e-5):
    """Max norm-wise relative error between backward() and central differences."""
    for t in tensors:
        t.grad = None
    f().backward()
    worst = 0.0
    for t in tensors:
        num = numerical_grad(f, t, h)
        worst = max(worst, relative_error(t.grad, num))
    return worst


def param(rng, *shape, scale=1.0):
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True, dtype=np.float64)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line (shown in the terminal summary) and assert on it."""

    def record(name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
        request.config.stash[ACCEPTANCE_KEY].append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
