import numpy as np
import pytest

from labnav import autodiff as ad


def numeric_grad(f, x: np.ndarray, h: float = 1e-5, idx=None) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x`` (optionally at selected flat indices)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size) if idx is None else idx:
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def numeric_grad_smooth(f, x: np.ndarray, h: float = 1e-5, idx=None):
    """Central differences plus a mask of stencils that stay on one smooth piece.

    ``f`` is evaluated under :func:`ad.branch_recorder`; a stencil whose
    +h or -h evaluation makes different discrete choices than the base point
    straddles a kink and is flagged False.
    """
    def run():
        with ad.branch_recorder() as rec:
            v = f()
        return v, rec

    _, base = run()
    g = np.zeros_like(x)
    smooth = np.ones(x.shape, dtype=bool)
    flat, gflat, sflat = x.reshape(-1), g.reshape(-1), smooth.reshape(-1)
    for i in range(flat.size) if idx is None else idx:
        old = flat[i]
        flat[i] = old + h
        fp, rp = run()
        flat[i] = old - h
        fm, rm = run()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
        sflat[i] = rp == base and rm == base
    return g, smooth


def rel_err(a, b, floor: float = 1e-8) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(build, arrays, h=1e-5, tol=1e-4):
    """``build(*tensors)`` -> scalar Tensor; compare tape grads with central differences."""
    ts = [ad.Tensor(a, requires_grad=True) for a in arrays]
    ad.backward(build(*ts))
    for t in ts:
        def f(t=t):
            with ad.no_grad():
                return float(build(*ts).data)
        num = numeric_grad(f, t.data, h)
        err = rel_err(t.grad, num)
        assert err.max() <= tol, (err.max(), t.grad, num)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _fresh_tape():
    ad.get_tape().clear()
    yield
    ad.get_tape().clear()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
