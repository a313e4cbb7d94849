import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xbm.matrix import SparseObservable, gen_random_band, gen_random_sparse
from xbm.simulator import Statevector

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE_LINES = []


def dense_expectation(a: SparseObservable, bra: Statevector, ket: Statevector = None) -> complex:
    ket = bra if ket is None else ket
    return complex(np.vdot(bra.data, a.to_dense() @ ket.data))


def haar_state(n: int, seed: int) -> Statevector:
    rng = np.random.default_rng(seed)
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return Statevector(v / np.linalg.norm(v))


def random_case(n: int, seed: int, shape: str, hermitian: bool) -> SparseObservable:
    """One random observable of the requested shape: dense, band or sparse."""
    rng = np.random.default_rng(seed)
    kind = "hermitian" if hermitian else "complex"
    dim = 1 << n
    if shape == "dense":
        return gen_random_sparse(n, dim * dim, seed=seed, kind=kind)
    if shape == "band":
        return gen_random_band(n, int(rng.integers(0, dim)), seed=seed, kind=kind)
    return gen_random_sparse(n, int(rng.integers(1, dim * dim + 1)), seed=seed, kind=kind)


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the test still asserts on its own."""

    def record(cid: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {cid}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
