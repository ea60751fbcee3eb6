import numpy as np
import pytest

from simcse_forge.autograd import Tensor, finite_diff_grad


def rel_grad_error(g_ad: np.ndarray, g_fd: np.ndarray) -> float:
    """Worst per-coordinate |g_ad - g_fd| / max(1, |g_fd|)."""
    g_ad = np.asarray(g_ad, dtype=np.float64)
    g_fd = np.asarray(g_fd, dtype=np.float64)
    return float(np.max(np.abs(g_ad - g_fd) / np.maximum(1.0, np.abs(g_fd))))


def check_grad(f, x: Tensor, tol: float = 1e-4, h: float = 1e-5) -> float:
    """Compare autodiff gradient of f w.r.t. x against central differences."""
    x.grad = None
    f(x).backward()
    err = rel_grad_error(x.grad, finite_diff_grad(f, x, h).data)
    assert err < tol, f"gradient mismatch: rel error {err:.3e} >= {tol}"
    return err


# -- acceptance summary ------------------------------------------------------
# Tests named test_criterion_* in test_acceptance.py get one pass/fail line
# each in the terminal summary.

_criterion_results: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.name.startswith("test_criterion_"):
        _criterion_results[item.name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criterion_results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criterion_results):
        label = name.removeprefix("test_criterion_")
        terminalreporter.write_line(f"{label}: {_criterion_results[name]}")
