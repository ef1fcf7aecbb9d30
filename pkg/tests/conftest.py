import pytest

from drawdown_tracking import DualSolution, PrimalPolicy
from drawdown_tracking.presets import FIG1, FIG2, FIG3


@pytest.fixture(scope="session")
def fig1_policy():
    return PrimalPolicy(FIG1)


@pytest.fixture(scope="session")
def fig2_policy():
    return PrimalPolicy(FIG2)


@pytest.fixture(scope="session")
def fig2_dual(fig2_policy):
    return fig2_policy.dual


@pytest.fixture(scope="session")
def fig3_dual():
    return DualSolution(FIG3)


@pytest.fixture(scope="session")
def fm_dual():
    # steeper risk aversion, as in the free-boundary plot
    return DualSolution(FIG2.replace(p=-2.0, mu_Z=0.5, sigma_Z=0.5))


@pytest.fixture(scope="session")
def nodd_policy():
    return PrimalPolicy(FIG2.replace(lam=0.0))


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line; all lines are echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def emit(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print("\n" + line)

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
