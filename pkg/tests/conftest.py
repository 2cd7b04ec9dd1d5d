import pytest

from cohscat import fig2_config, run_protocol
from cohscat.fock import SpaceLayout

_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def fig2_both():
    """Reference configuration, both engines, 1 ms read-out (about half a minute).

    Pinned to the bundled layout (one photon, two phonons per particle).
    """
    return run_protocol(fig2_config(), SpaceLayout.uniform(2, 2), engine="both", horizon=1e-3)


@pytest.fixture
def verdict():
    """Record a one-line PASS/FAIL verdict; the lines are repeated in the terminal summary."""
    def record(number: int, title: str, ok: bool, detail: str) -> str:
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} | {detail}"
        print(line)
        _VERDICTS.append(line)
        return line
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
