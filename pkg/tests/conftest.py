import pytest

from fefet_tdimc.config import ExperimentConfig
from fefet_tdimc.experiments import ensure_presets


@pytest.fixture(scope="session")
def fitted_cfg():
    return ensure_presets(ExperimentConfig())


@pytest.fixture
def macro_for(fitted_cfg):
    def build(weights=None, mode="and"):
        return fitted_cfg.build_macro(weights, mode)
    return build


ACCEPTANCE: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n:>2}: {detail}"
    ACCEPTANCE[n] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
