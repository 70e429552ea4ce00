import numpy as np
import pytest

from wienercone.kernels import ORACLE, KernelModel, build_context
from wienercone.spherical import DomainSpec


@pytest.fixture(scope="session")
def ctx3():
    """Laplace case on the upper half-space of R^3."""
    return build_context(DomainSpec(3, "half_sphere"))


@pytest.fixture(scope="session")
def oracle3(ctx3):
    return KernelModel(ctx3, mode=ORACLE)


@pytest.fixture(scope="session")
def surrogate3(ctx3):
    return KernelModel(ctx3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


def pytest_terminal_summary(terminalreporter):
    seen = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" not in props:
                continue
            num, title = props["criterion"]
            ok = rep.passed and (num not in seen or seen[num][0])
            if rep.when == "call" or not rep.passed:
                seen[num] = (ok, title, props.get("detail", ""))
    if not seen:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(seen):
        ok, title, detail = seen[num]
        line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
