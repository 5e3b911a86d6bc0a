import numpy as np
import pytest

from synthmri import GenConfig
from synthmri.phantoms import make_phantom_labels

# Pass/fail lines collected by the acceptance suite, echoed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def phantom32():
    return make_phantom_labels((32, 32, 32), n_labels=5, seed=3)


@pytest.fixture(scope="session")
def phantom_maps32():
    return [make_phantom_labels((32, 32, 32), n_labels=5, seed=s) for s in range(3)]


@pytest.fixture(scope="session")
def phantom64():
    return make_phantom_labels((64, 64, 64), n_labels=6, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fast_cfg():
    """Small deformation grid for quick 32-cube tests."""
    return GenConfig(c_v=6, c_B=4, seed=99)


def identity_cfg(**overrides) -> GenConfig:
    """Every augmentation disabled: identity transform, deterministic image."""
    base = dict(
        a_rot=0.0, b_rot=0.0,
        a_sc=1.0, b_sc=1.0,
        a_sh=0.0, b_sh=0.0,
        a_tr=0.0, b_tr=0.0,
        sigma_svf=0.0,
        a_sigma=0.0, b_sigma=0.0,
        sigma_blur=0.0,
        sigma_b=0.0,
        a_gamma=0.0, b_gamma=0.0,
        p_strip=0.0,
    )
    base.update(overrides)
    return GenConfig(**base)
