import numpy as np
import pytest
from hypothesis import settings

from maxent_tomo import FockSpace, TrapConfig

settings.register_profile("suite", deadline=None, max_examples=40)
settings.load_profile("suite")

# 80 kHz trap, 22 nm / 11 mm/s vacuum widths, 60 um cloud, 8.7 ms flight:
# the standard configuration used across the test suite.
TRAP_KW = dict(
    omega_z=2 * np.pi * 80e3,
    dz0=22e-9,
    dv0=11e-3,
    cloud_rms=60e-6,
    be_time=8.7e-3,
)

# four in-trap hold times used by the standard runs (microsecond scale)
TAUS = (0.0, 1.6e-6, 3.2e-6, 4.8e-6)


def make_trap(**overrides) -> TrapConfig:
    kw = dict(TRAP_KW)
    kw.update(overrides)
    return TrapConfig(**kw)


def rotations(cfg: TrapConfig, taus=TAUS) -> tuple:
    return tuple(cfg.omega_z * t for t in taus)


@pytest.fixture(scope="session")
def trap() -> TrapConfig:
    return make_trap()


@pytest.fixture(scope="session")
def space16() -> FockSpace:
    return FockSpace(16)
