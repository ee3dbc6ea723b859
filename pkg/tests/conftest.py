import numpy as np
import pytest

from polsource import config as cf
from polsource import spdc_model as sm


@pytest.fixture(scope="session")
def device_cfg():
    return cf.load_example("device_1p05mm")


@pytest.fixture(scope="session")
def design_cfg():
    return cf.load_example("design_ratio2")


@pytest.fixture(scope="session")
def typeii_cfg():
    return cf.load_example("typeII")


@pytest.fixture(scope="session")
def spec(device_cfg):
    return cf.build_waveguide(device_cfg)


@pytest.fixture(scope="session")
def grid(device_cfg):
    return cf.build_grid(device_cfg, 816.7)


def random_amplitude(rng, grid, channel="HH"):
    """Smooth random normalized amplitude (sum of complex Gaussians)."""
    om = grid.omega / grid.half_span
    vals = np.zeros(grid.n, dtype=complex)
    for _ in range(3):
        c, w = rng.uniform(-0.6, 0.6), rng.uniform(0.05, 0.4)
        vals += (rng.normal() + 1j * rng.normal()) * np.exp(-((om - c) / w) ** 2)
    vals /= np.sqrt(np.trapezoid(np.abs(vals) ** 2, dx=grid.step))
    return sm.JointAmplitude(channel, grid, vals)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
