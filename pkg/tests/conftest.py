import numpy as np
import pytest

from alphach.analytic import PeakonParams
from alphach.state import LagrangianState


def random_state(rng, n=1024, half_width=10.0, with_r=True):
    """Admissible Lagrangian state with smooth random fields decaying towards the ends."""
    xi = np.linspace(-half_width, half_width, n)
    env = np.exp(-(xi**2) / 8.0)
    k = rng.integers(1, 4)
    phase = rng.uniform(0, 2 * np.pi, size=3)
    q = 0.2 + 0.8 * (1 + np.cos(k * xi / 3 + phase[0])) / 2 * env + (1 - env) * 0.9
    y = np.concatenate([[xi[0]], xi[0] + np.cumsum(0.5 * (q[1:] + q[:-1]) * np.diff(xi))])
    U = rng.normal(scale=1.0) * np.sin(xi / 2 + phase[1]) * env
    w = rng.normal(scale=0.5) * np.cos(xi + phase[2]) * env
    r = rng.normal(scale=0.3) * env if with_r else np.zeros_like(xi)
    hbar = (w**2 + r**2) / q
    loss = rng.uniform(0, 0.5) * env**2
    return LagrangianState(xi, y, U, q, w, hbar, hbar + loss, r, loss=loss)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def pa():
    return PeakonParams(E=2.0, t0=1.0, alpha=0.5)
