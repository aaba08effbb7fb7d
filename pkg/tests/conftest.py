import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from muskatlab.spectral_core import Grid, RealField, SpectralField, inverse

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

SMALL = Grid(16, 2 * np.pi)
DESK = Grid(128, 32.0)
MID = Grid(64, 32.0)


def random_field(grid: Grid, seed: int, kmax: float | None = None, amp: float = 1.0) -> RealField:
    """Real band-limited random field (kept below Nyquist)."""
    rng = np.random.default_rng(seed)
    kmax = grid.n / 3 if kmax is None else kmax
    c = rng.normal(size=(grid.n, grid.n)) + 1j * rng.normal(size=(grid.n, grid.n))
    c[~grid.band_mask(kmax)] = 0.0
    c[0, 0] = 0.0
    f = inverse(SpectralField(grid, c)).values
    return RealField(grid, amp * f / np.max(np.abs(f)))


seeds = st.integers(min_value=0, max_value=2**31 - 1)


@pytest.fixture(scope="session")
def desk_field():
    return random_field(DESK, 11, kmax=12, amp=0.2)
