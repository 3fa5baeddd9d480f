import numpy as np
import pytest

from splitspde.spectral import SpectralField, TorusGrid


def random_field(grid: TorusGrid, rng: np.random.Generator, kmax: int | None = None, decay: float = 0.0):
    """Random complex field supported on |k_j| <= kmax (default: the whole band)."""
    kmax = grid.n // 2 - 1 if kmax is None else kmax
    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    keep = np.ones(grid.shape, dtype=bool)
    for kj in grid.wavenumbers:
        keep = keep & (np.abs(kj) <= kmax)
    c = np.where(keep, c, 0.0)
    if decay:
        c = c * np.exp(-decay * np.sqrt(grid.ksq))
    return SpectralField(grid, c)


def random_real_coeffs(grid: TorusGrid, rng: np.random.Generator, kmax: int):
    """Coefficients of a real trigonometric polynomial of degree kmax."""
    z = random_field(grid, rng, kmax).evaluate().real
    return SpectralField(grid, grid.from_physical(z)).coeffs


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines, sorted by criterion number."""
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            if getattr(rep, "when", None) != "call":
                continue
            lines += [value for key, value in getattr(rep, "user_properties", ()) if key == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
