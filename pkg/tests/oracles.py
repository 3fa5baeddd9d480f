"""Independent reference computations used by the tests.

Nothing here calls the package's transforms: fields are summed as explicit
trigonometric series and integrated with the trapezoid rule on a refined
grid, which is exact for trigonometric polynomials of low enough degree.
"""
from itertools import product

import numpy as np


def modes_of(field, floor=1e-14):
    """[(k, c)] for the coefficients of a SpectralField above ``floor``."""
    g = field.grid
    out = []
    for idx in zip(*np.nonzero(np.abs(field.coeffs) > floor)):
        k = tuple(int(g.k1d[i]) for i in idx)
        out.append((k, complex(field.coeffs[idx])))
    return out


def series_derivative(modes, alpha, points):
    """D^alpha of sum_k c_k e^{ik.x}, evaluated at the given point arrays."""
    total = np.zeros(points[0].shape, dtype=complex)
    for k, c in modes:
        factor = np.prod([(1j * kj) ** aj for kj, aj in zip(k, alpha)])
        phase = sum(kj * xj for kj, xj in zip(k, points))
        total += c * factor * np.exp(1j * phase)
    return total


def quadrature_sobolev_sq(field, m, refine=4):
    """sum_{|alpha|<=m} int |D^alpha Z|^2 dx by trapezoid rule on a refine-times finer grid."""
    g = field.grid
    M = refine * g.n
    x = 2 * np.pi * np.arange(M) / M
    pts = (x,) if g.dim == 1 else tuple(np.meshgrid(x, x, indexing="ij"))
    cell = (2 * np.pi / M) ** g.dim
    modes = modes_of(field)
    total = 0.0
    for alpha in product(range(m + 1), repeat=g.dim):
        if sum(alpha) > m:
            continue
        vals = series_derivative(modes, alpha, pts)
        total += cell * np.sum(np.abs(vals) ** 2)
    return total


def convolve_modes(a_modes, b_modes):
    """Exact Fourier-series product: {k: coeff}."""
    out = {}
    for ka, ca in a_modes:
        for kb, cb in b_modes:
            k = tuple(x + y for x, y in zip(ka, kb))
            out[k] = out.get(k, 0) + ca * cb
    return out
