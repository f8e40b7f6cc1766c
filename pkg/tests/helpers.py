"""Shared oracles for the test suite."""

import numpy as np

from platekit.system import BoundaryData


class Quadratic:
    """u = c0 + c1 x + c2 y + c3 x^2 + c4 xy + c5 y^2 with its boundary data."""

    def __init__(self, c, material):
        self.c = np.asarray(c, float)
        self.material = material
        c0, c1, c2, c3, c4, c5 = self.c
        self.hess = np.array([[2 * c3, c4], [c4, 2 * c5]])

    def __call__(self, x, y):
        c0, c1, c2, c3, c4, c5 = self.c
        return c0 + c1 * x + c2 * y + c3 * x * x + c4 * x * y + c5 * y * y

    def gradient(self, x, y):
        c0, c1, c2, c3, c4, c5 = self.c
        return np.stack([c1 + 2 * c3 * x + c4 * y, c2 + c4 * x + 2 * c5 * y])

    def moment(self, x, y, n):
        m = self.material
        sigma = m.lam * np.trace(self.hess) * np.eye(2) + m.mu * self.hess
        return np.einsum("...i,ij,...j->...", n, sigma, n)

    def boundary(self):
        return BoundaryData(self, self.gradient, moment=self.moment)
