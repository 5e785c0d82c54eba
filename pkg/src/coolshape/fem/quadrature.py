"""Quadrature rules on the reference triangle (0,0), (1,0), (0,1) and on [0, 1]."""

from __future__ import annotations

import dataclasses
from functools import lru_cache

import numpy as np


@dataclasses.dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Barycentric points ``(nq, 3)`` and weights summing to the reference area 1/2."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def xi(self):
        """Reference coordinates (xi, eta) = (lambda1, lambda2)."""
        return self.points[:, 1:]

    def __len__(self):
        return len(self.weights)


def _orbit3(a, b):
    return [(a, a, b), (a, b, a), (b, a, a)]


@lru_cache(maxsize=None)
def dunavant4():
    """Six-point rule exact for polynomials of degree 4."""
    a1, w1 = 0.445948490915964886318329253883, 0.223381589678011465944640950727
    a2, w2 = 0.091576213509770743459571463402, 0.109951743655321867388692382606
    pts = _orbit3(a1, 1 - 2 * a1) + _orbit3(a2, 1 - 2 * a2)
    w = [w1] * 3 + [w2] * 3
    return QuadratureRule(np.array(pts), 0.5 * np.array(w), 4)


@lru_cache(maxsize=None)
def collapsed_gauss(n):
    """Duffy-collapsed tensor Gauss-Legendre rule, exact to degree 2n - 2."""
    u, wu = np.polynomial.legendre.leggauss(n)
    xi = 0.5 * (1 + u)
    wxi = 0.5 * wu
    pts, w = [], []
    for a, wa in zip(xi, wxi):
        for b, wb in zip(xi, wxi):
            x = a
            y = (1 - a) * b
            pts.append((1 - x - y, x, y))
            w.append(wa * wb * (1 - a))
    return QuadratureRule(np.array(pts), np.array(w), 2 * n - 2)


@lru_cache(maxsize=None)
def gauss_line(n=3):
    """Gauss-Legendre points and weights on [0, 1]."""
    u, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (1 + u), 0.5 * w
