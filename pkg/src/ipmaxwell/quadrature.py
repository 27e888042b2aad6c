"""Quadrature on the reference triangle (0,0),(1,0),(0,1) and the unit interval."""
import functools

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@functools.lru_cache(maxsize=None)
def line_rule(degree):
    """Gauss-Legendre points/weights on [0, 1], exact up to ``degree``."""
    n = max(1, (degree + 2) // 2)
    x, w = roots_legendre(n)
    pts, wts = 0.5 * (x + 1.0), 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


@functools.lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed (Stroud) Gauss rule on the reference triangle.

    Uses Gauss-Jacobi(1, 0) in the collapsed direction and Gauss-Legendre in
    the other one, giving positive weights summing to 1/2 and exactness for
    total degree ``degree``.
    """
    n = max(1, (degree + 2) // 2)
    xa, wa = roots_jacobi(n, 1.0, 0.0)
    xb, wb = roots_legendre(n)
    s = 0.5 * (xa + 1.0)
    t = 0.5 * (xb + 1.0)
    S, T = np.meshgrid(s, t, indexing="ij")
    pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
    wts = np.outer(0.25 * wa, 0.5 * wb).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts
