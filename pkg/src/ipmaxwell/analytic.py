"""
Exact fields and coefficients for the benchmark problems.

The L-shape benchmark uses the potential ``S(r, t) = r**lam * phi(t)`` on
the sector ``t in [0, 3*pi/2]`` where ``phi`` is built from three branches
glued so that the tangential part of grad S and the normal part of
``eps * grad S`` are continuous across ``t = pi/2`` and ``t = pi``. The
exponent and the contrast are tied by ``tan(lam*pi/4) * tan(lam*pi/2) = eps_r``.
"""
import math
from dataclasses import dataclass, field

import numpy as np

ORIGIN_TOL = 1e-14

# theta ranges of the L-shape subdomains 1, 2, 3
SECTORS = {1: (0.0, 0.5 * math.pi), 2: (0.5 * math.pi, math.pi), 3: (math.pi, 1.5 * math.pi)}


@dataclass(frozen=True)
class CoefficientField:
    """Piecewise-constant ``eps`` and ``kappa``; entry ``i`` is subdomain ``i + 1``."""

    eps: tuple
    kappa: tuple = None

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps)
        kappa = tuple(float(k) for k in (self.kappa if self.kappa is not None else [1.0] * len(eps)))
        if len(kappa) != len(eps):
            raise ValueError("eps and kappa need one value per subdomain")
        if min(eps) <= 0 or min(kappa) <= 0:
            raise ValueError("eps and kappa must be bounded below by a positive constant")
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "kappa", kappa)

    @property
    def n_subdomains(self):
        return len(self.eps)

    def per_cell(self, subdomains):
        """(eps, kappa) arrays evaluated on cells with the given subdomain ids."""
        idx = np.asarray(subdomains) - 1
        return np.asarray(self.eps)[idx], np.asarray(self.kappa)[idx]

    @classmethod
    def uniform(cls, n=1):
        return cls([1.0] * n)

    @classmethod
    def lshape(cls, eps_r):
        return cls([eps_r, 1.0, eps_r])

    @classmethod
    def checkerboard(cls, eps_r):
        return cls([1.0, eps_r, 1.0, eps_r])


def eps_from_lambda(lam):
    """Contrast ``eps_r`` producing the singular exponent ``lam`` in (0, 1)."""
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    return math.tan(lam * math.pi / 4) * math.tan(lam * math.pi / 2)


def lambda_from_eps(eps_r, tol=1e-14):
    """Invert :func:`eps_from_lambda` by bisection followed by Newton polishing."""
    if not eps_r > 0:
        raise ValueError(f"eps_r must be positive, got {eps_r}")
    lo, hi = 1e-12, 1.0 - 1e-12
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if eps_from_lambda(mid) < eps_r:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    for _ in range(3):
        a, b = lam * math.pi / 4, lam * math.pi / 2
        deriv = (math.pi / 4) / math.cos(a) ** 2 * math.tan(b) + math.tan(a) * (math.pi / 2) / math.cos(b) ** 2
        step = (eps_from_lambda(lam) - eps_r) / deriv
        if not 0.0 < lam - step < 1.0:
            break
        lam -= step
    return lam


def _branch_of(theta):
    return np.where(theta < 0.5 * math.pi, 1, np.where(theta < math.pi, 2, 3))


def _phi_parts(lam, theta, branch):
    c2 = math.sin(lam * math.pi / 2) / math.cos(lam * math.pi / 4)
    val = np.select(
        [branch == 1, branch == 2],
        [np.sin(lam * theta), c2 * np.cos(lam * (theta - 0.75 * math.pi))],
        np.sin(lam * (1.5 * math.pi - theta)),
    )
    der = np.select(
        [branch == 1, branch == 2],
        [lam * np.cos(lam * theta), -lam * c2 * np.sin(lam * (theta - 0.75 * math.pi))],
        -lam * np.cos(lam * (1.5 * math.pi - theta)),
    )
    return val, der


def _check_theta(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0.0) or np.any(theta > 1.5 * math.pi):
        raise ValueError("theta must lie in [0, 3*pi/2]")
    return theta


def phi_lambda(lam, theta, branch=None):
    """Angular factor of the singular potential. ``branch`` forces a one-sided value."""
    theta = _check_theta(theta)
    b = _branch_of(theta) if branch is None else np.asarray(branch)
    val = _phi_parts(lam, theta, b)[0]
    return float(val) if val.ndim == 0 else val


def dphi_lambda(lam, theta, branch=None):
    """Derivative of :func:`phi_lambda` with respect to theta."""
    theta = _check_theta(theta)
    b = _branch_of(theta) if branch is None else np.asarray(branch)
    der = _phi_parts(lam, theta, b)[1]
    return float(der) if der.ndim == 0 else der


def polar_angle(x, y):
    """Angle measured counterclockwise from the positive x axis, mapped to [0, 2*pi)."""
    theta = np.arctan2(y, x)
    return np.where(theta < 0.0, theta + 2.0 * math.pi, theta)


@dataclass(frozen=True)
class SingularPotential:
    """Potential ``r**lam * phi(theta)`` on the L-shaped sector."""

    lam: float
    eps_r: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "eps_r", eps_from_lambda(self.lam))

    @classmethod
    def from_eps(cls, eps_r):
        return cls(lambda_from_eps(eps_r))

    def coefficients(self):
        return CoefficientField.lshape(self.eps_r)

    def potential(self, xy, sub=None):
        xy = np.atleast_2d(xy)
        r = np.hypot(xy[:, 0], xy[:, 1])
        theta = polar_angle(xy[:, 0], xy[:, 1])
        branch = _branch_of(theta) if sub is None else np.asarray(sub)
        return r**self.lam * _phi_parts(self.lam, theta, branch)[0]

    def gradient(self, xy, sub=None):
        """Grad S at points ``xy`` (m, 2), one-sided when ``sub`` is given.

        Points closer than ``ORIGIN_TOL`` to the corner get the value 0; the
        field is unbounded there and this value only serves nodal
        interpolation.
        """
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        x, y = xy[:, 0], xy[:, 1]
        r = np.hypot(x, y)
        theta = polar_angle(x, y)
        if sub is None:
            branch = _branch_of(theta)
        else:
            branch = np.broadcast_to(np.asarray(sub), theta.shape)
            # points on the positive x axis seen from subdomain 1 sit at theta = 0
            theta = np.where((branch == 1) & (theta > math.pi), 0.0, theta)
        at_origin = r < ORIGIN_TOL
        rs = np.where(at_origin, 1.0, r)
        val, der = _phi_parts(self.lam, theta, branch)
        scale = rs ** (self.lam - 1.0)
        c, s = np.cos(theta), np.sin(theta)
        gx = scale * (self.lam * val * c - der * s)
        gy = scale * (self.lam * val * s + der * c)
        out = np.column_stack([gx, gy])
        out[at_origin] = 0.0
        return out

    __call__ = gradient


def grad_S_lambda(pot, point, sub=None):
    """Grad S at a single point; raises at the singular corner."""
    x, y = point
    if math.hypot(x, y) < ORIGIN_TOL:
        raise ValueError("grad S is singular at the origin")
    theta = float(polar_angle(x, y))
    if theta > 1.5 * math.pi + 1e-15:
        raise ValueError(f"point {point} lies outside the L-shaped sector")
    return pot.gradient(np.array([[x, y]]), None if sub is None else np.array([sub]))[0]


class CurlBubble:
    """Smooth divergence-free field ``E = curl(sin(pi x)^2 sin(pi y)^2)`` on (0,1)^2.

    ``E`` vanishes on the boundary of the unit square; with ``kappa = eps = 1``
    the matching source is ``g = curl curl E`` and the multiplier is zero.
    """

    def field(self, xy, sub=None):
        x, y = xy[:, 0], xy[:, 1]
        pi = math.pi
        return np.column_stack(
            [
                pi * np.sin(pi * x) ** 2 * np.sin(2 * pi * y),
                -pi * np.sin(2 * pi * x) * np.sin(pi * y) ** 2,
            ]
        )

    __call__ = field

    def laplacian_psi(self, xy):
        x, y = xy[:, 0], xy[:, 1]
        pi = math.pi
        return 2 * pi**2 * (np.cos(2 * pi * x) * np.sin(pi * y) ** 2 + np.sin(pi * x) ** 2 * np.cos(2 * pi * y))

    def curl(self, xy, sub=None):
        return -self.laplacian_psi(xy)

    def div(self, xy, sub=None):
        return np.zeros(xy.shape[0])

    def source(self, xy, sub=None):
        """``curl curl E`` for unit coefficients."""
        x, y = xy[:, 0], xy[:, 1]
        pi = math.pi
        dx = -4 * pi**3 * np.sin(2 * pi * x) * np.sin(pi * y) ** 2 + 2 * pi**3 * np.sin(2 * pi * x) * np.cos(2 * pi * y)
        dy = 2 * pi**3 * np.cos(2 * pi * x) * np.sin(2 * pi * y) - 4 * pi**3 * np.sin(pi * x) ** 2 * np.sin(2 * pi * y)
        return np.column_stack([-dy, dx])
