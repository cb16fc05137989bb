"""Centred univariate B-splines and the tensorized smoothing operators built on them.

The two kernels in play are the box kernel (degree 0, support [-1/2,1/2])
and the quadratic kernel (degree 2, support [-3/2,3/2]).  Smoothing along
axis i at scale h is the convolution

    (T_i f)(x) = (1/h) int f(x_1,..,y_i,..,x_4) kernel((x_i - y_i)/h) dy_i,

and a smoothing plan assigns one kernel per axis; the full operator is the
composition over the four axes.  Replacing the quadratic kernel by the box
kernel on a single axis is exactly what turns a second derivative along that
axis into a second difference quotient:

    T_quad,i  d_i^2 f  =  D_i D_{-i} T_box,i f

holds as an operator identity, so the residual of the tensorized version is
pure quadrature error.  Quadrature is composite Gauss-Legendre with panels
aligned to the spline knots, which integrates the piecewise-polynomial
kernels exactly against polynomial integrands.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

DIM = 4

#: Gauss points per knot panel; exact through polynomial degree 11.
GAUSS_POINTS = 6


def eval_spline(degree_index: int, z) -> np.ndarray:
    """Evaluate the centred B-spline kernel, exact piecewise polynomial.

    ``degree_index`` 1 is the box kernel, 3 the quadratic kernel (the index
    is one more than the polynomial degree).
    """
    z = np.abs(np.asarray(z, dtype=float))
    if degree_index == 1:
        return np.where(z <= 0.5, 1.0, 0.0)
    if degree_index == 3:
        inner = 0.75 - z * z
        outer = 0.5 * (z - 1.5) ** 2
        return np.where(z <= 0.5, inner, np.where(z <= 1.5, outer, 0.0))
    raise ValueError(f"unsupported kernel index {degree_index} (use 1 or 3)")


def spline_knots(degree_index: int) -> np.ndarray:
    if degree_index == 1:
        return np.array([-0.5, 0.5])
    if degree_index == 3:
        return np.array([-1.5, -0.5, 0.5, 1.5])
    raise ValueError(f"unsupported kernel index {degree_index}")


def spline_support(degree_index: int) -> float:
    return float(spline_knots(degree_index)[-1])


def kernel_quadrature(degree_index: int, points: int = GAUSS_POINTS):
    """Nodes z_q and weights w_q with sum_q w_q g(z_q) = int g(z) kernel(z) dz
    exact for g polynomial up to the Gauss degree on each knot panel."""
    gz, gw = leggauss(points)
    knots = spline_knots(degree_index)
    nodes = []
    weights = []
    for a, b in zip(knots[:-1], knots[1:]):
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        z = mid + half * gz
        nodes.append(z)
        weights.append(half * gw * eval_spline(degree_index, z))
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass(frozen=True)
class SmoothingPlan:
    """Per-axis kernel choice at a common mesh width."""

    kernels: tuple[int, int, int, int]
    h: float

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("mesh width must be positive")
        for k in self.kernels:
            if k not in (1, 3):
                raise ValueError(f"kernel index {k} not supported")

    @classmethod
    def quadratic(cls, h: float) -> "SmoothingPlan":
        """Quadratic kernel on every axis."""
        return cls((3, 3, 3, 3), h)

    @classmethod
    def flattened(cls, h: float, axis: int) -> "SmoothingPlan":
        """Quadratic kernels except the box kernel on ``axis`` (1-based)."""
        kernels = [3, 3, 3, 3]
        kernels[axis - 1] = 1
        return cls(tuple(kernels), h)

    def support_halfwidth(self, axis: int) -> float:
        return self.h * spline_support(self.kernels[axis - 1])


class DomainError(ValueError):
    """The function handle cannot be evaluated on the required neighborhood."""


@dataclass(frozen=True)
class FunctionHandle:
    """A continuous function with an explicit domain of validity.

    ``fn`` must be vectorized over four broadcastable coordinate arrays.
    ``box`` is ((lo1,hi1),..,(lo4,hi4)) or None for all of R^4; smoothing
    that would sample outside the box fails loudly instead of extrapolating.
    """

    fn: Callable
    box: tuple[tuple[float, float], ...] | None = None

    def require(self, lo, hi) -> None:
        if self.box is None:
            return
        for axis, ((blo, bhi), l, u) in enumerate(zip(self.box, lo, hi)):
            if l < blo - 1e-12 or u > bhi + 1e-12:
                raise DomainError(
                    f"axis {axis + 1}: needs [{l:.6g},{u:.6g}] but handle is "
                    f"valid on [{blo:.6g},{bhi:.6g}]"
                )

    def __call__(self, *coords):
        return self.fn(*coords)


def smooth(f: FunctionHandle, plan: SmoothingPlan, x) -> float:
    """Tensor-product smoothing of ``f`` at the point ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (DIM,):
        raise ValueError("evaluation point must be a 4-vector")
    halfw = [plan.support_halfwidth(a + 1) for a in range(DIM)]
    f.require([x[a] - halfw[a] for a in range(DIM)],
              [x[a] + halfw[a] for a in range(DIM)])
    nodes = []
    weights = []
    for a in range(DIM):
        z, w = kernel_quadrature(plan.kernels[a])
        nodes.append(x[a] - plan.h * z)
        weights.append(w)
    grids = np.meshgrid(*nodes, indexing="ij", sparse=True)
    vals = f(*grids)
    return float(np.einsum("ijkl,i,j,k,l->", vals, *weights))


def check_commutation(
    f: FunctionHandle,
    d2f: FunctionHandle,
    axis: int,
    x,
    h: float,
) -> float:
    """Residual of the smoothing/second-difference commutation at one point.

    Compares the all-quadratic smoothing of the supplied second derivative
    with the second difference quotient of the axis-flattened smoothing of f.
    Zero for exact quadrature; for polynomial f only roundoff remains.
    """
    x = np.asarray(x, dtype=float)
    lhs = smooth(d2f, SmoothingPlan.quadratic(h), x)
    flat = SmoothingPlan.flattened(h, axis)
    e = np.zeros(DIM)
    e[axis - 1] = h
    rhs = (smooth(f, flat, x + e) - 2.0 * smooth(f, flat, x) + smooth(f, flat, x - e)) / h**2
    return abs(lhs - rhs)
