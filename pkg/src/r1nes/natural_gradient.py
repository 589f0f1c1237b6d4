"""Exact Fisher information and O(d) natural gradients for (lam, u).

For the rank-one family the Fisher information of theta = (lam, u) has the
closed block form (ordering: lam first, then u_1..u_d)

    F = [[2d,            2 u^T/(1+r^2)],
         [2 u/(1+r^2),   B            ]],
    B = (1/(1+r^2)) [ r^2 I + ((1-r^2)/(1+r^2)) u u^T ],

and its inverse factors into a scaled identity-plus-outer-product shape

    Finv = (1+r^2)/(2 r^2 (d-1)) *
           [[ r^2/(1+r^2),  -r v^T                      ],
            [ -r v,          2(d-1) I + (2+d(r^2-1)) v v^T ]],

so multiplying Finv against a gradient needs only inner products: the
optimizer never assembles a matrix. Dense assembly exists solely for tests.

The reparameterization (c, v) with u = e^c v (unit v) splits the direction's
length from its orientation:

    g_c = (g_u . v)/r,   g_v = (g_u - (g_u . v) v)/r,

so a gradient step on c scales u without ever flipping it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distribution import RankOneGaussian, plain_grad
from .errors import DegenerateDirectionError, DimensionError

__all__ = [
    "InverseFisher",
    "NaturalGradient",
    "fisher_exact",
    "fisher_inverse",
    "assemble_inverse",
    "natural_grad_sample",
]


@dataclass(frozen=True)
class InverseFisher:
    """Factored inverse Fisher: scale * [[top_left, cross_coeff v^T],
    [cross_coeff v, diag_coeff I + outer_coeff v v^T]]."""

    scale: float
    top_left: float
    cross_coeff: float
    diag_coeff: float
    outer_coeff: float
    v: np.ndarray


@dataclass(frozen=True)
class NaturalGradient:
    """Per-sample natural gradients for all five parameter views."""

    g_mu: np.ndarray
    g_lambda: float
    g_u: np.ndarray
    g_c: float
    g_v: np.ndarray


def _require_direction(dist: RankOneGaussian) -> tuple[float, float, np.ndarray]:
    r2 = dist.r2
    if r2 == 0.0:
        raise DegenerateDirectionError("Fisher algebra is undefined at u = 0")
    r = math.sqrt(r2)
    return r2, r, dist.u / r


def fisher_exact(dist: RankOneGaussian) -> np.ndarray:
    """Dense (d+1)x(d+1) Fisher matrix, ordering (lam, u_1..u_d).

    Intended for validation at small d; the optimizer path never calls it.
    """
    r2, _, _ = _require_direction(dist)
    d = dist.d
    u = dist.u
    one = 1.0 + r2
    f = np.empty((d + 1, d + 1))
    f[0, 0] = 2.0 * d
    f[0, 1:] = 2.0 * u / one
    f[1:, 0] = 2.0 * u / one
    b = (r2 * np.eye(d) + ((1.0 - r2) / one) * np.outer(u, u)) / one
    f[1:, 1:] = b
    return f


def fisher_inverse(dist: RankOneGaussian) -> InverseFisher:
    """Factored closed-form inverse of fisher_exact; all uses are O(d)."""
    r2, r, v = _require_direction(dist)
    d = dist.d
    if d < 2:
        raise DimensionError("dimension must be >= 2")
    return InverseFisher(
        scale=(1.0 + r2) / (2.0 * r2 * (d - 1)),
        top_left=r2 / (1.0 + r2),
        cross_coeff=-r,
        diag_coeff=2.0 * (d - 1),
        outer_coeff=2.0 + d * (r2 - 1.0),
        v=v,
    )


def assemble_inverse(inv: InverseFisher) -> np.ndarray:
    """Dense form of the factored inverse. Test-only: O(d^2)."""
    d = inv.v.shape[0]
    out = np.empty((d + 1, d + 1))
    out[0, 0] = inv.top_left
    out[0, 1:] = inv.cross_coeff * inv.v
    out[1:, 0] = inv.cross_coeff * inv.v
    out[1:, 1:] = inv.diag_coeff * np.eye(d) + inv.outer_coeff * np.outer(inv.v, inv.v)
    return inv.scale * out


def natural_grad_sample(dist: RankOneGaussian, x: np.ndarray) -> NaturalGradient:
    """Natural gradients of the log-density at a mean-centered offset x.

    g_mu is x itself (the mean's Fisher is C^{-1}, so Finv times the score
    C^{-1} x collapses). g_lambda uses the closed form

        g_lambda = [ (e^{-2 lam} x.x - d) - (e^{-2 lam} (x.v)^2 - 1) ] / (2(d-1)),

    and g_u is the factored inverse Fisher applied to the plain gradient.
    An equivalent explicit form, cross-checked in tests, is

        g_u = e^{-2 lam}/(2(d-1) r) * [ (1-d)(x.v)^2
              + (r^2+1)((x.v)^2 - x.x) ] * v  +  e^{-2 lam} (x.v / r) * x.

    g_c and g_v are the (c, v) split of g_u described in the module docstring.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dist.d,):
        raise DimensionError(f"x has shape {x.shape}, expected ({dist.d},)")
    r2, r, v = _require_direction(dist)
    d = dist.d
    e2 = math.exp(-2.0 * dist.lam)
    xx = float(x @ x)
    xv = float(x @ v)

    g_lambda = ((e2 * xx - d) - (e2 * xv * xv - 1.0)) / (2.0 * (d - 1))

    plain_lam, plain_u = plain_grad(dist, x)
    inv = fisher_inverse(dist)
    v_dot_pu = float(v @ plain_u)
    g_u = inv.scale * (
        inv.cross_coeff * plain_lam * v
        + inv.diag_coeff * plain_u
        + inv.outer_coeff * v_dot_pu * v
    )

    g_u_dot_v = float(g_u @ v)
    g_c = g_u_dot_v / r
    g_v = (g_u - g_u_dot_v * v) / r
    return NaturalGradient(g_mu=x, g_lambda=g_lambda, g_u=g_u, g_c=g_c, g_v=g_v)
