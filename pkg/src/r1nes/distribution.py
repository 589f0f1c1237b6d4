"""Gaussian search distribution with covariance C = e^{2*lam} (I + u u^T).

The distribution is parameterized by a mean ``mu``, a log-scale ``lam``
(sigma = e^lam), and an unnormalized predominant direction ``u``. Its
covariance has d-1 eigenvalues e^{2 lam} plus one enlarged eigenvalue
e^{2 lam} (1 + u^T u) along u, which is what makes every operation here
possible in O(d): sampling, inverse-covariance products, log-determinant,
log-density, and the density gradients all reduce to the inner products
x^T x and x^T u.

Conventions:

* Density-side operations take ``x`` as the offset from the mean; the
  optimizer adds ``mu`` back only when calling the objective.
* d >= 2 is required (the natural-gradient layer divides by d - 1).
* ``u = 0`` is a valid distribution (isotropic), but the derived direction
  quantities c = log ||u|| and v = u/||u|| are undefined there and their
  accessors raise DegenerateDirectionError.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDirectionError, DimensionError

__all__ = [
    "RankOneGaussian",
    "Sample",
    "sample",
    "sample_batch",
    "apply_inverse_covariance",
    "log_det",
    "log_density",
    "plain_grad",
    "serialize",
    "deserialize",
]


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite everywhere")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class RankOneGaussian:
    """Immutable distribution state (mu, lam, u). Updates build new values."""

    mu: np.ndarray
    lam: float
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", _frozen_array(self.mu, "mu"))
        object.__setattr__(self, "u", _frozen_array(self.u, "u"))
        object.__setattr__(self, "lam", float(self.lam))
        if self.mu.shape[0] < 2:
            raise DimensionError("dimension must be >= 2")
        if self.u.shape[0] != self.mu.shape[0]:
            raise DimensionError(
                f"u has length {self.u.shape[0]}, mu has length {self.mu.shape[0]}"
            )
        if not math.isfinite(self.lam):
            raise ValueError("lam must be finite")

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def r2(self) -> float:
        return float(self.u @ self.u)

    @property
    def r(self) -> float:
        return math.sqrt(self.r2)

    @property
    def c(self) -> float:
        r2 = self.r2
        if r2 == 0.0:
            raise DegenerateDirectionError("c = log ||u|| is undefined at u = 0")
        return 0.5 * math.log(r2)

    @property
    def v(self) -> np.ndarray:
        r = self.r
        if r == 0.0:
            raise DegenerateDirectionError("v = u/||u|| is undefined at u = 0")
        return self.u / r


@dataclass
class Sample:
    """One draw: x = e^lam (y + z u), an offset from the mean."""

    y: np.ndarray
    z: float
    x: np.ndarray
    fitness: float = field(default=math.nan)


def sample(dist: RankOneGaussian, rng: np.random.Generator) -> Sample:
    """Draw one sample: y ~ N(0, I_d), z ~ N(0, 1), x = e^lam (y + z u).

    Consumes d normals (y) then one (z) from the stream. x ~ N(0, C) because
    Cov(y + z u) = I + u u^T.
    """
    y = rng.standard_normal(dist.d)
    z = float(rng.standard_normal())
    x = math.exp(dist.lam) * (y + z * dist.u)
    return Sample(y=y, z=z, x=x)


def sample_batch(
    dist: RankOneGaussian, rng: np.random.Generator, count: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw ``count`` samples at once; returns (Y, Z, X) with X rows ~ N(0, C).

    Stream order: all of Y row-major (count*d normals), then Z (count).
    This is the draw pattern the optimizer uses each generation, so replaying
    it reproduces the optimizer's stream positions exactly.
    """
    y = rng.standard_normal((count, dist.d))
    z = rng.standard_normal(count)
    x = math.exp(dist.lam) * (y + z[:, None] * dist.u)
    return y, z, x


def apply_inverse_covariance(dist: RankOneGaussian, w: np.ndarray) -> np.ndarray:
    """C^{-1} w = e^{-2 lam} (w - (u^T w)/(1+r^2) u), in O(d)."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (dist.d,):
        raise DimensionError(f"w has shape {w.shape}, expected ({dist.d},)")
    u = dist.u
    return math.exp(-2.0 * dist.lam) * (w - (float(u @ w) / (1.0 + dist.r2)) * u)


def log_det(dist: RankOneGaussian) -> float:
    """log |C| = 2 d lam + log(1 + r^2)."""
    return 2.0 * dist.d * dist.lam + math.log1p(dist.r2)


def log_density(dist: RankOneGaussian, x: np.ndarray) -> float:
    """Log-density of the mean-centered offset x under N(0, C).

    -(d/2) log(2 pi) - lam d - (1/2) log(1+r^2)
    - (1/2) e^{-2 lam} x^T x + (1/2) e^{-2 lam}/(1+r^2) (x^T u)^2
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dist.d,):
        raise DimensionError(f"x has shape {x.shape}, expected ({dist.d},)")
    d = dist.d
    r2 = dist.r2
    e2 = math.exp(-2.0 * dist.lam)
    xx = float(x @ x)
    xu = float(x @ dist.u)
    return (
        -0.5 * d * math.log(2.0 * math.pi)
        - dist.lam * d
        - 0.5 * math.log1p(r2)
        - 0.5 * e2 * xx
        + 0.5 * e2 / (1.0 + r2) * xu * xu
    )


def plain_grad(dist: RankOneGaussian, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Gradient of log_density in (lam, u) at a mean-centered offset x.

    grad_lam = -d + e^{-2 lam} (x^T x - (x^T u)^2 / (1+r^2))
    grad_u   = -u/(1+r^2)
               + e^{-2 lam} [ -(x^T u)^2 u/(1+r^2)^2 + (x^T u) x/(1+r^2) ]
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dist.d,):
        raise DimensionError(f"x has shape {x.shape}, expected ({dist.d},)")
    u = dist.u
    r2 = dist.r2
    e2 = math.exp(-2.0 * dist.lam)
    xx = float(x @ x)
    xu = float(x @ u)
    one = 1.0 + r2
    grad_lam = -float(dist.d) + e2 * (xx - xu * xu / one)
    grad_u = -u / one + e2 * (-(xu * xu) / (one * one) * u + (xu / one) * x)
    return grad_lam, grad_u


def _fmt(value: float) -> str:
    """Decimal text with 17 significant digits: exact double round-trip."""
    return format(float(value), ".17g")


def _format_float_list(values) -> str:
    """Comma-joined _fmt items, for building vector fields in JSON records."""
    return ", ".join(_fmt(x) for x in values)


def serialize(dist: RankOneGaussian, seed_epoch: int) -> str:
    """One-line JSON record: fields mu, lambda, u, seed_epoch.

    Reals are written with 17 significant digits so parsing returns the
    bit-identical double. seed_epoch is the generation counter of the stream
    that produced this state (see optimizer.restore_stepper).
    """
    mu = _format_float_list(dist.mu)
    u = _format_float_list(dist.u)
    return (
        '{"mu": [%s], "lambda": %s, "u": [%s], "seed_epoch": %d}'
        % (mu, _fmt(dist.lam), u, int(seed_epoch))
    )


def deserialize(text: str) -> tuple[RankOneGaussian, int]:
    """Inverse of serialize(); returns (distribution, seed_epoch)."""
    rec = json.loads(text)
    dist = RankOneGaussian(
        mu=np.asarray(rec["mu"], dtype=np.float64),
        lam=float(rec["lambda"]),
        u=np.asarray(rec["u"], dtype=np.float64),
    )
    return dist, int(rec["seed_epoch"])
