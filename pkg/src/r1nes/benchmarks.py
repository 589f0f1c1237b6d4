"""Twelve noise-free unimodal benchmark functions with shift/rotation
transforms, maximization convention (fitness = -cost, optimum value 0).

Every raw function attains its minimum value 0 at a known point z_star.
A problem evaluates x by centering on the optimum it drew, optionally
rotating, then translating into raw coordinates:

    z = R (x - x_opt) + z_star,    fitness(x) = -(f_raw(z) + f_opt)

so fitness(x_opt) = -f_opt always (f_opt defaults to 0), and the default
target of -1e-8 relative to f_opt means "cost within 1e-8 of optimal".

Functions marked separable (sphere, ellipsoid, linear_slope,
attractive_sector) receive only the shift; the rest receive shift plus a
rotation drawn by QR-orthonormalizing a seeded Gaussian matrix, which makes
them non-separable in the search coordinates.

Conditioned quadratics follow the standard noiseless-benchmark definitions
(ellipsoid weights 10^(6 i/(d-1)); tablet 1e6 z_1^2 + sum z_i^2; cigar
z_1^2 + 1e6 sum z_i^2). linear_slope's optimum sits on a +-5 corner and its
cost is flat at 0 past that corner, mirroring the boundary-optimum
convention for slope functions; in raw coordinates that reads
sum_i max(0, -s_i z_i).

Evaluation counting note: counting is owned by the run loop (every batch
passes through the run's counting wrapper and is tallied by row count
before the optimizer sees fitness values), so an optimizer cannot bypass
or double-count evaluations; Problem itself is immutable and stateless.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError

__all__ = ["Problem", "FUNCTION_NAMES", "SEPARABLE_NAMES", "make_problem", "make_suite", "suite_manifest"]

DEFAULT_TARGET_OFFSET = 1e-8

SEPARABLE_NAMES = ("sphere", "ellipsoid", "linear_slope", "attractive_sector")

FUNCTION_NAMES = (
    "sphere",
    "linear_slope",
    "attractive_sector",
    "ellipsoid",
    "step_ellipsoid",
    "rotated_ellipsoid",
    "tablet",
    "cigar",
    "rosenbrock",
    "sharp_ridge",
    "bent_cigar",
    "different_powers",
)


def _ellipsoid_weights(d: int, exponent_span: float) -> np.ndarray:
    return 10.0 ** (exponent_span * np.arange(d) / (d - 1))


def _raw_sphere(d: int, ctx: dict) -> Callable:
    return lambda Z: np.einsum("ij,ij->i", Z, Z)


def _raw_linear_slope(d: int, ctx: dict) -> Callable:
    signs = ctx["corner_signs"]
    s = signs * 10.0 ** (np.arange(d) / (d - 1))

    def raw(Z):
        return np.maximum(0.0, -Z * s).sum(axis=1)

    return raw


def _raw_attractive_sector(d: int, ctx: dict) -> Callable:
    direction = ctx["sector_direction"]

    def raw(Z):
        s = np.where(Z * direction > 0.0, 100.0, 1.0)
        t = s * Z
        return np.einsum("ij,ij->i", t, t)

    return raw


def _raw_ellipsoid(d: int, ctx: dict) -> Callable:
    w = _ellipsoid_weights(d, 6.0)
    return lambda Z: np.einsum("ij,j,ij->i", Z, w, Z)


def _raw_step_ellipsoid(d: int, ctx: dict) -> Callable:
    w = _ellipsoid_weights(d, 2.0)

    def raw(Z):
        coarse = np.floor(0.5 + Z)
        fine = np.floor(0.5 + 10.0 * Z) / 10.0
        zt = np.where(np.abs(Z) > 0.5, coarse, fine)
        plateau = np.einsum("ij,j,ij->i", zt, w, zt)
        return 0.1 * np.maximum(np.abs(Z[:, 0]) / 1e4, plateau)

    return raw


def _raw_tablet(d: int, ctx: dict) -> Callable:
    def raw(Z):
        tail = np.einsum("ij,ij->i", Z[:, 1:], Z[:, 1:])
        return 1e6 * Z[:, 0] ** 2 + tail

    return raw


def _raw_cigar(d: int, ctx: dict) -> Callable:
    def raw(Z):
        tail = np.einsum("ij,ij->i", Z[:, 1:], Z[:, 1:])
        return Z[:, 0] ** 2 + 1e6 * tail

    return raw


def _raw_rosenbrock(d: int, ctx: dict) -> Callable:
    def raw(Z):
        a = Z[:, :-1]
        b = Z[:, 1:]
        return (100.0 * (b - a * a) ** 2 + (1.0 - a) ** 2).sum(axis=1)

    return raw


def _raw_sharp_ridge(d: int, ctx: dict) -> Callable:
    def raw(Z):
        tail = np.einsum("ij,ij->i", Z[:, 1:], Z[:, 1:])
        return Z[:, 0] ** 2 + 100.0 * np.sqrt(tail)

    return raw


def _raw_bent_cigar(d: int, ctx: dict) -> Callable:
    beta_ramp = 0.5 * np.arange(d) / (d - 1)

    def raw(Z):
        positive = Z > 0.0
        expo = 1.0 + beta_ramp * np.sqrt(np.where(positive, Z, 0.0))
        T = np.where(positive, np.where(positive, Z, 1.0) ** expo, Z)
        tail = np.einsum("ij,ij->i", T[:, 1:], T[:, 1:])
        return T[:, 0] ** 2 + 1e6 * tail

    return raw


def _raw_different_powers(d: int, ctx: dict) -> Callable:
    expo = 2.0 + 4.0 * np.arange(d) / (d - 1)

    def raw(Z):
        return np.sqrt((np.abs(Z) ** expo).sum(axis=1))

    return raw


_BUILDERS = {
    "sphere": _raw_sphere,
    "linear_slope": _raw_linear_slope,
    "attractive_sector": _raw_attractive_sector,
    "ellipsoid": _raw_ellipsoid,
    "step_ellipsoid": _raw_step_ellipsoid,
    "rotated_ellipsoid": _raw_ellipsoid,
    "tablet": _raw_tablet,
    "cigar": _raw_cigar,
    "rosenbrock": _raw_rosenbrock,
    "sharp_ridge": _raw_sharp_ridge,
    "bent_cigar": _raw_bent_cigar,
    "different_powers": _raw_different_powers,
}


@dataclass(frozen=True)
class Problem:
    """One immutable benchmark instance.

    shift is the argmax in search coordinates (x_opt); rotation is None for
    separable instances. target_fitness is what a run must reach to count
    as solved.
    """

    name: str
    dimension: int
    separable: bool
    rotation: Optional[np.ndarray]
    shift: np.ndarray
    f_opt: float
    _raw: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _z_star: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.shift.setflags(write=False)
        self._z_star.setflags(write=False)
        if self.rotation is not None:
            self.rotation.setflags(write=False)

    @property
    def target_fitness(self) -> float:
        return -self.f_opt - DEFAULT_TARGET_OFFSET

    def evaluate_batch(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != self.dimension:
            raise DimensionError(
                f"expected a (count, {self.dimension}) batch, got shape {points.shape}"
            )
        Z = points - self.shift
        if self.rotation is not None:
            Z = Z @ self.rotation.T
        if self._z_star.any():
            Z = Z + self._z_star
        return -(self._raw(Z) + self.f_opt)

    def evaluate(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dimension,):
            raise DimensionError(f"expected a length-{self.dimension} vector, got shape {x.shape}")
        return float(self.evaluate_batch(x[None, :])[0])

    def transform_digest(self) -> str:
        """Hash of everything that positions this instance (rotation, shift,
        raw-coordinate optimum, offset): equal digests mean the same
        landscape in search coordinates."""
        h = hashlib.sha256()
        h.update(self.name.encode())
        h.update(b"|rot|")
        h.update(b"none" if self.rotation is None else np.ascontiguousarray(self.rotation).tobytes())
        h.update(b"|shift|")
        h.update(self.shift.tobytes())
        h.update(b"|zstar|")
        h.update(self._z_star.tobytes())
        h.update(b"|fopt|")
        h.update(format(self.f_opt, ".17g").encode())
        return h.hexdigest()[:16]


def _orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def make_problem(
    name: str,
    d: int,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    draw_f_opt: bool = False,
) -> Problem:
    """Build one benchmark instance.

    With seed (or rng) the transform is drawn: shift uniform in [-4, 4]^d,
    rotation for non-separable names, corner/sector orientation for the two
    functions that need one. With neither, the identity instance: zero
    shift, no rotation (linear_slope still gets its +5 corner, since a
    corner is part of the function's definition, in which case the shift is
    the corner itself).
    """
    if d < 2:
        raise DimensionError("dimension must be >= 2")
    if name not in _BUILDERS:
        raise KeyError(f"unknown benchmark function {name!r}")
    if rng is None and seed is not None:
        rng = np.random.Generator(np.random.PCG64(seed))
    separable = name in SEPARABLE_NAMES
    ctx: dict = {}
    rotation = None
    f_opt = 0.0
    if rng is not None:
        shift = rng.uniform(-4.0, 4.0, d)
        if not separable:
            rotation = _orthogonal(d, rng)
        if draw_f_opt:
            f_opt = float(rng.uniform(-100.0, 100.0))
    else:
        shift = np.zeros(d)

    if name == "linear_slope":
        signs = np.where(shift >= 0.0, 1.0, -1.0) if rng is not None else np.ones(d)
        ctx["corner_signs"] = signs
        shift = 5.0 * signs
    elif name == "attractive_sector":
        ctx["sector_direction"] = np.where(shift >= 0.0, 1.0, -1.0) if rng is not None else np.ones(d)

    z_star = np.ones(d) if name == "rosenbrock" else np.zeros(d)
    if rng is None and name != "linear_slope":
        shift = z_star.copy()
    raw = _BUILDERS[name](d, ctx)
    return Problem(
        name=name,
        dimension=d,
        separable=separable,
        rotation=rotation,
        shift=np.ascontiguousarray(shift),
        f_opt=f_opt,
        _raw=raw,
        _z_star=np.ascontiguousarray(z_star),
    )


def make_suite(d: int, seed: int, draw_f_opt: bool = False) -> list[Problem]:
    """All twelve functions at dimension d, transforms drawn deterministically
    from seed (one shared stream, fixed function order)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return [make_problem(name, d, rng=rng, draw_f_opt=draw_f_opt) for name in FUNCTION_NAMES]


def suite_manifest(problems: list[Problem], seed: Optional[int] = None) -> str:
    """JSON manifest describing a suite: per function the name, dimension,
    separability flag, target, and transform digest."""
    doc = {
        "seed": seed,
        "functions": [
            {
                "name": p.name,
                "dimension": p.dimension,
                "separable": p.separable,
                "rotated": p.rotation is not None,
                "target_fitness": p.target_fitness,
                "transform_digest": p.transform_digest(),
            }
            for p in problems
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)
