"""Stochastic (dithered) scalar quantizers and the context quantizer.

The scalar quantizer maps a real number onto an integer level grid by
randomized rounding: the two neighbouring levels are chosen with
probabilities proportional to proximity, so the decoded value is an
unbiased estimate of the input and the error never exceeds one grid step.

The context quantizer compresses a d-dimensional feature vector of
Euclidean norm at most 1 into

  * a sign vector (one bit per coordinate),
  * an integer magnitude vector living on the lattice
    ``{v in N^d : ||v||_1 <= 2d}``,
  * a one-bit-per-coordinate correction for the squared coordinates,

which together are enough for a learner to build unbiased estimates of
both the vector and its elementwise square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuantizationRangeError",
    "AssumptionViolation",
    "StochasticQuantizer",
    "QuantizedContext",
    "magnitude_scale",
    "quantize_context",
    "reconstruct_context",
]

# Slack absorbed when inputs sit on the boundary up to fp rounding.
_BOUNDARY_TOL = 1e-9


class QuantizationRangeError(ValueError):
    """Input lies outside the quantizer's declared range."""


class AssumptionViolation(ValueError):
    """A modelling assumption (norm or reward bound) does not hold."""


@dataclass(frozen=True)
class StochasticQuantizer:
    """Randomized rounding onto ``levels + 1`` uniformly spaced points in [lower, upper]."""

    levels: int
    lower: float = 0.0
    upper: float | None = None

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.upper is None:
            object.__setattr__(self, "upper", float(self.levels))
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        if not self.upper > self.lower:
            raise ValueError(
                f"empty quantizer range [{self.lower}, {self.upper}]"
            )

    @property
    def step(self) -> float:
        """Grid spacing; also the worst-case absolute decode error."""
        return (self.upper - self.lower) / self.levels

    def encode(self, x, rng: np.random.Generator):
        """Randomly round ``x`` (scalar or array) to integer levels in 0..levels."""
        x = np.asarray(x, dtype=float)
        lo, hi = self.lower, self.upper
        if np.any(x < lo - _BOUNDARY_TOL) or np.any(x > hi + _BOUNDARY_TOL):
            bad = int(np.argmax((x < lo - _BOUNDARY_TOL) | (x > hi + _BOUNDARY_TOL)))
            raise QuantizationRangeError(
                f"input {x.flat[bad]} at position {bad} outside [{lo}, {hi}]"
            )
        scaled = np.clip((x - lo) * (self.levels / (hi - lo)), 0.0, self.levels)
        base = np.floor(scaled)
        frac = scaled - base
        level = base + (rng.random(scaled.shape) < frac)
        level = np.minimum(level.astype(np.int64), self.levels)
        return level if level.ndim else int(level)

    def decode(self, level):
        """Map integer levels back to real values on the grid."""
        level = np.asarray(level)
        if np.any(level < 0) or np.any(level > self.levels):
            raise QuantizationRangeError(
                f"level outside 0..{self.levels}: {level}"
            )
        out = self.lower + level * self.step
        return out if out.ndim else float(out)

    def roundtrip(self, x, rng: np.random.Generator):
        """Encode then decode; unbiased with |result - x| <= step."""
        return self.decode(self.encode(x, rng))


def magnitude_scale(d: int) -> int:
    """Magnitude grid resolution used for d-dimensional contexts: ceil(sqrt(d))."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    return math.isqrt(d - 1) + 1


@dataclass(frozen=True)
class QuantizedContext:
    """Compressed representation of one played context vector.

    signs       -- length-d array of +1/-1 (sign of each coordinate, +1 at 0)
    magnitudes  -- length-d int array, stochastic rounding of m*|x|, ||.||_1 <= 2d
    sq_errors   -- length-d array with entries in {-3/m, +3/m}, the one-bit
                   quantization of x^2 - xhat^2
    m           -- magnitude grid resolution, ceil(sqrt(d))
    """

    signs: np.ndarray
    magnitudes: np.ndarray
    sq_errors: np.ndarray
    m: int

    @property
    def d(self) -> int:
        return self.signs.size


def _enforce_l1_budget(levels: np.ndarray, scaled: np.ndarray, budget: int) -> np.ndarray:
    """Demote rounded-up coordinates until sum(levels) <= budget.

    With resolution m = ceil(sqrt(d)) the randomized rounding can, with
    positive but tiny probability, overshoot the lattice budget 2d when d
    is not a perfect square.  Dropping a rounded-up coordinate back to its
    floor keeps the per-coordinate error under one grid step, and the
    all-floor vector always satisfies the budget, so this terminates.
    Demotion order: smallest fractional part first (lowest index on ties).
    """
    excess = int(levels.sum()) - budget
    if excess <= 0:
        return levels
    floors = np.floor(scaled).astype(np.int64)
    frac = scaled - floors
    demotable = np.flatnonzero(levels > floors)
    order = demotable[np.argsort(frac[demotable], kind="stable")]
    levels = levels.copy()
    levels[order[:excess]] -= 1
    if levels.sum() > budget:
        raise AssertionError("magnitude budget unsatisfiable; input norm > 1?")
    return levels


def quantize_context(x, rng: np.random.Generator) -> QuantizedContext:
    """Compress a unit-ball vector into signs, lattice magnitudes and square bits."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {x.shape}")
    d = x.size
    norm = float(np.linalg.norm(x))
    if norm > 1.0 + _BOUNDARY_TOL:
        raise AssumptionViolation(f"context norm {norm} exceeds 1")
    m = magnitude_scale(d)

    signs = np.where(x < 0, -1, 1).astype(np.int8)
    scaled = np.clip(m * np.abs(x), 0.0, float(m))
    mag_q = StochasticQuantizer(m)
    magnitudes = np.atleast_1d(mag_q.encode(scaled, rng)).astype(np.int64)
    magnitudes = _enforce_l1_budget(magnitudes, scaled, 2 * d)

    xhat = signs * magnitudes / m
    err_q = StochasticQuantizer(1, lower=-3.0 / m, upper=3.0 / m)
    sq_errors = np.atleast_1d(err_q.decode(err_q.encode(x * x - xhat * xhat, rng)))
    return QuantizedContext(signs=signs, magnitudes=magnitudes, sq_errors=sq_errors, m=m)


def reconstruct_context(qc: QuantizedContext) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased estimates (xhat, xsq_hat) of the context and its elementwise square."""
    xhat = qc.signs * qc.magnitudes / qc.m
    xsq_hat = xhat * xhat + qc.sq_errors
    return xhat, xsq_hat
