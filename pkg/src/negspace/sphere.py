"""Spherical geometry kernels for negation-aware scoring.

All directions are unit vectors on the d-sphere and similarities are dot
products. A negated query ("A but not N") is scored by the central
direction of the region that is inside the cap around the affirmative
embedding and outside the cap around the negated one. Two variants of
that direction are provided:

- ``slerp-center`` (default): great-circle interpolation from the
  affirmative embedding toward the negated one by the signed angle
  theta/2 - alpha. Analytically unit-norm, and it coincides with the
  brute-force cap-intersection midpoint whenever the caps overlap
  (theta < 2*alpha).
- ``mirror``: same coefficients but with the negated term added instead
  of subtracted, which lands on the mirrored side of the affirmative
  axis, away from the negated embedding. Kept as a named variant because
  the two sign conventions circulate and differ materially.

Computation is float64 throughout, regardless of storage precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    ConceptsAntipodal,
    ConceptsIndistinguishable,
    DimensionMismatch,
    NearZeroVector,
    ThresholdOutOfRange,
)

__all__ = [
    "VARIANTS",
    "VARIANT_SLERP_CENTER",
    "VARIANT_MIRROR",
    "SphericalCap",
    "NegationQuery",
    "normalize",
    "angle_between",
    "cap_radius",
    "cap_contains",
    "negation_direction",
    "negation_query",
    "score",
    "feasible_arc_centroid_oracle",
]

VARIANT_SLERP_CENTER = "slerp-center"
VARIANT_MIRROR = "mirror"
VARIANTS = (VARIANT_SLERP_CENTER, VARIANT_MIRROR)

# sin(theta) in the denominator explodes near 0 and pi
THETA_MIN = 1e-4

_NORM_FLOOR = 1e-12


def normalize(v) -> np.ndarray:
    """Return v / ||v|| as a float64 unit vector.

    Raises NearZeroVector when ||v|| <= 1e-12 and DimensionMismatch for
    inputs that are not 1-D with at least two components.
    """
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1 or a.size < 2:
        raise DimensionMismatch(f"expected a 1-D vector of dim >= 2, got shape {a.shape}")
    n = float(np.linalg.norm(a))
    if not n > _NORM_FLOOR:
        raise NearZeroVector(f"norm {n:.3e} is below {_NORM_FLOOR:.0e}")
    return a / n


def _check_dims(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape != v.shape:
        raise DimensionMismatch(f"dims differ: {u.shape} vs {v.shape}")


def angle_between(u, v) -> float:
    """Angle in [0, pi] between two unit vectors.

    Computed as 2*atan2(||u - v||, ||u + v||), which equals the arccos of
    the (clamped) dot product but stays fully accurate where arccos is
    ill-conditioned (nearly parallel or antiparallel inputs); the scoring
    direction inherits that accuracy near the degeneracy thresholds.
    Rounding can never produce a domain error.
    """
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    _check_dims(a, b)
    return 2.0 * math.atan2(float(np.linalg.norm(a - b)),
                            float(np.linalg.norm(a + b)))


def cap_radius(t: float) -> float:
    """Angular radius arccos(t) of the cap with cosine threshold t."""
    if not -1.0 <= t <= 1.0:
        raise ThresholdOutOfRange(f"threshold {t} outside [-1, 1]")
    return math.acos(t)


@dataclass(frozen=True)
class SphericalCap:
    """A spherical cap: center direction plus cosine threshold.

    ``alpha`` is the derived angular radius arccos(threshold_t).
    """

    center: np.ndarray
    threshold_t: float

    def __post_init__(self):
        object.__setattr__(self, "center", normalize(self.center))
        cap_radius(self.threshold_t)  # range check

    @property
    def alpha(self) -> float:
        return math.acos(self.threshold_t)


def cap_contains(z, cap: SphericalCap) -> bool:
    """True iff z lies inside the cap (center . z >= threshold)."""
    a = np.asarray(z, dtype=np.float64)
    _check_dims(a, cap.center)
    return bool(float(cap.center @ a) >= cap.threshold_t)


def _check_variant(variant: str) -> None:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")


def negation_direction(e_a, e_n, t: float, variant: str = VARIANT_SLERP_CENTER) -> np.ndarray:
    """Unit scoring direction for an affirmative/negated embedding pair.

    With theta the angle between the embeddings and alpha = arccos(t):

        slerp-center:  [sin(alpha + theta/2) e_a - sin(alpha - theta/2) e_n] / sin(theta)
        mirror:        [sin(alpha + theta/2) e_a + sin(alpha - theta/2) e_n] / sin(theta)

    followed by normalization. The result always lies in the 2-plane
    spanned by the inputs. slerp-center equals the great-circle point at
    signed angle theta/2 - alpha from e_a toward e_n.

    Raises ConceptsIndistinguishable / ConceptsAntipodal when theta is
    within 1e-4 of 0 / pi, and ThresholdOutOfRange unless -1 < t < 1.
    """
    _check_variant(variant)
    if not -1.0 < t < 1.0:
        raise ThresholdOutOfRange(f"threshold {t} outside (-1, 1)")
    a = normalize(e_a)
    n = normalize(e_n)
    _check_dims(a, n)
    theta = angle_between(a, n)
    if theta <= THETA_MIN:
        raise ConceptsIndistinguishable(f"theta {theta:.3e} <= {THETA_MIN:.0e}")
    if theta >= math.pi - THETA_MIN:
        raise ConceptsAntipodal(f"theta {theta:.6f} >= pi - {THETA_MIN:.0e}")
    alpha = math.acos(t)
    sin_theta = math.sin(theta)
    c_a = math.sin(alpha + theta / 2.0) / sin_theta
    c_n = math.sin(alpha - theta / 2.0) / sin_theta
    if variant == VARIANT_SLERP_CENTER:
        d = c_a * a - c_n * n
    else:
        d = c_a * a + c_n * n
    return normalize(d)


@dataclass(frozen=True)
class NegationQuery:
    """A scoring query: affirmative embedding, optional negated embedding,
    and the derived unit scoring direction.

    When ``negated`` is absent, ``direction`` is the affirmative embedding
    itself (the same array), so scoring is bit-identical to a plain dot
    product. ``theta`` is present iff ``negated`` is.
    """

    affirmative: np.ndarray
    negated: Optional[np.ndarray]
    theta: Optional[float]
    threshold_t: float
    variant: str
    direction: np.ndarray


def negation_query(e_a, e_n=None, t: float = 0.92,
                   variant: str = VARIANT_SLERP_CENTER) -> NegationQuery:
    """Build a NegationQuery, deriving the scoring direction.

    Pass-through queries (``e_n is None``) reuse the affirmative array as
    the direction, preserving bit-identical plain-dot scoring.
    """
    _check_variant(variant)
    a = normalize(e_a)
    if e_n is None:
        return NegationQuery(affirmative=a, negated=None, theta=None,
                             threshold_t=t, variant=variant, direction=a)
    n = normalize(e_n)
    d = negation_direction(a, n, t, variant)
    return NegationQuery(affirmative=a, negated=n, theta=angle_between(a, n),
                         threshold_t=t, variant=variant, direction=d)


def score(e_I, query: NegationQuery) -> float:
    """Dot product of an image embedding with the query direction."""
    v = np.asarray(e_I, dtype=np.float64)
    _check_dims(v, query.direction)
    return float(v @ query.direction)


def feasible_arc_centroid_oracle(e_a, e_n, t: float,
                                 samples: int = 200_000) -> Optional[np.ndarray]:
    """Brute-force midpoint of the feasible arc on the great circle through
    e_a and e_n.

    Restricted to that circle, a point at signed angle phi from e_a has
    dot products cos(phi) with e_a and cos(theta - phi) with e_n. The
    feasible set {cos(phi) >= t and cos(theta - phi) < t} is located by
    dense uniform sampling (>= 1e5 angles) and its endpoints are then
    refined by bisection on the membership predicate, so the returned
    midpoint is limited by float precision rather than grid pitch.

    Returns None when no sampled angle is feasible. Deliberately shares no
    code with ``negation_direction``; it exists to check that formula.
    """
    if samples < 100_000:
        raise ValueError("oracle needs at least 1e5 samples")
    if not -1.0 < t < 1.0:
        raise ThresholdOutOfRange(f"threshold {t} outside (-1, 1)")
    a = normalize(e_a)
    n = normalize(e_n)
    _check_dims(a, n)
    theta = angle_between(a, n)
    if theta <= THETA_MIN:
        raise ConceptsIndistinguishable(f"theta {theta:.3e} <= {THETA_MIN:.0e}")
    if theta >= math.pi - THETA_MIN:
        raise ConceptsAntipodal(f"theta {theta:.6f} >= pi - {THETA_MIN:.0e}")

    # in-plane orthonormal companion of e_a, oriented toward e_n
    u = n - float(a @ n) * a
    u = u / np.linalg.norm(u)

    def feasible(phi: np.ndarray) -> np.ndarray:
        return (np.cos(phi) >= t) & (np.cos(theta - phi) < t)

    grid = np.linspace(-math.pi, math.pi, samples, endpoint=False)
    mask = feasible(grid)
    if not mask.any():
        return None

    # contiguous runs on the circle (wrap-aware)
    edges = np.flatnonzero(mask != np.roll(mask, 1))
    if edges.size == 0:
        runs = [(0, samples)]  # fully feasible grid
    else:
        starts = [int(i) for i in edges if mask[i]]
        runs = []
        for s in starts:
            e = s
            while mask[(e + 1) % samples]:
                e += 1
                if e - s >= samples:
                    break
            runs.append((s, e + 1))
    s, e = max(runs, key=lambda r: r[1] - r[0])

    def bisect(lo: float, hi: float) -> float:
        # predicate flips exactly once inside (lo, hi)
        flo = bool(feasible(np.array([lo]))[0])
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if bool(feasible(np.array([mid]))[0]) == flo:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    step = 2.0 * math.pi / samples
    left = bisect(grid[s % samples] - step, grid[s % samples])
    right = bisect(grid[(e - 1) % samples], grid[(e - 1) % samples] + step)
    if right < left:
        right += 2.0 * math.pi  # run wrapped past +pi
    phi_mid = 0.5 * (left + right)
    return normalize(math.cos(phi_mid) * a + math.sin(phi_mid) * u)
