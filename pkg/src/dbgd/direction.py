"""Per-iteration direction subproblems.

The core subproblem projects the upper gradient onto a halfspace of
directions that retain a prescribed inner product with the lower
gradient:

    minimize ||grad_f - d||^2   subject to   grad_g . d >= phi,

where ``phi >= 0`` is a barrier level computed from the current iterate.
Its solution is ``d = grad_f + lam * grad_g`` with a closed-form
multiplier.  This module provides the barrier rules, the closed-form
solution, the orthogonal-projection (equality-constrained) variant, the
fixed-multiplier penalty direction, and an independent dual-bisection
solver used as a correctness oracle for the closed form.

All operations are pure functions of their arguments.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InfeasibleSubproblemError

Array = np.ndarray

#: Degeneracy guard on ||grad_g||^2.  At or below this value the halfspace
#: constraint is treated as vacuous (the barrier level is ~0 there as
#: well) and the projection degenerates to the identity.
DEFAULT_GUARD = 1e-24


@dataclass(frozen=True)
class GradNormSquared:
    """Barrier level ``beta * ||grad_g||^2`` with ``0 <= beta <= 1``."""

    beta: float

    def __post_init__(self):
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")


@dataclass(frozen=True)
class DynamicBarrierMin:
    """Barrier level ``min(alpha * (g - g_star), beta * ||grad_g||^2)``."""

    alpha: float
    beta: float
    g_star: float

    def __post_init__(self):
        if not (self.alpha > 0.0):
            raise ValueError("alpha must be strictly positive")
        if not (self.beta > 0.0):
            raise ValueError("beta must be strictly positive")


@dataclass(frozen=True)
class LowerLinearization:
    """Barrier level ``(g - g_star) / eta``.

    With ``eta`` equal to the step size this reproduces the projection
    onto a linearization of the lower level around the iterate, the
    classical rule for convex lower objectives.
    """

    g_star: float
    eta: float

    def __post_init__(self):
        if not (self.eta > 0.0):
            raise ValueError("eta must be strictly positive")


@dataclass(frozen=True)
class BloopOrthogonal:
    """Equality-constrained rule: ``beta * grad_g`` plus the component of
    ``grad_f`` orthogonal to ``grad_g``.  Carries no scalar barrier level;
    see :func:`bloop_direction`.
    """

    beta: float

    def __post_init__(self):
        if not (self.beta >= 0.0):
            raise ValueError("beta must be nonnegative")


BarrierRule = Union[GradNormSquared, DynamicBarrierMin, LowerLinearization, BloopOrthogonal]

_clamp_lock = threading.Lock()
_clamp_count = 0


def barrier_clamp_count() -> int:
    """Number of times a g_star-based barrier was clamped at zero.

    A nonzero count means ``g`` was evaluated below the declared lower
    optimum, which indicates a bad ``g_star``.
    """
    return _clamp_count


def reset_barrier_clamp_count() -> None:
    global _clamp_count
    with _clamp_lock:
        _clamp_count = 0


def _clamp_nonnegative(value: float) -> float:
    global _clamp_count
    if value < 0.0:
        with _clamp_lock:
            _clamp_count += 1
        return 0.0
    return value


def barrier_value(rule: BarrierRule, g_val: float, grad_g: Array) -> float:
    """Scalar barrier level for one iterate.

    Always nonnegative: levels computed from a declared ``g_star`` are
    clamped at zero (and counted, see :func:`barrier_clamp_count`) when
    ``g_val`` falls below ``g_star``.
    """
    if isinstance(rule, GradNormSquared):
        return rule.beta * float(grad_g @ grad_g)
    if isinstance(rule, DynamicBarrierMin):
        level = min(
            rule.alpha * (g_val - rule.g_star),
            rule.beta * float(grad_g @ grad_g),
        )
        return _clamp_nonnegative(level)
    if isinstance(rule, LowerLinearization):
        return _clamp_nonnegative((g_val - rule.g_star) / rule.eta)
    if isinstance(rule, BloopOrthogonal):
        raise ValueError("the orthogonal-projection rule has no scalar barrier level")
    raise TypeError(f"unknown barrier rule {rule!r}")


@dataclass(frozen=True)
class DirectionResult:
    """Direction subproblem output.

    ``lam`` is the constraint multiplier; it is nonnegative except for
    results of :func:`bloop_direction`, whose equality constraint yields a
    signed multiplier (flagged via ``equality_multiplier``).  ``phi`` is
    the constraint level in force; ``degenerate`` is set when
    ``||grad_g||^2`` fell at or below the guard and the projection
    degenerated to the identity.
    """

    d: Array
    lam: float
    phi: float
    degenerate: bool
    equality_multiplier: bool = False


def lambda_closed_form(
    grad_f: Array, grad_g: Array, phi: float, guard: float = DEFAULT_GUARD
) -> tuple[float, bool]:
    """Closed-form multiplier of the halfspace projection.

    Returns ``(max((phi - grad_f.grad_g) / ||grad_g||^2, 0), False)``, or
    ``(0, True)`` when ``||grad_g||^2 <= guard``.
    """
    if phi < 0.0:
        raise ValueError(f"phi must be nonnegative, got {phi}")
    gg = float(grad_g @ grad_g)
    if gg <= guard:
        return 0.0, True
    return max((phi - float(grad_f @ grad_g)) / gg, 0.0), False


def dbgd_direction(
    grad_f: Array, grad_g: Array, phi: float, guard: float = DEFAULT_GUARD
) -> DirectionResult:
    """Euclidean projection of ``grad_f`` onto ``{d : grad_g . d >= phi}``."""
    lam, degenerate = lambda_closed_form(grad_f, grad_g, phi, guard)
    d = grad_f + lam * grad_g
    return DirectionResult(d=d, lam=lam, phi=phi, degenerate=degenerate)


def bloop_direction(
    grad_f: Array, grad_g: Array, beta: float, guard: float = DEFAULT_GUARD
) -> DirectionResult:
    """Orthogonal-projection direction.

    ``d = beta * grad_g + [grad_f - (grad_f.grad_g / ||grad_g||^2) grad_g]``,
    the solution of the projection subproblem with the equality constraint
    ``grad_g . d = beta * ||grad_g||^2``.  The stored multiplier is the
    signed equality multiplier ``beta - grad_f.grad_g / ||grad_g||^2`` and
    may be negative; such results are excluded from multiplier-based
    stationarity certificates.  Below the guard the direction falls back
    to ``grad_f``.
    """
    gg = float(grad_g @ grad_g)
    if gg <= guard:
        return DirectionResult(
            d=np.array(grad_f, dtype=float, copy=True),
            lam=0.0,
            phi=0.0,
            degenerate=True,
            equality_multiplier=True,
        )
    lam = beta - float(grad_f @ grad_g) / gg
    d = grad_f + lam * grad_g
    return DirectionResult(
        d=d, lam=lam, phi=beta * gg, degenerate=False, equality_multiplier=True
    )


def penalty_direction(grad_f: Array, grad_g: Array, lam: float) -> DirectionResult:
    """Fixed-multiplier direction ``grad_f + lam * grad_g``.

    No constraint is enforced; ``lam >= 0`` is held for the whole run.
    """
    if not (lam >= 0.0):
        raise ValueError(f"penalty multiplier must be nonnegative, got {lam}")
    return DirectionResult(
        d=grad_f + lam * grad_g, lam=lam, phi=0.0, degenerate=False
    )


def qp_oracle_direction(
    grad_f: Array, grad_g: Array, phi: float, tol: float = 1e-10
) -> DirectionResult:
    """Independent solver for the halfspace projection, for cross-checks.

    Maximizes the one-dimensional dual by bisection on the complementarity
    residual ``grad_g . (grad_f + lam * grad_g) - phi`` (increasing in
    ``lam``), doubling the upper bracket until the constraint is
    satisfied.  Deliberately avoids the closed form so it can certify it;
    agreement is within ``tol`` in the direction norm.
    """
    if phi < 0.0:
        raise ValueError(f"phi must be nonnegative, got {phi}")
    gg = float(grad_g @ grad_g)
    if gg == 0.0:
        if phi > 0.0:
            raise InfeasibleSubproblemError(
                "grad_g = 0 with a positive barrier level: empty feasible set"
            )
        return DirectionResult(
            d=np.array(grad_f, dtype=float, copy=True),
            lam=0.0,
            phi=phi,
            degenerate=False,
        )

    fg = float(grad_f @ grad_g)

    def residual(lam: float) -> float:
        return fg + lam * gg - phi

    if residual(0.0) >= 0.0:
        # Constraint inactive at the unconstrained optimum.
        return DirectionResult(
            d=np.array(grad_f, dtype=float, copy=True),
            lam=0.0,
            phi=phi,
            degenerate=False,
        )

    hi = 1.0
    while residual(hi) < 0.0:
        hi *= 2.0
    lo = 0.0
    norm_g = np.sqrt(gg)
    # Bisect until the multiplier bracket maps to a direction error <= tol.
    for _ in range(20000):
        if (hi - lo) * norm_g <= tol:
            break
        mid = 0.5 * (lo + hi)
        if residual(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    return DirectionResult(
        d=grad_f + lam * grad_g, lam=lam, phi=phi, degenerate=False
    )
