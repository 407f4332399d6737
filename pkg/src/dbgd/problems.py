"""Simple bilevel problem instances.

A problem couples an upper objective ``f`` with a lower objective ``g``
over a shared variable ``x`` in R^n; the feasible set of the bilevel
problem is the set of global minimizers of ``g``.  Instances bundle value
and gradient evaluators, an optional Hessian-vector product for ``g``, an
optional known lower optimum ``g*``, and smoothness constants consumed by
step-size schedules and inequality monitors.

Matrix-valued problems store their variable flattened in row-major order,
so every solver sees a plain vector interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import CapabilityError

Array = np.ndarray


def rng(seed: int) -> np.random.Generator:
    """Seeded generator used everywhere randomness is needed.

    Backed by PCG64, a documented 64-bit algorithm that is fixed across
    platforms and numpy releases, so equal seeds reproduce bit-identical
    streams.  All built-in problems, experiment configs, and samplers draw
    from generators created here.
    """
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class SmoothnessProfile:
    """Gradient-smoothness constants for a problem.

    ``lip_grad_f`` and ``lip_grad_g`` are Lipschitz constants of the
    gradients of ``f`` and ``g``; ``grad_f_bound`` bounds ``||grad f||``
    (``None`` when no useful bound is declared).  For nonconvex instances
    the constants are valid on a declared region rather than globally; the
    region is documented by each problem constructor.
    """

    lip_grad_f: float
    lip_grad_g: float
    grad_f_bound: Optional[float] = None

    def __post_init__(self):
        if not (self.lip_grad_f > 0.0):
            raise ValueError("lip_grad_f must be strictly positive")
        if not (self.lip_grad_g > 0.0):
            raise ValueError("lip_grad_g must be strictly positive")
        if self.grad_f_bound is not None and not (self.grad_f_bound > 0.0):
            raise ValueError("grad_f_bound must be strictly positive when given")

    @property
    def lip_total(self) -> float:
        """Sum of the two gradient Lipschitz constants."""
        return self.lip_grad_f + self.lip_grad_g


@dataclass(frozen=True)
class ProblemSpec:
    """A simple bilevel instance.

    Evaluators must be re-entrant and side-effect free; a constructed
    instance is immutable and safe to share across concurrent runs.

    Parameters
    ----------
    name : str
        Short identifier used in traces and CLI output.
    dim : int
        Dimension of the flattened variable.
    smoothness : SmoothnessProfile
        Constants used by schedules and monitors.
    f, g : callable
        Upper / lower objective, ``x -> float``.
    grad_f, grad_g : callable
        Analytic gradients, ``x -> ndarray`` of shape ``(dim,)``.
    hvp_g : callable, optional
        Hessian-vector product of ``g``: ``(x, v) -> ndarray``.
    g_star : float, optional
        Known minimum value of ``g``.  When present, every ``eval_g`` call
        asserts ``g(x) >= g_star`` in debug mode (``python`` without
        ``-O``).
    sample : callable, optional
        ``generator -> ndarray`` drawing a representative test point;
        defaults to a standard normal vector.  Used by gradient audits.
    """

    name: str
    dim: int
    smoothness: SmoothnessProfile
    f: Callable[[Array], float]
    g: Callable[[Array], float]
    grad_f: Callable[[Array], Array]
    grad_g: Callable[[Array], Array]
    hvp_g: Optional[Callable[[Array, Array], Array]] = None
    g_star: Optional[float] = None
    sample: Optional[Callable[[np.random.Generator], Array]] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")

    @property
    def has_g_star(self) -> bool:
        return self.g_star is not None

    @property
    def has_hvp(self) -> bool:
        return self.hvp_g is not None

    def eval_f(self, x: Array) -> float:
        return float(self.f(x))

    def eval_g(self, x: Array) -> float:
        value = float(self.g(x))
        assert self.g_star is None or value >= self.g_star, (
            f"g(x) = {value} fell below the declared optimum g* = {self.g_star}"
        )
        return value

    def eval_grad_f(self, x: Array) -> Array:
        return np.asarray(self.grad_f(x), dtype=float)

    def eval_grad_g(self, x: Array) -> Array:
        return np.asarray(self.grad_g(x), dtype=float)

    def eval_hvp_g(self, x: Array, v: Array) -> Array:
        if self.hvp_g is None:
            raise CapabilityError("hvp_g")
        return np.asarray(self.hvp_g(x, v), dtype=float)

    def sample_point(self, gen: np.random.Generator) -> Array:
        if self.sample is not None:
            return np.asarray(self.sample(gen), dtype=float)
        return gen.standard_normal(self.dim)


def toy_problem() -> ProblemSpec:
    """Two-dimensional nonconvex instance with a sinusoidal lower curve.

    Upper objective ``(x1 + pi/20)^2 + (x2 + 1)^2``; lower objective
    ``(x2 - sin(10 x1))^2``, whose minimizers form the curve
    ``x2 = sin(10 x1)`` with optimum value 0.  The point
    ``(-pi/20, -1)`` lies on the curve and also minimizes the upper
    objective.

    The smoothness constants are valid on the box ``[-4, 4]^2``:
    ``L_f = 2`` exactly, ``L_g = 1220`` from an infinity-norm bound on the
    lower Hessian (``|x2 - sin(10 x1)| <= 5`` on the box), and the
    gradient bound is attained at the corner ``(4, 4)``.
    """

    def f(x: Array) -> float:
        return (x[0] + math.pi / 20.0) ** 2 + (x[1] + 1.0) ** 2

    def grad_f(x: Array) -> Array:
        return np.array([2.0 * (x[0] + math.pi / 20.0), 2.0 * (x[1] + 1.0)])

    def g(x: Array) -> float:
        e = x[1] - math.sin(10.0 * x[0])
        return e * e

    def grad_g(x: Array) -> Array:
        c = math.cos(10.0 * x[0])
        e = x[1] - math.sin(10.0 * x[0])
        return np.array([-20.0 * c * e, 2.0 * e])

    def hvp_g(x: Array, v: Array) -> Array:
        s = math.sin(10.0 * x[0])
        c = math.cos(10.0 * x[0])
        e = x[1] - s
        h11 = 200.0 * s * e + 200.0 * c * c
        h12 = -20.0 * c
        return np.array([h11 * v[0] + h12 * v[1], h12 * v[0] + 2.0 * v[1]])

    def sample(gen: np.random.Generator) -> Array:
        return gen.uniform(-4.0, 4.0, size=2)

    profile = SmoothnessProfile(
        lip_grad_f=2.0,
        lip_grad_g=1220.0,
        grad_f_bound=2.0 * math.hypot(4.0 + math.pi / 20.0, 5.0),
    )
    return ProblemSpec(
        name="toy",
        dim=2,
        smoothness=profile,
        f=f,
        g=g,
        grad_f=grad_f,
        grad_g=grad_g,
        hvp_g=hvp_g,
        g_star=0.0,
        sample=sample,
    )


def quadratic_sanity_problem(n: int, box_radius: float = 2.0) -> ProblemSpec:
    """Convex instance with a known closed-form solution, for oracle tests.

    ``f(x) = 0.5 ||x - 1||^2`` and ``g(x) = 0.5 ||x||^2``; the lower
    solution set is the singleton ``{0}``, which is therefore also the
    unique bilevel solution.  Both Hessians are the identity, so the
    smoothness descent inequalities hold with equality and
    ``L_f = L_g = 1`` are exact.  The gradient bound is taken over the box
    ``|x_i| <= box_radius`` (attained at ``-box_radius * ones``).
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    if not (box_radius > 0.0):
        raise ValueError("box_radius must be strictly positive")

    ones = np.ones(n)

    def f(x: Array) -> float:
        diff = x - ones
        return 0.5 * float(diff @ diff)

    def g(x: Array) -> float:
        return 0.5 * float(x @ x)

    def grad_f(x: Array) -> Array:
        return x - ones

    def grad_g(x: Array) -> Array:
        return np.array(x, dtype=float, copy=True)

    def hvp_g(x: Array, v: Array) -> Array:
        return np.array(v, dtype=float, copy=True)

    def sample(gen: np.random.Generator) -> Array:
        return gen.uniform(-box_radius, box_radius, size=n)

    profile = SmoothnessProfile(
        lip_grad_f=1.0,
        lip_grad_g=1.0,
        grad_f_bound=(1.0 + box_radius) * math.sqrt(n),
    )
    return ProblemSpec(
        name="quadratic",
        dim=n,
        smoothness=profile,
        f=f,
        g=g,
        grad_f=grad_f,
        grad_g=grad_g,
        hvp_g=hvp_g,
        g_star=0.0,
        sample=sample,
    )


def matrix_factorization_problem(
    n: int,
    r: int,
    alpha: float,
    variant: str = "smooth-l1",
    noise_std: float = 0.1,
    seed: int = 0,
) -> ProblemSpec:
    """Symmetric low-rank reconstruction with a sparsity-promoting upper level.

    A ground-truth factor ``U*`` with seeded standard-normal entries forms
    the target ``M = U* U*^T + eps I`` where ``eps`` is a single normal
    draw with standard deviation ``noise_std``.  The lower objective is
    the reconstruction loss ``g(V) = ||M - V V^T||_F^2``; the upper
    objective is a smooth sparsity surrogate over the entries of the
    factor:

    * ``smooth-l1``:   ``sum_ij sqrt(U_ij^2 + alpha)``
    * ``log-smooth``:  ``sum_ij log(1 + U_ij^2 / alpha)``

    Variables are ``n x r`` matrices stored flattened in row-major order.
    The lower optimum is not declared (``g_star is None``).  The upper
    smoothness constants are global (``L_f = 1/sqrt(alpha)`` respectively
    ``2/alpha``; the gradient bound follows from the entrywise bounds);
    the lower constant is a bound on the reconstruction Hessian over the
    Frobenius ball of radius ``2 * max(1, ||U*||_F)``.
    """
    if r < 1:
        raise ValueError("r must be a positive integer")
    if r > n:
        raise ValueError(f"rank r = {r} exceeds dimension n = {n}")
    if not (alpha > 0.0):
        raise ValueError("alpha must be strictly positive")
    if variant not in ("smooth-l1", "log-smooth"):
        raise ValueError(f"unknown variant {variant!r}")

    gen = rng(seed)
    u_star = gen.standard_normal((n, r))
    eps = noise_std * gen.standard_normal()
    m = u_star @ u_star.T + eps * np.eye(n)
    m = 0.5 * (m + m.T)  # enforce exact symmetry of the BLAS product

    if variant == "smooth-l1":

        def f(x: Array) -> float:
            return float(np.sum(np.sqrt(x * x + alpha)))

        def grad_f(x: Array) -> Array:
            return x / np.sqrt(x * x + alpha)

        lip_f = 1.0 / math.sqrt(alpha)
        bound_f = math.sqrt(n * r)
    else:

        def f(x: Array) -> float:
            return float(np.sum(np.log1p(x * x / alpha)))

        def grad_f(x: Array) -> Array:
            return 2.0 * x / (alpha + x * x)

        lip_f = 2.0 / alpha
        bound_f = math.sqrt(n * r / alpha)

    def g(x: Array) -> float:
        v = x.reshape(n, r)
        res = v @ v.T - m
        return float(np.sum(res * res))

    def grad_g(x: Array) -> Array:
        v = x.reshape(n, r)
        return (4.0 * ((v @ v.T - m) @ v)).reshape(-1)

    def hvp_g(x: Array, w_flat: Array) -> Array:
        v = x.reshape(n, r)
        w = w_flat.reshape(n, r)
        out = (w @ v.T + v @ w.T) @ v + (v @ v.T - m) @ w
        return (4.0 * out).reshape(-1)

    def sample(gen: np.random.Generator) -> Array:
        return 0.3 * gen.standard_normal(n * r)

    radius = 2.0 * max(1.0, float(np.linalg.norm(u_star)))
    lip_g = 4.0 * (3.0 * radius**2 + float(np.linalg.norm(m, 2)))

    return ProblemSpec(
        name=f"matfac-{variant}",
        dim=n * r,
        smoothness=SmoothnessProfile(
            lip_grad_f=lip_f, lip_grad_g=lip_g, grad_f_bound=bound_f
        ),
        f=f,
        g=g,
        grad_f=grad_f,
        grad_g=grad_g,
        hvp_g=hvp_g,
        g_star=None,
        sample=sample,
    )
