"""Independent oracles and property monitors.

Everything here checks an implemented quantity against a route that does
not share code with it: analytic gradients against central differences,
the closed-form projection against descent inequalities evaluated on
recorded traces, candidate points against sampled local-improvement
certificates, and scheduled runs against the expected decay of the
minimal potential across budgets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .direction import GradNormSquared
from .errors import CapabilityError, ConfigurationError, EvaluationError
from .problems import ProblemSpec, SmoothnessProfile, rng
from .solver import Dbgd, ScheduledStep, SolverConfig, TraceRecord, run

Array = np.ndarray


def finite_diff_check(problem: ProblemSpec, x: Array, h: float) -> float:
    """Worst mismatch between analytic and central-difference gradients.

    Compares both objectives coordinate by coordinate and returns the
    maximum of ``|fd_i - grad_i| / (1 + |grad_i|)``.
    """
    if not (h > 0.0):
        raise ValueError("h must be strictly positive")
    x = np.asarray(x, dtype=float)
    worst = 0.0
    for func, grad in ((problem.eval_f, problem.eval_grad_f),
                       (problem.eval_g, problem.eval_grad_g)):
        analytic = grad(x)
        if not np.all(np.isfinite(analytic)):
            raise EvaluationError(f"non-finite gradient at x = {x!r}")
        for i in range(problem.dim):
            step = np.zeros(problem.dim)
            step[i] = h
            hi = func(x + step)
            lo = func(x - step)
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise EvaluationError(f"non-finite objective near x = {x!r}")
            fd = (hi - lo) / (2.0 * h)
            worst = max(worst, abs(fd - analytic[i]) / (1.0 + abs(analytic[i])))
    return worst


def finite_diff_sweep(problem: ProblemSpec, points: int = 100, seed: int = 0) -> float:
    """Worst finite-difference error over seeded sample points.

    Each point uses the problem's own sampler and the step
    ``h = 1e-6 * (1 + ||x||)``.
    """
    gen = rng(seed)
    worst = 0.0
    for _ in range(points):
        x = problem.sample_point(gen)
        h = 1e-6 * (1.0 + float(np.linalg.norm(x)))
        worst = max(worst, finite_diff_check(problem, x, h))
    return worst


_SQRT_SLACK = 1e-12


def sqrt_lemma_check(a: float, b: float, x: float) -> bool:
    """Check the implication ``x <= a + b*sqrt(x)  =>  x <= 2a + b^2``.

    Vacuously true when the premise fails.  The conclusion carries a tiny
    relative slack so exact-boundary cases survive rounding.
    """
    if not (x >= 0.0 and b >= 0.0):
        raise ValueError("x and b must be nonnegative")
    if x > a + b * math.sqrt(x):
        return True
    bound = 2.0 * a + b * b
    return x <= bound + _SQRT_SLACK * (1.0 + abs(bound))


def sqrt_lemma_violations(a: Array, b: Array, x: Array) -> int:
    """Vectorized count of implication failures over sample triples."""
    premise = x <= a + b * np.sqrt(x)
    bound = 2.0 * a + b * b
    bad = x > bound + _SQRT_SLACK * (1.0 + np.abs(bound))
    return int(np.count_nonzero(premise & bad))


@dataclass(frozen=True)
class AuditReport:
    """Per-iteration outcomes of the descent-inequality monitors.

    Boolean arrays are True where the inequality held (within slack):

    * ``upper_descent``:    ``(1 - eta*L_f/2) d_sq <= delta_f/eta + lam*beta*grad_g_sq``
    * ``lower_descent``:    ``beta*grad_g_sq <= delta_g/eta + (L_g/2)*eta*d_sq``
    * ``multiplier_bound``: ``lam <= beta + G_f/||grad_g||``
    * ``direction_bound``:  ``d_sq <= 4(delta_f+beta*delta_g)/eta + 2*delta_g/(L_g eta^2) + 2 beta G_f^2 L_g eta``
    * ``potential_bound``:  ``d_sq/2 + beta*grad_g_sq/(L_g eta) <= 4(delta_f+beta*delta_g)/eta + 3*delta_g/(L_g eta^2) + 2 beta G_f^2 L_g eta``
    """

    upper_descent: Array
    lower_descent: Array
    multiplier_bound: Array
    direction_bound: Array
    potential_bound: Array

    @property
    def violations(self) -> dict[str, int]:
        return {
            "upper_descent": int(np.count_nonzero(~self.upper_descent)),
            "lower_descent": int(np.count_nonzero(~self.lower_descent)),
            "multiplier_bound": int(np.count_nonzero(~self.multiplier_bound)),
            "direction_bound": int(np.count_nonzero(~self.direction_bound)),
            "potential_bound": int(np.count_nonzero(~self.potential_bound)),
        }

    @property
    def total_violations(self) -> int:
        return sum(self.violations.values())


def inequality_audit(
    trace: TraceRecord,
    profile: SmoothnessProfile,
    eta: float,
    beta: float,
    slack: float = 1e-8,
) -> AuditReport:
    """Audit a constant-step dynamic-barrier trace against its descent bounds.

    Valid only for the grad-norm-squared rule; the profile constants must
    hold over the recorded trajectory for the outcome to be meaningful.
    All slacks are relative to the magnitude of the audited side (the
    multiplier bound uses a fixed ``1e-12``).
    """
    if trace.method_label != "dbgd:grad-norm-squared":
        raise ConfigurationError(
            f"inequality audit needs a dynamic-barrier grad-norm-squared trace, "
            f"got {trace.method_label!r}"
        )
    if trace.step_label != "constant":
        raise ConfigurationError("inequality audit needs a constant-step trace")
    if profile.grad_f_bound is None:
        raise CapabilityError("grad_f_bound")

    lf, lg, gf_bound = profile.lip_grad_f, profile.lip_grad_g, profile.grad_f_bound
    d_sq, gg_sq = trace.d_sq, trace.grad_g_sq
    lam, df, dg = trace.lam, trace.delta_f, trace.delta_g

    lhs = (1.0 - eta * lf / 2.0) * d_sq
    upper = lhs <= df / eta + lam * beta * gg_sq + slack * (1.0 + d_sq)

    lhs = beta * gg_sq
    lower = lhs <= dg / eta + 0.5 * lg * eta * d_sq + slack * (1.0 + np.abs(lhs))

    with np.errstate(divide="ignore"):
        mult_rhs = beta + gf_bound / np.sqrt(gg_sq)
    mult = lam <= mult_rhs + 1e-12

    rhs = 4.0 * (df + beta * dg) / eta + 2.0 * dg / (lg * eta**2) \
        + 2.0 * beta * gf_bound**2 * lg * eta
    direction = d_sq <= rhs + slack * (1.0 + d_sq)

    lhs = 0.5 * d_sq + beta * gg_sq / (lg * eta)
    rhs = 4.0 * (df + beta * dg) / eta + 3.0 * dg / (lg * eta**2) \
        + 2.0 * beta * gf_bound**2 * lg * eta
    potential = lhs <= rhs + slack * (1.0 + lhs)

    return AuditReport(
        upper_descent=upper,
        lower_descent=lower,
        multiplier_bound=mult,
        direction_bound=direction,
        potential_bound=potential,
    )


@dataclass(frozen=True)
class CertificateResult:
    """Outcome of a sampled local-improvement certificate.

    Margins are the minimum over samples of the certified inequality's
    slack; a negative margin is a violation.  ``upper_checked`` counts the
    samples that did not increase the lower objective (only those are
    subject to the upper condition); the upper margin is ``inf`` when none
    qualified.
    """

    passed: bool
    lower_margin: float
    upper_margin: float
    upper_checked: int
    samples: int


def sample_ball(
    center: Array, radius: float, samples: int, gen: np.random.Generator
) -> Array:
    """Uniform samples from the closed ball around ``center``.

    Normalized Gaussian directions scaled by ``radius * u^(1/n)`` with
    uniform ``u``, the standard volume-uniform construction.
    """
    n = center.shape[0]
    z = gen.standard_normal((samples, n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    scale = radius * gen.random(samples) ** (1.0 / n)
    return center + scale[:, None] * z


def certificate_radius(
    profile: SmoothnessProfile, eps_f: float, eps_g: float, delta: float, lam: float
) -> float:
    """Radius on which the local certificate is guaranteed for exact residuals.

    ``min(2 delta sqrt(eps_g) / L_g, 2 delta sqrt(eps_f) / (lam L_g + L_f))``;
    shrinks with the certificate multiplier, so it must be chosen per
    experiment rather than globally.
    """
    return min(
        2.0 * delta * math.sqrt(eps_g) / profile.lip_grad_g,
        2.0 * delta * math.sqrt(eps_f) / (lam * profile.lip_grad_g + profile.lip_grad_f),
    )


def local_certificate(
    problem: ProblemSpec,
    x_hat: Array,
    eps_f: float,
    eps_g: float,
    delta: float,
    radius: float,
    samples: int,
    seed: int = 0,
) -> CertificateResult:
    """Sampled check that no markedly better point exists near ``x_hat``.

    Draws uniform points in the ball of the given radius and verifies

    * ``g(x) >= g(x_hat) - (1+delta) sqrt(eps_g) ||x - x_hat||`` for all
      samples, and
    * ``f(x) >= f(x_hat) - (1+delta) sqrt(eps_f) ||x - x_hat||`` for the
      samples with ``g(x) <= g(x_hat)``.
    """
    if not (radius > 0.0):
        raise ValueError("radius must be strictly positive")
    if samples < 1:
        raise ValueError("samples must be a positive integer")
    x_hat = np.asarray(x_hat, dtype=float)
    gen = rng(seed)
    points = sample_ball(x_hat, radius, samples, gen)

    f_hat = problem.eval_f(x_hat)
    g_hat = problem.eval_g(x_hat)
    sf, sg = math.sqrt(eps_f), math.sqrt(eps_g)

    lower_margin = math.inf
    upper_margin = math.inf
    upper_checked = 0
    for point in points:
        dist = float(np.linalg.norm(point - x_hat))
        g_val = problem.eval_g(point)
        lower_margin = min(lower_margin, g_val - g_hat + (1.0 + delta) * sg * dist)
        if g_val <= g_hat:
            upper_checked += 1
            f_val = problem.eval_f(point)
            upper_margin = min(upper_margin, f_val - f_hat + (1.0 + delta) * sf * dist)

    return CertificateResult(
        passed=lower_margin >= 0.0 and upper_margin >= 0.0,
        lower_margin=lower_margin,
        upper_margin=upper_margin,
        upper_checked=upper_checked,
        samples=samples,
    )


@dataclass(frozen=True)
class RateFit:
    """Log-log fit of the minimal potential against the iteration budget.

    The scheduled method guarantees decay at least as fast as
    ``K^(-(2+p)/(3+p))``; the fit passes when the empirical slope is at
    most the theoretical one plus the tolerance (faster decay is fine).
    """

    k_values: tuple[int, ...]
    min_potentials: tuple[float, ...]
    fitted_slope: float
    theoretical_slope: float
    slope_tolerance: float

    @property
    def passed(self) -> bool:
        return self.fitted_slope <= self.theoretical_slope + self.slope_tolerance


def rate_fit(
    problem: ProblemSpec,
    x0: Array,
    p: float,
    k_grid: list[int],
    slope_tolerance: float = 0.3,
) -> RateFit:
    """Run the scheduled method across budgets and fit the decay slope."""
    if len(k_grid) < 3:
        raise ValueError("k_grid must contain at least 3 budgets")
    minima = []
    for k in k_grid:
        config = SolverConfig(
            method=Dbgd(GradNormSquared(1.0)),
            step=ScheduledStep(p),
            iterations=int(k),
        )
        trace = run(problem, config, x0)
        best = float(np.min(trace.potential))
        if not (best > 0.0):
            raise ValueError(
                f"minimal potential {best} at K = {k} is not positive; "
                "cannot fit a log-log slope"
            )
        minima.append(best)
    slope = float(np.polyfit(np.log(np.asarray(k_grid, dtype=float)),
                             np.log(np.asarray(minima)), 1)[0])
    return RateFit(
        k_values=tuple(int(k) for k in k_grid),
        min_potentials=tuple(minima),
        fitted_slope=slope,
        theoretical_slope=-(2.0 + p) / (3.0 + p),
        slope_tolerance=slope_tolerance,
    )


def dense_hessian(problem: ProblemSpec, x: Array) -> Array:
    """Materialize the lower Hessian column by column via its products.

    Dense direct oracle for the iterative least-squares residual; intended
    for small dimensions.
    """
    x = np.asarray(x, dtype=float)
    n = problem.dim
    h = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        h[:, i] = problem.eval_hvp_g(x, e)
    return h
