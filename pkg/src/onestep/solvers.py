"""One-step estimators and full scaled proximal gradient / proximal Newton runs.

The single-step operations apply their update formulas verbatim, with no
line search.  The full runs wrap the same scaled proximal gradient map in a
backtracking line search and stop once the step length drops below a
threshold, typically ``c / sqrt(n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from .core import (
    CompositeObjective,
    ContractViolation,
    NonsmoothTerm,
    RegularityConstants,
    ScalingMatrix,
    SmoothTerm,
    as_point,
    ridge_to_spd,
    zero_term,
)
from .proxops import DEFAULT_INNER, InnerSolveConfig, scaled_prox

__all__ = [
    "EstimatorTrace",
    "OseConfig",
    "DivergenceError",
    "stopping_threshold",
    "StoppingReport",
    "stopping_report",
    "ose_prox_gradient",
    "ose_prox_descent",
    "one_newton_step",
    "gd_step_fixed",
    "gd_step_exact",
    "prox_gradient_map",
    "composite_residual",
    "run_prox_gradient",
    "run_prox_newton",
    "solve_reference",
    "StopCondReport",
    "stop_cond_kappa",
    "check_stop_cond_inequality",
]

STEP_BELOW = "step_below_threshold"
MAX_ITER = "max_iterations"
STATIONARY = "stationary"


@dataclass
class EstimatorTrace:
    """Iterates of a full solver run.

    ``step_norms[k]`` is ``||iterates[k+1] - iterates[k]||`` and
    ``objective_values[k]`` is the objective at ``iterates[k]``.
    """

    iterates: List[np.ndarray] = field(default_factory=list)
    step_norms: List[float] = field(default_factory=list)
    objective_values: List[float] = field(default_factory=list)
    stopping_reason: str = ""
    sample_size_n: Optional[int] = None
    threshold: float = math.inf

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def iterations(self) -> int:
        return len(self.step_norms)

    def rows(self):
        for k, (x, f) in enumerate(zip(self.iterates, self.objective_values)):
            yield {
                "iteration": k,
                "objective": f,
                "step_norm": self.step_norms[k - 1] if k > 0 else math.nan,
                "param_norm": float(np.linalg.norm(x)),
            }


class DivergenceError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class OseConfig:
    """How the scaling ``C`` of a scaled proximal gradient step is built.

    ``scaling`` is ``"fixed"`` (use ``matrix``), ``"hessian"`` (ridge-adapted
    Hessian of the smooth part at the current point) or ``"fisher"``
    (``fisher(theta)`` supplied by the model, ridge-adapted).
    """

    scaling: str = "fixed"
    matrix: Optional[ScalingMatrix] = None
    fisher: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inner: InnerSolveConfig = DEFAULT_INNER

    def __post_init__(self):
        if self.scaling not in ("fixed", "hessian", "fisher"):
            raise ContractViolation(f"unknown scaling rule {self.scaling!r}")
        if self.scaling == "fixed" and self.matrix is None:
            raise ContractViolation("fixed scaling needs a matrix")
        if self.scaling == "fisher" and self.fisher is None:
            raise ContractViolation("fisher scaling needs a fisher callable")

    def resolve(self, smooth: SmoothTerm, theta: np.ndarray) -> ScalingMatrix:
        if self.scaling == "fixed":
            return self.matrix
        if self.scaling == "hessian":
            if smooth.hessian is None:
                raise ContractViolation("smooth term supplies no Hessian")
            return ridge_to_spd(smooth.hessian(theta))
        return ridge_to_spd(self.fisher(theta))


def stopping_threshold(c: float, n: int) -> float:
    """Step-length threshold ``c / sqrt(n)``."""
    if n < 1:
        raise ContractViolation("sample size must be positive")
    return c / math.sqrt(n)


# ---------------------------------------------------------------------------
# single steps


def prox_gradient_map(g: SmoothTerm, h: NonsmoothTerm, C: ScalingMatrix, theta,
                      cfg: InnerSolveConfig = DEFAULT_INNER, warm_start=None) -> np.ndarray:
    theta = as_point(theta, g.dim)
    z = theta - C.solve(g.gradient(theta))
    return scaled_prox(h, C, z, cfg, warm_start=warm_start).point


def ose_prox_gradient(g: SmoothTerm, h: Optional[NonsmoothTerm], C: ScalingMatrix, theta_init,
                      cfg: InnerSolveConfig = DEFAULT_INNER) -> np.ndarray:
    """One scaled proximal gradient step ``prox_h^C(theta - C^{-1} grad g(theta))``."""
    if h is None:
        h = zero_term(g.dim)
    if h.dim != g.dim or C.dim != g.dim:
        raise ContractViolation("dimension mismatch between g, h and C")
    return prox_gradient_map(g, h, C, theta_init, cfg)


def ose_prox_descent(f, C: ScalingMatrix, theta_init,
                     cfg: InnerSolveConfig = DEFAULT_INNER) -> np.ndarray:
    """One scaled proximal descent step ``prox_f^C(theta_init)``."""
    return scaled_prox(f, C, theta_init, cfg).point


def one_newton_step(g: SmoothTerm, C: ScalingMatrix, theta_init) -> np.ndarray:
    """``theta - C^{-1} grad g(theta)``."""
    theta = as_point(theta_init, g.dim)
    return theta - C.solve(g.gradient(theta))


def gd_step_fixed(g: SmoothTerm, alpha: float, theta) -> np.ndarray:
    if not alpha > 0:
        raise ContractViolation("step length must be positive")
    theta = as_point(theta, g.dim)
    return theta - alpha * g.gradient(theta)


def gd_step_exact(g: SmoothTerm, theta, Q=None):
    """Steepest descent with the exact step for a quadratic.

    ``alpha = (grad^T grad) / (grad^T Q grad)`` with ``Q`` the (constant)
    Hessian, taken from ``g.hessian`` if not given.  Returns
    ``(new_theta, alpha)``; ``alpha`` is NaN and ``theta`` is returned
    unchanged when the gradient vanishes.
    """
    theta = as_point(theta, g.dim)
    if Q is None:
        if g.hessian is None:
            raise ContractViolation("exact step needs the quadratic's Hessian")
        Q = g.hessian(theta)
    Q = np.asarray(Q, dtype=float)
    grad = g.gradient(theta)
    gg = float(grad @ grad)
    if gg == 0.0:
        return theta, math.nan
    curv = float(grad @ (Q * grad if Q.ndim == 1 else Q @ grad))
    alpha = gg / curv
    return theta - alpha * grad, alpha


# ---------------------------------------------------------------------------
# full runs


def composite_residual(obj: CompositeObjective, theta) -> float:
    """``||theta - prox_h(theta - grad g(theta))||``, zero exactly at stationary points."""
    theta = as_point(theta, obj.dim)
    z = obj.nonsmooth.prox(theta - obj.smooth.gradient(theta), 1.0)
    return float(np.linalg.norm(theta - z))


def _run(obj: CompositeObjective, scaling: Callable[[np.ndarray], ScalingMatrix], theta0,
         threshold: float, max_iterations: int, cfg: InnerSolveConfig,
         sample_size_n: Optional[int], max_backtracks: int = 60) -> EstimatorTrace:
    if not threshold > 0:
        raise ContractViolation("stopping threshold must be positive")
    g, h = obj.smooth, obj.nonsmooth
    theta = as_point(theta0, obj.dim)
    F = obj(theta)
    if not np.isfinite(F):
        theta = h.prox(theta, 1.0)
        F = obj(theta)
    trace = EstimatorTrace([theta], [], [F], MAX_ITER, sample_size_n, threshold)
    increases = 0
    z_prev = None
    for _ in range(max_iterations):
        grad = g.gradient(theta)
        C = scaling(theta)
        z = scaled_prox(h, C, theta - C.solve(grad), cfg, warm_start=z_prev).point
        d = z - theta
        if not np.any(d):
            trace.stopping_reason = STATIONARY
            break
        delta = float(grad @ d) + h(z) - h(theta)
        s = 1.0
        for _ in range(max_backtracks):
            cand = theta + s * d if s < 1.0 else z
            Fc = obj(cand)
            if Fc <= F + cfg.armijo_c * s * delta:
                break
            # flat objective along the step counts as progress
            if abs(Fc - F) <= 4 * np.finfo(float).eps * max(1.0, abs(F)):
                break
            s *= cfg.beta
        increases = increases + 1 if Fc > F else 0
        step = float(np.linalg.norm(cand - theta))
        theta, F = cand, Fc
        z_prev = z
        trace.iterates.append(theta)
        trace.step_norms.append(step)
        trace.objective_values.append(F)
        if increases >= 10:
            trace.stopping_reason = "diverging"
            raise DivergenceError("objective increased on 10 consecutive steps", trace)
        if step <= threshold:
            trace.stopping_reason = STEP_BELOW
            break
    return trace


def run_prox_gradient(obj: CompositeObjective, scaling: Union[OseConfig, ScalingMatrix], theta0,
                      threshold: float, max_iterations: int = 10_000,
                      cfg: Optional[InnerSolveConfig] = None,
                      sample_size_n: Optional[int] = None) -> EstimatorTrace:
    """Scaled proximal gradient descent with backtracking.

    Stops when a step is no longer than ``threshold`` (reason
    ``"step_below_threshold"``), when the prox-gradient step is exactly zero
    (``"stationary"``) or after ``max_iterations`` (``"max_iterations"``).

    Raises
    ------
    DivergenceError
        If the objective rises on 10 consecutive iterations.
    """
    if isinstance(scaling, ScalingMatrix):
        scaling = OseConfig("fixed", matrix=scaling, inner=cfg or DEFAULT_INNER)
    cfg = cfg or scaling.inner
    return _run(obj, lambda th: scaling.resolve(obj.smooth, th), theta0, threshold,
                max_iterations, cfg, sample_size_n)


def run_prox_newton(obj: CompositeObjective, theta0, threshold: float,
                    max_iterations: int = 1_000, cfg: InnerSolveConfig = DEFAULT_INNER,
                    sample_size_n: Optional[int] = None) -> EstimatorTrace:
    """Proximal Newton: scaled proximal gradient with ``C_k`` the ridge-adapted Hessian at ``theta_k``."""
    if obj.smooth.hessian is None:
        raise ContractViolation("proximal Newton needs a Hessian")
    return _run(obj, lambda th: ridge_to_spd(obj.smooth.hessian(th)), theta0, threshold,
                max_iterations, cfg, sample_size_n)


def solve_reference(obj: CompositeObjective, theta0, newton: bool = True,
                    scaling: Optional[ScalingMatrix] = None, threshold: float = 1e-12,
                    max_iterations: int = 1_000_000, cfg: InnerSolveConfig = DEFAULT_INNER):
    """Long run used as a ground-truth minimizer.

    Returns ``(theta, residual)`` where ``residual`` is
    :func:`composite_residual` at the final iterate.
    """
    if newton:
        trace = run_prox_newton(obj, theta0, threshold, max_iterations, cfg)
    else:
        trace = run_prox_gradient(obj, scaling, theta0, threshold, max_iterations, cfg)
    theta = trace.final
    return theta, composite_residual(obj, theta)


@dataclass
class StoppingReport:
    threshold: float
    triggered_at: Optional[int]
    final_step_norm: float
    stopping_reason: str
    constants: Optional[RegularityConstants] = None


def stopping_report(trace: EstimatorTrace,
                    constants: Optional[RegularityConstants] = None) -> StoppingReport:
    triggered = trace.iterations if trace.stopping_reason == STEP_BELOW else None
    last = trace.step_norms[-1] if trace.step_norms else 0.0
    return StoppingReport(trace.threshold, triggered, last, trace.stopping_reason, constants)


# ---------------------------------------------------------------------------
# stopping-rule inequality


def stop_cond_kappa(constants: RegularityConstants, conservative: bool = True) -> float:
    """``min`` (default) or ``max`` of ``sqrt(m / (2(2L+M)))`` and ``m / (2(2L+M))``."""
    m, M, L = (constants.strong_convexity_m, constants.grad_lipschitz_M,
               constants.scaling_bound_L)
    q = m / (2.0 * (2.0 * L + M))
    return min(math.sqrt(q), q) if conservative else max(math.sqrt(q), q)


@dataclass
class StopCondReport:
    step_norm: float
    distance_to_minimizer: float
    kappa: float
    kappa_max_variant: float
    margin: float
    holds: bool
    holds_max_variant: bool

    def as_row(self):
        return dict(self.__dict__)


def check_stop_cond_inequality(obj: CompositeObjective, constants: RegularityConstants,
                               theta_init, theta_hat, theta_ose,
                               slack: float = 1e-12) -> StopCondReport:
    """Check ``||theta_ose - theta_init|| >= kappa ||theta_init - theta_hat||``.

    ``kappa`` is the smaller of the two case constants, which is what the case
    analysis supports uniformly; the larger variant is reported alongside.
    Diagnostic only.
    """
    theta_init = as_point(theta_init, obj.dim)
    step = float(np.linalg.norm(as_point(theta_ose, obj.dim) - theta_init))
    dist = float(np.linalg.norm(theta_init - as_point(theta_hat, obj.dim)))
    k_min = stop_cond_kappa(constants, True)
    k_max = stop_cond_kappa(constants, False)
    margin = step - k_min * dist
    tol = slack * max(1.0, dist)
    return StopCondReport(step, dist, k_min, k_max, margin,
                          margin >= -tol, step - k_max * dist >= -tol)
