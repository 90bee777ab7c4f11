"""Monte Carlo harnesses and desk-scale reproductions.

Every replicate draws its randomness from
``numpy.random.default_rng([base_seed, n, replicate])`` so reports are a pure
function of their configuration, independent of execution order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.stats import norm

from .core import (
    CompositeObjective,
    ContractViolation,
    RegularityConstants,
    ScalingMatrix,
    box_indicator,
    l1_term,
    quadratic_term,
)
from .models import (
    BivariateNormalModel,
    CauchyModel,
    LogisticMatrixModel,
    cauchy_fisher,
    cauchy_map_objective,
    cauchy_nll,
    cauchy_sample,
    logistic_objective,
    logistic_sample,
    normal_nll,
    normal_sample,
)
from .proxops import (
    DEFAULT_INNER,
    InnerSolveConfig,
    InnerSolveError,
    scaled_prox,
)
from .solvers import (
    DivergenceError,
    check_stop_cond_inequality,
    gd_step_exact,
    gd_step_fixed,
    one_newton_step,
    ose_prox_descent,
    ose_prox_gradient,
    run_prox_newton,
    solve_reference,
    stopping_threshold,
)

__all__ = [
    "replicate_rng",
    "McRecord",
    "McSummary",
    "McReport",
    "mc_equivalence_cauchy",
    "counterexample_m",
    "counterexample_closed_form",
    "integrated_closed_form",
    "CounterexampleReport",
    "counterexample_monte_carlo",
    "LowRankReport",
    "lowrank_fit",
    "lambda_sweep",
    "synthetic_lowrank_model",
    "prox_check",
    "stop_cond_audit",
]

REFERENCE_RESIDUAL = 1e-10
LOWRANK_RANK_RTOL = 1e-6


def replicate_rng(base_seed: int, n: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng([int(base_seed), int(n), int(replicate)])


# ---------------------------------------------------------------------------
# asymptotic equivalence on the Cauchy model


@dataclass
class McRecord:
    n: int
    replicate: int
    ose_deviation: float
    init_deviation: float
    scaling_mismatch: float = math.nan


@dataclass
class McSummary:
    n: int
    count: int
    median_ose: float
    q90_ose: float
    median_init: float
    q90_init: float


@dataclass
class McReport:
    sample_sizes: List[int]
    replicates: int
    ose_kind: str
    base_seed: int
    records: List[McRecord] = field(default_factory=list)
    summaries: List[McSummary] = field(default_factory=list)
    failures: Dict[int, int] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)

    columns = ("n", "replicate", "ose_deviation", "init_deviation", "scaling_mismatch")

    def summarize(self) -> List[McSummary]:
        out = []
        for n in self.sample_sizes:
            ose = np.array([r.ose_deviation for r in self.records if r.n == n])
            ini = np.array([r.init_deviation for r in self.records if r.n == n])
            if ose.size == 0:
                out.append(McSummary(n, 0, math.nan, math.nan, math.nan, math.nan))
                continue
            out.append(McSummary(n, int(ose.size), float(np.median(ose)),
                                 float(np.quantile(ose, 0.9)), float(np.median(ini)),
                                 float(np.quantile(ini, 0.9))))
        return out

    def consistent(self) -> bool:
        """Stored summaries agree with a recomputation from the raw records."""
        return self.summarize() == self.summaries

    def rows(self):
        for r in self.records:
            yield dict(r.__dict__)


def _cauchy_scale(kind, model, n):
    fisher = cauchy_fisher(model)
    if kind == "prox_gradient_map":
        return fisher
    if kind == "prox_descent":
        return fisher / math.sqrt(n)
    raise ContractViolation(f"unknown OSE kind {kind!r}")


def _cauchy_ose(kind, model, obj, theta_init, n, cfg):
    C = ScalingMatrix.identity(1, _cauchy_scale(kind, model, n))
    if kind == "prox_gradient_map":
        return ose_prox_gradient(obj.smooth, obj.nonsmooth, C, theta_init, cfg)
    return ose_prox_descent(obj, C, theta_init, cfg)


def mc_equivalence_cauchy(model: CauchyModel, sample_sizes: Sequence[int], replicates: int,
                          ose_kind: str = "prox_gradient_map", base_seed: int = 0,
                          init_scale: float = 1.0,
                          cfg: InnerSolveConfig = DEFAULT_INNER) -> McReport:
    """Finite-n check that the one-step estimator tracks the full minimizer.

    Per replicate: draw a Cauchy batch, find the reference minimizer
    ``theta_hat`` (MAP when the model has a prior, MLE otherwise) by a long
    proximal Newton run started at the sample median, set
    ``theta_init = theta_hat + init_scale * U / sqrt(n)`` with ``U ~ U[-1, 1]``,
    take one step and record ``sqrt(n) |theta_ose - theta_hat|`` and
    ``sqrt(n) |theta_init - theta_hat|``.

    ``ose_kind="prox_gradient_map"`` uses ``C`` = Fisher information;
    ``"prox_descent"`` takes the scaled prox of the whole objective with
    ``C = fisher / sqrt(n)``, which vanishes as ``n`` grows.

    Each record also carries ``|H / C - 1|`` with ``H`` the sample Hessian at
    ``theta_hat``, a finite-n diagnostic with no pass/fail threshold.
    """
    sizes = [int(n) for n in sample_sizes]
    _cauchy_scale(ose_kind, model, 1)  # rejects an unknown kind before any sampling
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ContractViolation("sample sizes must be increasing")
    if replicates < 1:
        raise ContractViolation("replicates must be at least 1")
    report = McReport(sizes, int(replicates), ose_kind, int(base_seed))
    for n in sizes:
        report.failures[n] = 0
        root_n = math.sqrt(n)
        for rep in range(replicates):
            rng = replicate_rng(base_seed, n, rep)
            batch = cauchy_sample(model, n, rng)
            if model.prior_gamma is not None:
                obj = cauchy_map_objective(model, batch)
            else:
                obj = CompositeObjective(cauchy_nll(model, batch), l1_term(1, 0.0))
            u = rng.uniform(-1.0, 1.0)
            try:
                theta_hat, res = solve_reference(obj, [np.median(batch.observations)],
                                                 max_iterations=10_000, cfg=cfg)
                if res > REFERENCE_RESIDUAL:
                    report.failures[n] += 1
                    continue
                theta_init = theta_hat + init_scale * u / root_n
                theta_ose = _cauchy_ose(ose_kind, model, obj, theta_init, n, cfg)
            except (InnerSolveError, DivergenceError):
                report.failures[n] += 1
                continue
            hess = float(np.asarray(obj.smooth.hessian(theta_hat)).reshape(-1)[0])
            report.records.append(McRecord(
                n, rep,
                root_n * float(np.linalg.norm(theta_ose - theta_hat)),
                root_n * float(np.linalg.norm(theta_init - theta_hat)),
                abs(hess / _cauchy_scale(ose_kind, model, n) - 1.0),
            ))
    report.summaries = report.summarize()
    for s in report.summaries:
        if s.count and s.median_ose > s.median_init:
            report.flags.append(f"n={s.n}: median one-step deviation exceeds initial deviation")
    return report


# ---------------------------------------------------------------------------
# gradient-descent counterexample


def counterexample_m(sigma1: float, sigma2: float, mode: str = "fixed_step") -> float:
    """Slope ``M`` in ``P(Z > M U)``.

    ``fixed_step``: ``alpha = sigma2^2`` gives ``M = sigma1 / sigma2^2 - 1 / sigma1``.
    ``exact_step``: the bound ``M = sigma1 / (sigma1 + sigma2) - 1 / sigma1``.
    """
    if not sigma1 > sigma2 > 0:
        raise ContractViolation("need sigma1 > sigma2 > 0")
    if mode == "fixed_step":
        return sigma1 / sigma2 ** 2 - 1.0 / sigma1
    if mode == "exact_step":
        return sigma1 / (sigma1 + sigma2) - 1.0 / sigma1
    raise ContractViolation(f"no closed form for mode {mode!r}")


def tail_probability(M: float) -> float:
    """``P(Z > M U) = int_0^1 (1 - Phi(M u)) du`` by adaptive quadrature."""
    val, _ = integrate.quad(lambda u: norm.sf(M * u), 0.0, 1.0, epsabs=1e-14, epsrel=1e-12)
    return float(val)


def integrated_closed_form(M: float) -> float:
    """Integrated form ``1 - Phi(M) + (1 - exp(-M^2/2)) / (sqrt(2 pi) M)``."""
    if M == 0:
        return 0.5
    return float(norm.sf(M) + (-math.expm1(-0.5 * M * M)) / (math.sqrt(2 * math.pi) * M))


def counterexample_closed_form(sigma1: float, sigma2: float, mode: str = "fixed_step") -> float:
    """``P(theta_1 > mu_1)`` for one gradient step, by quadrature.

    Cross-checked against the integrated closed form; warns when ``M <= 0``,
    outside the counterexample regime (the probability is then at least 1/2).
    """
    M = counterexample_m(sigma1, sigma2, mode)
    p = tail_probability(M)
    if abs(p - integrated_closed_form(M)) > 1e-8:
        raise ArithmeticError("quadrature and closed form disagree")
    if M <= 0:
        warnings.warn(f"M = {M:.4g} <= 0: outside the counterexample regime", stacklevel=2)
    return p


@dataclass
class CounterexampleReport:
    mode: str
    sigma1: float
    sigma2: float
    n: int
    M_constant: float
    empirical_prob: float
    closed_form_prob: float
    std_error: float
    replicates: int
    base_seed: int
    scaled_first_coord: List[float] = field(default_factory=list)

    columns = ("replicate", "sqrt_n_deviation_first_coord", "exceeds_mean")

    @property
    def within_3se(self) -> bool:
        return abs(self.empirical_prob - self.closed_form_prob) <= 3 * self.std_error

    def rows(self):
        for i, v in enumerate(self.scaled_first_coord):
            yield {"replicate": i, "sqrt_n_deviation_first_coord": v, "exceeds_mean": v > 0}


def counterexample_monte_carlo(sigma1: float, sigma2: float, n: int, replicates: int,
                               mode: str = "fixed_step", base_seed: int = 0,
                               mean=(0.0, 0.0)) -> CounterexampleReport:
    """Empirical ``P(theta_1 > mu_1)`` after one step from a biased start.

    The start is uniform on ``(mu - 1/sqrt(n), mu)`` in each coordinate,
    independent of the data.  Modes: ``fixed_step`` (``alpha = sigma2^2``),
    ``exact_step`` (exact line search on the quadratic) and ``scaled_newton``
    (``C = Sigma^{-1}``, which lands on the sample mean).
    """
    if mode not in ("fixed_step", "exact_step", "scaled_newton"):
        raise ContractViolation(f"unknown mode {mode!r}")
    if replicates < 1 or n < 1:
        raise ContractViolation("need n >= 1 and replicates >= 1")
    model = BivariateNormalModel(tuple(mean), sigma1, sigma2)
    mu = np.asarray(mean, dtype=float)
    C = ScalingMatrix.diagonal(model.precision)
    root_n = math.sqrt(n)
    hits = 0
    scaled = []
    for rep in range(replicates):
        rng = replicate_rng(base_seed, n, rep)
        batch = normal_sample(model, n, rng)
        theta_init = mu - rng.uniform(0.0, 1.0, size=2) / root_n
        g = normal_nll(model, batch)
        if mode == "fixed_step":
            theta = gd_step_fixed(g, sigma2 ** 2, theta_init)
        elif mode == "exact_step":
            theta, _ = gd_step_exact(g, theta_init)
        else:
            theta = one_newton_step(g, C, theta_init)
        hits += bool(theta[0] > mu[0])
        scaled.append(root_n * float(theta[0] - mu[0]))
    p = hits / replicates
    if mode == "scaled_newton":
        M, closed = 0.0, 0.5
    else:
        M = counterexample_m(sigma1, sigma2, mode)
        closed = tail_probability(M)
    return CounterexampleReport(mode, sigma1, sigma2, n, M, p, closed,
                                math.sqrt(p * (1 - p) / replicates), replicates,
                                int(base_seed), scaled)


# ---------------------------------------------------------------------------
# low-rank logistic regression


@dataclass
class LowRankReport:
    objective_trajectory: List[float]
    final_rank: int
    iterations: int
    lambda_: float
    stopping_threshold: float
    stopping_reason: str = ""
    singular_values: List[float] = field(default_factory=list)
    error: Optional[str] = None
    theta: Optional[np.ndarray] = field(default=None, repr=False)

    columns = ("iteration", "objective", "lambda")

    @property
    def monotone(self) -> bool:
        t = np.asarray(self.objective_trajectory)
        return bool(np.all(np.diff(t) <= 1e-10 * np.maximum(1.0, np.abs(t[:-1]))))

    def rows(self):
        for k, f in enumerate(self.objective_trajectory):
            yield {"iteration": k, "objective": f, "lambda": self.lambda_}


def _rank(sv):
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > LOWRANK_RANK_RTOL * sv[0]))


def lowrank_fit(model: LogisticMatrixModel, stopping_c: float = 1.0, max_iter: int = 200,
                theta0=None, cfg: InnerSolveConfig = DEFAULT_INNER) -> LowRankReport:
    """Proximal Newton on the nuclear-norm penalised logistic objective.

    Stops once a step is no longer than ``stopping_c / sqrt(N^2 * trials)``.
    """
    obj = logistic_objective(model)
    thr = stopping_threshold(stopping_c, model.effective_n)
    x0 = np.zeros(obj.dim) if theta0 is None else np.asarray(theta0, dtype=float).reshape(-1)
    try:
        trace = run_prox_newton(obj, x0, thr, max_iter, cfg, sample_size_n=model.effective_n)
    except (InnerSolveError, DivergenceError) as exc:
        partial = getattr(exc, "trace", None)
        traj = partial.objective_values if partial else [obj(x0)]
        return LowRankReport(traj, -1, len(traj) - 1, model.penalty, thr, "error",
                             error=str(exc))
    theta = trace.final
    sv = np.linalg.svd(theta.reshape(model.N, model.N), compute_uv=False)
    return LowRankReport(list(trace.objective_values), _rank(sv), trace.iterations,
                         model.penalty, thr, trace.stopping_reason, sv.tolist(), theta=theta)


def lambda_sweep(model: LogisticMatrixModel, lambdas: Sequence[float], stopping_c: float = 1.0,
                 max_iter: int = 200, cfg: InnerSolveConfig = DEFAULT_INNER
                 ) -> List[LowRankReport]:
    """One fit per penalty, each warm-started from the previous solution."""
    if len(lambdas) == 0:
        raise ContractViolation("need at least one penalty value")
    out, theta = [], None
    for lam in lambdas:
        rep = lowrank_fit(model.with_penalty(float(lam)), stopping_c, max_iter, theta, cfg)
        out.append(rep)
        if rep.theta is not None:
            theta = rep.theta
    return out


def synthetic_lowrank_model(N: int = 50, rank: int = 3, trials: int = 49, seed: int = 0,
                            scale: float = 1.0, penalty: float = 0.0):
    """Binomial frequencies from ``theta* = A B^T`` with ``A, B`` of the given rank.

    Returns ``(model, theta_true)``.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((N, rank))
    B = rng.standard_normal((N, rank))
    theta_true = scale * (A @ B.T) / math.sqrt(rank)
    return logistic_sample(theta_true, trials, rng, penalty), theta_true


# ---------------------------------------------------------------------------
# randomized property harnesses


def _random_spd(rng, d, lo=1.0, hi=4.0):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * rng.uniform(lo, hi, size=d)) @ q.T


def prox_check(instances: int, seed: int = 0, max_dim: int = 5,
               cfg: InnerSolveConfig = DEFAULT_INNER) -> List[dict]:
    """Firm nonexpansiveness of random scaled proxes.

    Each instance picks ``f`` from {quadratic, quadratic + l1, box indicator},
    a random SPD ``C`` and points ``x, y``; the record holds
    ``||prox(x) - prox(y)||_C`` and ``||x - y||_C``.
    """
    rng = np.random.default_rng(seed)
    kinds = ("quadratic", "quadratic_l1", "box")
    rows = []
    for i in range(instances):
        d = int(rng.integers(1, max_dim + 1))
        kind = kinds[i % 3]
        C = ScalingMatrix(_random_spd(rng, d))
        if kind == "box":
            lo = rng.uniform(-1.0, 0.0, d)
            f = box_indicator(lo, lo + rng.uniform(0.1, 2.0, d))
        else:
            g = quadratic_term(_random_spd(rng, d, 0.5, 3.0), b=rng.standard_normal(d))
            f = CompositeObjective(g, l1_term(d, rng.uniform(0.1, 1.0) if kind == "quadratic_l1"
                                              else 0.0))
        x, y = 3 * rng.standard_normal(d), 3 * rng.standard_normal(d)
        px = scaled_prox(f, C, x, cfg).point
        py = scaled_prox(f, C, y, cfg).point
        lhs = math.sqrt(max(C.quad(px - py), 0.0))
        rhs = math.sqrt(C.quad(x - y))
        rows.append({"instance": i, "kind": kind, "dim": d, "prox_distance": lhs,
                     "input_distance": rhs, "holds": lhs <= rhs + 1e-9})
    return rows


def stop_cond_audit(instances: int, seed: int = 0, max_dim: int = 6,
                    cfg: InnerSolveConfig = DEFAULT_INNER) -> List[dict]:
    """Random strongly convex quadratic + l1 problems checked against the stopping inequality.

    ``m`` and ``M`` are the extreme eigenvalues of the quadratic, ``C`` is a
    random SPD matrix and ``L`` its largest eigenvalue.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(instances):
        d = int(rng.integers(1, max_dim + 1))
        Q = _random_spd(rng, d, 0.5, 5.0)
        eig = np.linalg.eigvalsh(Q)
        g = quadratic_term(Q, b=2 * rng.standard_normal(d))
        obj = CompositeObjective(g, l1_term(d, rng.uniform(0.05, 1.0)))
        C = ScalingMatrix(_random_spd(rng, d, 0.5, 6.0))
        consts = RegularityConstants(float(eig[0]), float(eig[-1]), C.lambda_max)
        theta_hat, res = solve_reference(obj, np.zeros(d), cfg=cfg)
        theta_init = theta_hat + rng.standard_normal(d) * 10 ** rng.uniform(-3, 1)
        theta_ose = ose_prox_gradient(g, obj.nonsmooth, C, theta_init, cfg)
        rep = check_stop_cond_inequality(obj, consts, theta_init, theta_hat, theta_ose)
        row = {"instance": i, "dim": d, "reference_residual": res}
        row.update(rep.as_row())
        rows.append(row)
    return rows
