"""Proximal operators under a scaling matrix and the scaled Moreau envelope.

For an SPD matrix ``C`` the scaled prox of ``f`` at ``x`` is

    prox_f^C(x) = argmin_w  f(w) + 1/2 ||w - x||_C^2

and the envelope ``e_C f(x)`` is the optimal value of that problem.  Closed
forms are used where they exist (l1 and box under diagonal ``C``, nuclear norm
under scalar ``C``); everything else goes through an inner proximal gradient
solve of the strongly convex subproblem.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .core import (
    CompositeObjective,
    ContractViolation,
    NonsmoothTerm,
    ScalingMatrix,
    SmoothTerm,
    as_point,
    soft_threshold,
    zero_term,
)

__all__ = [
    "ProxResult",
    "InnerSolveConfig",
    "InnerSolveError",
    "prox_l1",
    "project_box",
    "prox_nuclear",
    "nuclear_subgradient_residual",
    "matrix_rank",
    "scaled_prox",
    "scaled_prox_generic",
    "moreau_value",
    "moreau_gradient",
    "moreau_value_and_gradient",
    "envelope_descent",
]

RANK_RTOL = 1e-12


@dataclass(frozen=True)
class ProxResult:
    """Output of a prox evaluation.

    ``objective_value`` is ``f(point) + 1/2 ||point - x||_C^2``, i.e. the
    Moreau envelope at ``x`` when ``point`` is exact.
    """

    point: np.ndarray
    objective_value: float
    inner_iterations: int
    stationarity_residual: float


@dataclass(frozen=True)
class InnerSolveConfig:
    """Settings for the inner proximal gradient solve.

    ``step_rule`` is ``"backtracking"`` (step shrunk by ``beta`` until it is
    below the inverse local Lipschitz constant of the smooth part) or
    ``"fixed"`` (constant ``step``).
    ``armijo_c`` is the sufficient-decrease fraction used by the outer line
    searches in :mod:`onestep.solvers`.
    """

    max_iterations: int = 10_000
    tolerance: float = 1e-10
    step_rule: str = "backtracking"
    step: Optional[float] = None
    beta: float = 0.5
    armijo_c: float = 1e-4

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ContractViolation("tolerance must be positive")
        if self.max_iterations < 1:
            raise ContractViolation("max_iterations must be at least 1")
        if self.step_rule not in ("backtracking", "fixed"):
            raise ContractViolation(f"unknown step rule {self.step_rule!r}")
        if self.step_rule == "fixed" and not (self.step is not None and self.step > 0):
            raise ContractViolation("fixed step rule needs a positive step")
        if not (0 < self.beta < 1 and 0 < self.armijo_c < 1):
            raise ContractViolation("backtracking needs 0 < beta < 1 and 0 < c < 1")


DEFAULT_INNER = InnerSolveConfig()


class InnerSolveError(RuntimeError):
    """The inner prox solve hit its iteration cap before reaching tolerance."""

    def __init__(self, message, best_point, residual):
        super().__init__(message)
        self.best_point = best_point
        self.residual = residual


def _identity_like(x, C):
    return ScalingMatrix.identity(x.size) if C is None else C


def prox_l1(x, weight: float, C: Optional[ScalingMatrix] = None) -> ProxResult:
    """Soft-thresholding: ``w_i = sign(x_i) max(|x_i| - weight / C_ii, 0)``."""
    x = as_point(x)
    C = _identity_like(x, C)
    if not C.is_diagonal:
        raise ContractViolation("closed form requires diagonal scaling; use scaled_prox_generic")
    if weight < 0:
        raise ContractViolation("l1 weight must be nonnegative")
    c = C.diag
    w = soft_threshold(x, weight / c)
    # subgradient inclusion C(x - w) in weight * d|w|
    g = c * (x - w)
    nz = w != 0
    res = np.where(nz, np.abs(g - weight * np.sign(w)), np.maximum(np.abs(g) - weight, 0.0))
    obj = weight * float(np.abs(w).sum()) + 0.5 * C.quad(w - x)
    return ProxResult(w, obj, 0, float(res.max()))


def project_box(x, lo, hi) -> ProxResult:
    """Euclidean projection onto ``[lo, hi]``; also the prox of its indicator for any step."""
    x = as_point(x)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), x.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), x.shape)
    if np.any(lo > hi):
        raise ContractViolation("box lower bound exceeds upper bound")
    w = np.clip(x, lo, hi)
    return ProxResult(w, 0.5 * float(np.sum((w - x) ** 2)), 0, 0.0)


def matrix_rank(mat, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.asarray(mat, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def prox_nuclear(X, weight: float, scale: float = 1.0, shape=None) -> ProxResult:
    """Singular value soft-thresholding at level ``weight / scale``.

    ``X`` may be a 2-D array or a flattened vector together with ``shape``;
    the result has the same layout as the input.
    """
    X = np.asarray(X, dtype=float)
    flat = X.ndim == 1
    if flat:
        if shape is None:
            raise ContractViolation("flattened matrix input needs a shape")
        mat = X.reshape(shape)
    elif X.ndim == 2:
        mat = X
    else:
        raise ContractViolation("prox_nuclear expects a matrix")
    if weight < 0 or not scale > 0:
        raise ContractViolation("need weight >= 0 and scale > 0")
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    s_new = np.maximum(s - weight / scale, 0.0)
    W = (u * s_new) @ vt
    obj = weight * float(s_new.sum()) + 0.5 * scale * float(np.sum((W - mat) ** 2))
    res = nuclear_subgradient_residual(mat, W, weight, scale)
    return ProxResult(W.reshape(-1) if flat else W, obj, 0, res)


def nuclear_subgradient_residual(X, W, weight: float, scale: float) -> float:
    """Violation of ``scale (X - W) in weight * d||W||_*``.

    The subdifferential at ``W = U_r S V_r^T`` is
    ``{U_r V_r^T + Z : U_r^T Z = 0, Z V_r = 0, ||Z||_2 <= 1}``; the residual is
    the largest (Frobenius / spectral) deviation from that description, in the
    units of ``scale (X - W)``.
    """
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    G = scale * (X - W)
    if weight == 0:
        return float(np.linalg.norm(G))
    G = G / weight
    u, s, vt = np.linalg.svd(W, full_matrices=True)
    r = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    Ur, Up = u[:, :r], u[:, r:]
    Vr, Vp = vt[:r].T, vt[r:].T
    parts = [
        np.linalg.norm(Ur.T @ G @ Vr - np.eye(r)) if r else 0.0,
        np.linalg.norm(Ur.T @ G @ Vp) if r else 0.0,
        np.linalg.norm(Up.T @ G @ Vr) if r else 0.0,
    ]
    block = Up.T @ G @ Vp
    if block.size:
        parts.append(max(np.linalg.norm(block, 2) - 1.0, 0.0))
    return weight * float(max(parts))


def _split(f, dim) -> Tuple[Optional[SmoothTerm], NonsmoothTerm]:
    if isinstance(f, CompositeObjective):
        return f.smooth, f.nonsmooth
    if isinstance(f, NonsmoothTerm):
        return None, f
    if isinstance(f, SmoothTerm):
        return f, zero_term(f.dim)
    if f is None:
        return None, zero_term(dim)
    raise ContractViolation(f"cannot take the prox of {type(f).__name__}")


Proxable = Union[CompositeObjective, NonsmoothTerm, SmoothTerm, None]


def scaled_prox_generic(f: Proxable, C: ScalingMatrix, x, cfg: InnerSolveConfig = DEFAULT_INNER,
                        warm_start=None) -> ProxResult:
    """Scaled prox by proximal gradient iterations on the inner subproblem.

    The subproblem ``s(w) + h(w)`` with ``s(w) = g(w) + 1/2 ||w - x||_C^2`` is
    solved with identity-scaled prox steps on ``h``.  The reported residual is
    the norm of an explicit element of the subdifferential at the returned
    point, so it bounds the true stationarity distance from above.

    Raises
    ------
    InnerSolveError
        When ``cfg.max_iterations`` is reached first; carries the best iterate.
    """
    x = as_point(x, C.dim)
    g, h = _split(f, x.size)

    def s_val(w):
        d = w - x
        return (g.value(w) if g is not None else 0.0) + 0.5 * C.quad(d)

    def s_grad(w):
        gr = C.matvec(w - x)
        return gr + g.gradient(w) if g is not None else gr

    w = x.copy() if warm_start is None else as_point(warm_start, x.size)
    if not np.isfinite(h(w)):
        w = h.prox(w, 1.0)
    if cfg.step_rule == "fixed":
        t = cfg.step
    else:
        t = 1.0 / C.lambda_max
    gw = s_grad(w)
    best = (np.inf, w)
    for it in range(1, cfg.max_iterations + 1):
        if cfg.step_rule == "backtracking":
            t = t * 1.25
            while True:
                w_new = h.prox(w - t * gw, t)
                d = w_new - w
                g_new = s_grad(w_new)
                # local Lipschitz test; immune to cancellation in function values
                if t * np.linalg.norm(g_new - gw) <= np.linalg.norm(d) or t < 1e-300:
                    break
                t *= cfg.beta
        else:
            w_new = h.prox(w - t * gw, t)
            g_new = s_grad(w_new)
        res = float(np.linalg.norm(g_new - gw + (w - w_new) / t))
        w, gw = w_new, g_new
        if res < best[0]:
            best = (res, w)
        if res <= cfg.tolerance:
            return ProxResult(w, s_val(w) + h(w), it, res)
    raise InnerSolveError(
        f"inner solve did not converge in {cfg.max_iterations} iterations "
        f"(residual {best[0]:.3e})", best[1], best[0])


def scaled_prox(f: Proxable, C: ScalingMatrix, x, cfg: InnerSolveConfig = DEFAULT_INNER,
                warm_start=None) -> ProxResult:
    """Dispatch to a closed form when one applies, otherwise solve numerically."""
    x = as_point(x, C.dim)
    g, h = _split(f, x.size)
    if g is None:
        if h.kind == "zero":
            return ProxResult(x, 0.0, 0, 0.0)
        if h.kind == "l1" and C.is_diagonal:
            return prox_l1(x, h.weight, C)
        if h.kind == "box" and C.is_diagonal:
            return project_box(x, h.params["lo"], h.params["hi"])
        if h.kind == "nuclear" and C.is_scalar:
            return prox_nuclear(x, h.weight, float(C.diag[0]), shape=h.params["shape"])
        if h.kind == "generic" and C.is_scalar:
            c = float(C.diag[0])
            w = h.prox(x, 1.0 / c)
            return ProxResult(w, h(w) + 0.5 * C.quad(w - x), 0, 0.0)
    return scaled_prox_generic(f, C, x, cfg, warm_start=warm_start)


def _value(f, w):
    g, h = _split(f, w.size)
    return (g.value(w) if g is not None else 0.0) + h(w)


def moreau_value_and_gradient(f: Proxable, C: ScalingMatrix, x,
                              cfg: InnerSolveConfig = DEFAULT_INNER,
                              warm_start=None) -> Tuple[float, np.ndarray, ProxResult]:
    """Envelope value, its gradient ``C (x - w*)`` and the prox result, from one prox solve."""
    x = as_point(x, C.dim)
    r = scaled_prox(f, C, x, cfg, warm_start=warm_start)
    w = r.point
    value = _value(f, w) + 0.5 * C.quad(x - w)
    return value, C.matvec(x - w), r


def moreau_value(f: Proxable, C: ScalingMatrix, x, cfg: InnerSolveConfig = DEFAULT_INNER,
                 warm_start=None) -> float:
    """``e_C f(x) = min_w f(w) + 1/2 ||x - w||_C^2``."""
    return moreau_value_and_gradient(f, C, x, cfg, warm_start)[0]


def moreau_gradient(f: Proxable, C: ScalingMatrix, x, cfg: InnerSolveConfig = DEFAULT_INNER,
                    warm_start=None) -> np.ndarray:
    """Gradient of the scaled envelope, ``C (x - prox_f^C(x))``.

    For nonconvex ``f`` this is the value at the prox point reached from
    ``warm_start`` (default ``x``); differentiability is not certified.
    """
    return moreau_value_and_gradient(f, C, x, cfg, warm_start)[1]


def envelope_descent(f: Proxable, C: ScalingMatrix, x0, cfg: InnerSolveConfig = DEFAULT_INNER,
                     tol: float = 1e-12, max_iterations: int = 10_000):
    """Scaled gradient descent ``x <- x - C^{-1} grad e_C f(x)`` on the envelope.

    Returns the final point and the number of iterations.  Each step is one
    prox evaluation (the unit step in the ``C`` metric is the proximal point
    update).
    """
    x = as_point(x0, C.dim)
    for k in range(1, max_iterations + 1):
        _, grad, r = moreau_value_and_gradient(f, C, x, cfg, warm_start=x)
        x_new = x - C.solve(grad)
        step = float(np.linalg.norm(x_new - x))
        x = x_new
        if step <= tol:
            return x, k
    return x, max_iterations
