"""Shared vocabulary: parameter vectors, SPD scaling matrices and objective terms.

Parameters are plain 1-D float arrays.  Matrix-valued parameters are stored
flattened (row-major) and the terms that care about the matrix structure
(the nuclear norm, the logistic matrix model) carry the ``(rows, cols)``
shape themselves, so every solver stays shape-agnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "ContractViolation",
    "NotPositiveDefiniteError",
    "as_point",
    "ScalingMatrix",
    "ridge_to_spd",
    "SmoothTerm",
    "quadratic_term",
    "NonsmoothTerm",
    "soft_threshold",
    "singular_value_threshold",
    "zero_term",
    "l1_term",
    "nuclear_term",
    "box_indicator",
    "generic_term",
    "CompositeObjective",
    "RegularityConstants",
    "weighted_norm",
    "spd_solve",
    "ConvexityReport",
    "convexity_spot_check",
]

SYMMETRY_RTOL = 1e-12
RIDGE_FLOOR = 1e-8


class ContractViolation(ValueError):
    """An argument broke an operation's precondition."""


class NotPositiveDefiniteError(ContractViolation):
    pass


def as_point(x, dim: Optional[int] = None) -> np.ndarray:
    """Return ``x`` as a finite 1-D float array (a copy)."""
    arr = np.array(x, dtype=float).reshape(-1)
    if arr.size < 1:
        raise ContractViolation("parameter dimension must be at least 1")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("parameter has non-finite entries")
    if dim is not None and arr.size != dim:
        raise ContractViolation(f"dimension mismatch: expected {dim}, got {arr.size}")
    return arr


class ScalingMatrix:
    """Symmetric positive definite ``d x d`` matrix with a cached Cholesky factor.

    Diagonal matrices are kept as a vector of diagonal entries, so
    high-dimensional diagonal scalings (e.g. the Hessian of a separable
    likelihood) never materialise a dense array unless ``entries`` is asked for.

    Parameters
    ----------
    entries : array_like
        Dense symmetric matrix.  Rejected unless it is symmetric to a relative
        tolerance of 1e-12 and its Cholesky factorisation succeeds.
    """

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ContractViolation(f"scaling matrix must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ContractViolation("scaling matrix has non-finite entries")
        scale = np.max(np.abs(a))
        if np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * scale:
            raise ContractViolation("scaling matrix is not symmetric")
        a = 0.5 * (a + a.T)
        try:
            chol = np.linalg.cholesky(a)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("scaling matrix is not positive definite") from exc
        if np.any(np.diag(chol) <= 0) or not np.all(np.isfinite(chol)):
            raise NotPositiveDefiniteError("scaling matrix is not positive definite")
        self._dense = a
        self._chol = chol
        self._diag = None
        off = a - np.diag(np.diag(a))
        if not np.any(off):
            self._diag = np.diag(a).copy()
        self._eig = None

    @classmethod
    def diagonal(cls, values) -> "ScalingMatrix":
        d = np.array(values, dtype=float).reshape(-1)
        if d.size < 1 or not np.all(np.isfinite(d)):
            raise ContractViolation("diagonal entries must be finite and non-empty")
        if np.any(d <= 0):
            raise NotPositiveDefiniteError("scaling matrix is not positive definite")
        obj = cls.__new__(cls)
        obj._dense = None
        obj._chol = None
        obj._diag = d
        obj._eig = (float(d.min()), float(d.max()))
        return obj

    @classmethod
    def identity(cls, dim: int, scale: float = 1.0) -> "ScalingMatrix":
        return cls.diagonal(np.full(dim, float(scale)))

    @classmethod
    def from_step(cls, step: float, dim: int) -> "ScalingMatrix":
        """Scaling equivalent to a scalar step length ``step``: ``(1/step) * I``."""
        if not step > 0:
            raise ContractViolation("step length must be positive")
        return cls.identity(dim, 1.0 / step)

    @property
    def dim(self) -> int:
        return self._diag.size if self._diag is not None else self._dense.shape[0]

    @property
    def entries(self) -> np.ndarray:
        if self._dense is None:
            self._dense = np.diag(self._diag)
        return self._dense

    @property
    def chol(self) -> np.ndarray:
        if self._chol is None:
            self._chol = np.diag(np.sqrt(self._diag))
        return self._chol

    @property
    def is_diagonal(self) -> bool:
        return self._diag is not None

    @property
    def diag(self) -> np.ndarray:
        if self._diag is not None:
            return self._diag
        return np.diag(self._dense).copy()

    @property
    def is_scalar(self) -> bool:
        return self._diag is not None and bool(np.all(self._diag == self._diag[0]))

    def _eigs(self):
        if self._eig is None:
            w = np.linalg.eigvalsh(self._dense)
            self._eig = (float(w[0]), float(w[-1]))
        return self._eig

    @property
    def lambda_min(self) -> float:
        return self._eigs()[0]

    @property
    def lambda_max(self) -> float:
        return self._eigs()[1]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self._diag is not None:
            return self._diag * x
        return self._dense @ x

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._diag is not None:
            return b / self._diag
        y = _forward(self._chol, b)
        return _backward(self._chol.T, y)

    def quad(self, x: np.ndarray) -> float:
        """``x^T C x``."""
        return float(x @ self.matvec(x))

    def __repr__(self):
        kind = "diagonal" if self.is_diagonal else "dense"
        return f"ScalingMatrix(dim={self.dim}, {kind})"


def _forward(lower, b):
    return solve_triangular(lower, b, lower=True, check_finite=False)


def _backward(upper, b):
    return solve_triangular(upper, b, lower=False, check_finite=False)


def ridge_to_spd(hessian, floor: float = RIDGE_FLOOR) -> ScalingMatrix:
    """Shift a symmetric (possibly indefinite) Hessian into a usable scaling.

    Adds ``tau * I`` with ``tau = max(0, floor - lambda_min)``.  A 1-D input is
    read as the diagonal of a diagonal Hessian.
    """
    h = np.array(hessian, dtype=float)
    if h.ndim <= 1:
        h = h.reshape(-1)
        tau = max(0.0, floor - float(h.min()))
        return ScalingMatrix.diagonal(h + tau)
    h = 0.5 * (h + h.T)
    lam_min = float(np.linalg.eigvalsh(h)[0])
    tau = max(0.0, floor - lam_min)
    if tau > 0:
        h = h + tau * np.eye(h.shape[0])
    try:
        return ScalingMatrix(h)
    except NotPositiveDefiniteError:
        # eigvalsh and cholesky can disagree at the 1e-16 level
        return ScalingMatrix(h + floor * np.eye(h.shape[0]))


@dataclass(frozen=True)
class SmoothTerm:
    """Differentiable part of an objective.

    ``hessian`` may return a dense 2-D array or, for separable functions, a
    1-D array holding the diagonal.  Raw Hessians need not be definite.
    """

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    dim: int
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __add__(self, other: "SmoothTerm") -> "SmoothTerm":
        if other.dim != self.dim:
            raise ContractViolation("smooth terms differ in dimension")
        hess = None
        if self.hessian is not None and other.hessian is not None:
            def hess(x, a=self.hessian, b=other.hessian):
                ha, hb = np.asarray(a(x)), np.asarray(b(x))
                if ha.ndim == 1 and hb.ndim == 1:
                    return ha + hb
                return _dense(ha) + _dense(hb)

        return SmoothTerm(
            value=lambda x: self.value(x) + other.value(x),
            gradient=lambda x: self.gradient(x) + other.gradient(x),
            dim=self.dim,
            hessian=hess,
        )


def _dense(h):
    return np.diag(h) if h.ndim == 1 else h


def quadratic_term(Q, b=None, center=None) -> SmoothTerm:
    """``1/2 (x - center)^T Q (x - center) - b^T x``."""
    Q = np.array(Q, dtype=float)
    d = Q.shape[0]
    b = np.zeros(d) if b is None else np.asarray(b, dtype=float)
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    return SmoothTerm(
        value=lambda x: 0.5 * float((x - c) @ Q @ (x - c)) - float(b @ x),
        gradient=lambda x: Q @ (x - c) - b,
        dim=d,
        hessian=lambda x: Q,
    )


class NonsmoothTerm:
    """Convex, proper, possibly nonsmooth term with a proximal capability.

    ``prox(x, t)`` returns ``argmin_w t*h(w) + 1/2 ||w - x||^2`` (identity
    scaling).  Scaled proxes are dispatched in :mod:`onestep.proxops`.

    Use the factory functions (:func:`l1_term`, :func:`nuclear_term`,
    :func:`box_indicator`, :func:`zero_term`, :func:`generic_term`) rather
    than the constructor.
    """

    KINDS = ("zero", "l1", "nuclear", "box", "generic")

    def __init__(self, kind, dim, value, prox, params=None, feasible_point=None):
        if kind not in self.KINDS:
            raise ContractViolation(f"unknown nonsmooth kind {kind!r}")
        self.kind = kind
        self.dim = int(dim)
        self._value = value
        self._prox = prox
        self.params = dict(params or {})
        if feasible_point is None:
            feasible_point = np.zeros(self.dim)
        v = self._value(as_point(feasible_point, self.dim))
        if not np.isfinite(v):
            raise ContractViolation("nonsmooth term is not proper at the supplied feasible point")

    def __call__(self, x) -> float:
        return float(self._value(np.asarray(x, dtype=float)))

    value = __call__

    def prox(self, x, t: float) -> np.ndarray:
        return self._prox(np.asarray(x, dtype=float), float(t))

    @property
    def weight(self) -> float:
        return float(self.params.get("weight", 0.0))

    def __repr__(self):
        return f"NonsmoothTerm(kind={self.kind!r}, dim={self.dim}, params={self.params})"


def zero_term(dim: int) -> NonsmoothTerm:
    return NonsmoothTerm("zero", dim, lambda x: 0.0, lambda x, t: x.copy())


def soft_threshold(x, tau):
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def l1_term(dim: int, weight: float) -> NonsmoothTerm:
    if weight < 0:
        raise ContractViolation("l1 weight must be nonnegative")
    w = float(weight)
    return NonsmoothTerm(
        "l1", dim,
        lambda x: w * float(np.abs(x).sum()),
        lambda x, t: soft_threshold(x, w * t),
        params={"weight": w},
    )


def singular_value_threshold(mat, tau):
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    return (u * s) @ vt


def nuclear_term(shape, weight: float) -> NonsmoothTerm:
    rows, cols = (int(shape[0]), int(shape[1]))
    if weight < 0:
        raise ContractViolation("nuclear weight must be nonnegative")
    w = float(weight)

    def value(x):
        if w == 0:
            return 0.0
        return w * float(np.linalg.svd(x.reshape(rows, cols), compute_uv=False).sum())

    def prox(x, t):
        return singular_value_threshold(x.reshape(rows, cols), w * t).reshape(-1)

    return NonsmoothTerm("nuclear", rows * cols, value, prox,
                         params={"weight": w, "shape": (rows, cols)})


def box_indicator(lo, hi) -> NonsmoothTerm:
    lo = np.asarray(lo, dtype=float).reshape(-1)
    hi = np.asarray(hi, dtype=float).reshape(-1)
    if lo.shape != hi.shape:
        raise ContractViolation("box bounds differ in shape")
    if np.any(lo > hi):
        raise ContractViolation("box lower bound exceeds upper bound")

    def value(x):
        return 0.0 if np.all((x >= lo) & (x <= hi)) else np.inf

    return NonsmoothTerm("box", lo.size, value, lambda x, t: np.clip(x, lo, hi),
                         params={"lo": lo, "hi": hi},
                         feasible_point=np.clip(np.zeros(lo.size), lo, hi))


def generic_term(dim, value, prox, feasible_point, params=None) -> NonsmoothTerm:
    """Wrap a user-supplied convex function and its identity-scaled prox."""
    return NonsmoothTerm("generic", dim, value, prox, params=params,
                         feasible_point=feasible_point)


@dataclass(frozen=True)
class CompositeObjective:
    """``f = smooth + nonsmooth``."""

    smooth: SmoothTerm
    nonsmooth: NonsmoothTerm

    def __post_init__(self):
        if self.smooth.dim != self.nonsmooth.dim:
            raise ContractViolation("smooth and nonsmooth parts differ in dimension")

    @property
    def dim(self) -> int:
        return self.smooth.dim

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        h = self.nonsmooth(x)
        if not np.isfinite(h):
            return np.inf
        return float(self.smooth.value(x)) + h

    value = __call__


@dataclass(frozen=True)
class RegularityConstants:
    """Strong convexity ``m``, gradient Lipschitz ``M`` and scaling bound ``L``."""

    strong_convexity_m: float
    grad_lipschitz_M: float
    scaling_bound_L: float

    def __post_init__(self):
        for name in ("strong_convexity_m", "grad_lipschitz_M", "scaling_bound_L"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"{name} must be positive")
        if self.strong_convexity_m > self.grad_lipschitz_M:
            raise ContractViolation("strong convexity constant exceeds Lipschitz constant")


def weighted_norm(x, C: ScalingMatrix) -> float:
    """``sqrt(x^T C x)``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != C.dim:
        raise ContractViolation(f"dimension mismatch: {x.size} vs {C.dim}")
    return float(np.sqrt(max(C.quad(x), 0.0)))


def spd_solve(C: ScalingMatrix, b) -> np.ndarray:
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size != C.dim:
        raise ContractViolation(f"dimension mismatch: {b.size} vs {C.dim}")
    return C.solve(b)


@dataclass
class ConvexityReport:
    trials: int
    violations: int
    worst_gap: float
    examples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def convexity_spot_check(h, trials: int, radius: float, rng_seed: int,
                         center=None, slack: float = 1e-9, dim=None) -> ConvexityReport:
    """Midpoint-convexity check of ``h`` on random pairs from a ball.

    ``h`` is a :class:`NonsmoothTerm` or any callable (then ``dim`` is
    required).  Diagnostic only: violations are counted and returned, never
    raised.
    """
    if trials < 1:
        raise ContractViolation("trials must be at least 1")
    rng = np.random.default_rng(rng_seed)
    d = int(dim) if dim is not None else h.dim
    c = np.zeros(d) if center is None else as_point(center, d)

    def draw():
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u) or 1.0
        return c + radius * rng.uniform() ** (1.0 / d) * u

    violations, worst, examples = 0, -np.inf, []
    for _ in range(trials):
        a, b = draw(), draw()
        ha, hb, hm = float(h(a)), float(h(b)), float(h(0.5 * (a + b)))
        rhs = 0.5 * (ha + hb)
        gap = hm - rhs if np.isfinite(rhs) else -np.inf
        worst = max(worst, gap)
        if gap > slack:
            violations += 1
            if len(examples) < 5:
                examples.append((a, b, gap))
    return ConvexityReport(trials, violations, float(worst), examples)
