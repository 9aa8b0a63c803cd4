"""Time-varying cost models and continuous-time optimization vector fields.

The central flow is the continuous-time Newton method

    x' = -hess(x, theta)^{-1} grad(x, theta) + u,

optionally augmented with a correction u = -hess^{-1} cross @ v that
compensates the motion of the minimizer, where v is either the exact
parameter velocity (ideal) or an online estimate of it. The redesign
condition checker evaluates the scalar certificate

    <grad_x V, u> + <grad_theta V, v>  <=  0,      V = 0.5 ||grad f||^2,

which the Newton correction satisfies with equality.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from . import numerics

REDESIGN_TOL = 1e-9


class CorrectionMode(enum.Enum):
    NONE = "none"
    IDEAL = "ideal"
    ESTIMATED = "estimated"

    @classmethod
    def from_string(cls, name: str) -> "CorrectionMode":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown correction mode {name!r}; "
                             f"expected one of {[m.value for m in cls]}") from None


class CostModel:
    """Smooth strongly convex cost f(x, theta) with derivative oracles.

    Subclasses fill in ``value``, ``gradient``, ``hessian`` (n x n, symmetric,
    eigenvalues >= mu) and ``cross_hessian`` (n x p, the derivative of the
    gradient with respect to theta), plus a ``minimizer`` oracle when the
    argmin is known in closed form.
    """

    name = "abstract"

    def __init__(self, n: int, p: int, mu: float):
        if n < 1 or p < 1:
            raise ValueError("dimensions must be >= 1")
        if not mu > 0.0:
            raise ValueError("strong-convexity modulus must be > 0")
        self.n = n
        self.p = p
        self.mu = mu

    def value(self, x, theta) -> float:
        raise NotImplementedError

    def gradient(self, x, theta) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x, theta) -> np.ndarray:
        raise NotImplementedError

    def cross_hessian(self, x, theta) -> np.ndarray:
        raise NotImplementedError

    def minimizer(self, theta) -> np.ndarray:
        raise NotImplementedError

    def solve_hessian(self, x, theta, rhs) -> np.ndarray:
        """Solve hess(x, theta) y = rhs.

        Subclasses with structured Hessians may shortcut this, provided the
        result is bit-identical to partial-pivot elimination on the full
        matrix (true for identity and diagonal Hessians).
        """
        return numerics.solve_linear(self.hessian(x, theta), rhs)


class QuadraticTrackingCost(CostModel):
    """f(x, theta) = 0.5 ||x - theta||^2 (n = p, identity Hessian)."""

    name = "quadratic-tracking"

    def __init__(self, dim: int):
        super().__init__(dim, dim, mu=1.0)
        self._eye = np.eye(dim)
        self._eye.setflags(write=False)
        self._neg_eye = -np.eye(dim)
        self._neg_eye.setflags(write=False)

    def value(self, x, theta) -> float:
        d = np.asarray(x) - np.asarray(theta)
        return 0.5 * float(d @ d)

    def gradient(self, x, theta) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) - np.asarray(theta, dtype=np.float64)

    def hessian(self, x, theta) -> np.ndarray:
        return self._eye

    def cross_hessian(self, x, theta) -> np.ndarray:
        return self._neg_eye

    def minimizer(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=np.float64).copy()

    def solve_hessian(self, x, theta, rhs) -> np.ndarray:
        # Identity Hessian: elimination returns the rhs unchanged.
        return np.asarray(rhs, dtype=np.float64).copy()


class LogCoshTrackingCost(CostModel):
    """f(x, theta) = sum log cosh(x_i - theta_i) + (mu/2) ||x - theta||^2.

    A non-quadratic strongly convex tracker whose Hessian varies with the
    state; mu = 0.1 is a conservative modulus (the log-cosh part only adds
    curvature).
    """

    name = "logcosh"

    def __init__(self, dim: int, mu: float = 0.1):
        super().__init__(dim, dim, mu=mu)

    @staticmethod
    def _logcosh(u: np.ndarray) -> np.ndarray:
        # log cosh u = |u| + log1p(exp(-2|u|)) - log 2, stable for large |u|.
        a = np.abs(u)
        return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)

    def value(self, x, theta) -> float:
        d = np.asarray(x, dtype=np.float64) - np.asarray(theta, dtype=np.float64)
        return float(np.sum(self._logcosh(d)) + 0.5 * self.mu * (d @ d))

    def gradient(self, x, theta) -> np.ndarray:
        d = np.asarray(x, dtype=np.float64) - np.asarray(theta, dtype=np.float64)
        return np.tanh(d) + self.mu * d

    def _hessian_diagonal(self, x, theta) -> np.ndarray:
        d = np.asarray(x, dtype=np.float64) - np.asarray(theta, dtype=np.float64)
        return 1.0 / np.cosh(d) ** 2 + self.mu

    def hessian(self, x, theta) -> np.ndarray:
        return np.diag(self._hessian_diagonal(x, theta))

    def cross_hessian(self, x, theta) -> np.ndarray:
        return -self.hessian(x, theta)

    def minimizer(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=np.float64).copy()

    def solve_hessian(self, x, theta, rhs) -> np.ndarray:
        # Diagonal Hessian: elimination reduces to elementwise division.
        return np.asarray(rhs, dtype=np.float64) / self._hessian_diagonal(x, theta)


_COSTS = {
    QuadraticTrackingCost.name: QuadraticTrackingCost,
    LogCoshTrackingCost.name: LogCoshTrackingCost,
}


def cost_by_name(name: str, dim: int) -> CostModel:
    try:
        return _COSTS[name](dim)
    except KeyError:
        raise ValueError(f"unknown cost {name!r}; expected one of {sorted(_COSTS)}") from None


def newton_rhs(cost: CostModel, x, theta) -> np.ndarray:
    """Correction-free Newton vector field -hess^{-1} grad."""
    return -cost.solve_hessian(x, theta, cost.gradient(x, theta))


def ideal_correction(cost: CostModel, x, theta, theta_dot) -> np.ndarray:
    """-hess^{-1} cross @ theta_dot, the exact minimizer-motion compensation."""
    rhs = cost.cross_hessian(x, theta) @ np.asarray(theta_dot, dtype=np.float64)
    return -cost.solve_hessian(x, theta, rhs)


def estimated_correction(cost: CostModel, x, theta, theta_dot_estimate) -> np.ndarray:
    """Same formula as :func:`ideal_correction`, fed an estimate of theta'."""
    return ideal_correction(cost, x, theta, theta_dot_estimate)


def corrected_newton_rhs(cost: CostModel, x, theta, velocity=None) -> np.ndarray:
    """Newton field plus correction in a single Hessian solve.

    ``velocity`` is the parameter-rate vector the correction should cancel
    (exact or estimated); None means no correction. Equal to
    newton_rhs + ideal_correction by linearity of the solve.
    """
    g = cost.gradient(x, theta)
    if velocity is not None:
        g = g + cost.cross_hessian(x, theta) @ np.asarray(velocity, dtype=np.float64)
    return -cost.solve_hessian(x, theta, g)


def gradient_flow_rhs(cost: CostModel, x, theta) -> np.ndarray:
    """Plain descent flow -grad f."""
    return -cost.gradient(x, theta)


def lyapunov_gradients(cost: CostModel, x, theta):
    """V = 0.5 ||grad f||^2 with its x- and theta-gradients.

    Returns (V, hess @ grad, cross^T @ grad); the last is a p-vector.
    """
    g = cost.gradient(x, theta)
    V = 0.5 * float(g @ g)
    grad_x_V = cost.hessian(x, theta) @ g
    grad_theta_V = cost.cross_hessian(x, theta).T @ g
    return V, grad_x_V, grad_theta_V


def check_redesign_condition(grad_x_V, grad_theta_V, u, theta_rate):
    """Evaluate <grad_x V, u> + <grad_theta V, theta_rate>.

    ``theta_rate`` is the parameter velocity plus any disturbance (or the
    online estimate standing in for it). Returns (lhs, lhs <= REDESIGN_TOL).
    """
    lhs = float(np.dot(grad_x_V, u)) + float(np.dot(grad_theta_V, theta_rate))
    return lhs, lhs <= REDESIGN_TOL
