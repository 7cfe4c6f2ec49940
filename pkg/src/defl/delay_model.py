"""Round counts, per-round time and overall training time.

Analytic quantities here are real-valued; integer versions of the local
round count ``V`` and communication round count ``H`` are only produced by
the ``integer_*`` helpers, which the simulator uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DivergenceError, DomainError, InvalidBatchError


@dataclass(frozen=True)
class LearningParams:
    """Learning-side constants of the delay model.

    ``alpha = log(1/theta)`` is the canonical local-accuracy variable;
    build from a relative local error with :meth:`from_theta`.
    ``c`` and ``nu`` have no published values and default to 1.
    """

    epsilon: float
    M: int
    alpha: float = 0.0
    nu: float = 1.0
    c: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.epsilon < 1:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if self.M < 1:
            raise DomainError("device count M must be at least 1")
        if not self.alpha >= 0:
            raise DomainError(f"alpha must be non-negative, got {self.alpha!r}")
        if not self.nu > 0:
            raise DomainError("nu must be positive")
        if not self.c > 0:
            raise DomainError("c must be positive")

    @classmethod
    def from_theta(cls, epsilon: float, M: int, theta: float, nu: float = 1.0, c: float = 1.0) -> LearningParams:
        if not 0 <= theta <= 1:
            raise DomainError(f"theta must lie in [0, 1], got {theta!r}")
        alpha = math.inf if theta == 0 else -math.log(theta)
        return cls(epsilon=epsilon, M=M, alpha=alpha, nu=nu, c=c)

    @property
    def theta(self) -> float:
        return math.exp(-self.alpha)

    @property
    def V(self) -> float:
        return self.nu * self.alpha


@dataclass(frozen=True)
class ConvergenceParams:
    """Inputs of the mini-batch local-SGD optimality-gap bound."""

    L: float
    sigma_sq: float
    dist0_sq: float
    M: int
    K: int
    V: int
    b: int

    def __post_init__(self) -> None:
        if not self.L > 0:
            raise DomainError("smoothness L must be positive")
        if self.sigma_sq < 0 or self.dist0_sq < 0:
            raise DomainError("sigma_sq and dist0_sq must be non-negative")
        if self.M < 1:
            raise DomainError("M must be at least 1")
        if self.K < self.M:
            raise DomainError(f"bound requires K >= M (K={self.K}, M={self.M})")
        if self.V < 1 or self.b < 1:
            raise DomainError("V and b must be at least 1")
        if self.K % self.V:
            raise DomainError(f"K={self.K} must be divisible by V={self.V}")

    @property
    def H(self) -> int:
        return self.K // self.V


def local_rounds(theta: float, nu: float) -> float:
    """Local SGD rounds ``nu * log(1/theta)`` needed for relative local error ``theta``."""
    if not theta > 0:
        raise DivergenceError(f"theta must be positive (local rounds unbounded), got {theta!r}")
    if theta > 1:
        raise DomainError(f"theta must be at most 1, got {theta!r}")
    if not nu > 0:
        raise DomainError("nu must be positive")
    return nu * -math.log(theta)


def integer_local_rounds(V: float) -> int:
    """``max(1, round(V))`` with halves rounded up."""
    if not V >= 0 or not math.isfinite(V):
        raise DomainError(f"V must be finite and non-negative, got {V!r}")
    return max(1, int(math.floor(V + 0.5)))


def theta_from_local_rounds(V: float, nu: float) -> float:
    """Inverse of :func:`local_rounds`."""
    if V < 0 or not nu > 0:
        raise DomainError("V must be non-negative and nu positive")
    return math.exp(-V / nu)


def round_time(T_cm: float, V: float, T_cp: float) -> float:
    """Seconds per communication round: upload plus ``V`` local steps."""
    if T_cm < 0 or V < 0 or T_cp < 0:
        raise DomainError("round_time inputs must be non-negative")
    return T_cm + V * T_cp


def rounds_to_converge(params: LearningParams, b: float) -> float:
    """Communication rounds ``H`` to reach expected optimality gap ``epsilon``."""
    if not b >= 1:
        raise InvalidBatchError(f"batch size must be >= 1, got {b!r}")
    if params.alpha == 0:
        raise DivergenceError("alpha = 0 (theta = 1) needs infinitely many rounds")
    eps, M, nu, c, alpha = params.epsilon, params.M, params.nu, params.c, params.alpha
    return c / (b * b * eps * eps * M * nu * alpha) + c * M / (b * eps)


def integer_rounds(H: float) -> int:
    if not H > 0 or not math.isfinite(H):
        raise DomainError(f"H must be positive and finite, got {H!r}")
    return int(math.ceil(H))


def overall_time(H: float, T: float) -> float:
    if not (H > 0 and T > 0):
        raise DomainError("overall_time needs positive H and T")
    return H * T


def stepsize(L: float, M: int, K: int) -> float:
    """Constant step size ``sqrt(M) / (4 L sqrt(K))``."""
    if not L > 0:
        raise DomainError("L must be positive")
    if M < 1 or K < M:
        raise DomainError(f"stepsize requires K >= M >= 1 (K={K}, M={M})")
    return math.sqrt(M) / (4.0 * L * math.sqrt(K))


def convergence_bound_terms(p: ConvergenceParams) -> tuple[float, float, float]:
    """The three additive terms of the bound: initial distance, noise, local drift."""
    root = math.sqrt(p.M * p.K)
    init = 8.0 * p.dist0_sq / root
    noise = p.sigma_sq / (2.0 * p.b * p.L * root)
    drift = p.sigma_sq * p.M * (p.V - 1) / (p.b * p.L * p.K)
    return init, noise, drift


def convergence_bound(p: ConvergenceParams) -> float:
    """Upper bound on ``E[F(w_bar_K) - F(w*)]`` for local SGD with batch size ``b``."""
    return math.fsum(convergence_bound_terms(p))
