"""Overall-time minimization over batch size and local accuracy.

The objective is ``H(b, alpha) * (T_cm + nu * alpha * T_cp)`` with ``T_cp``
eliminated at its lower bound ``b * max_m G_m/f_m`` (the objective is
strictly increasing in ``T_cp``, so that constraint always binds).

Three routes are provided:

* :func:`closed_form_plan` evaluates the published stationary-point
  formulas at the bottleneck device.
* :func:`oracle_plan` minimizes the objective by brute force (log grid plus
  coordinate-wise golden-section refinement) over a bounded box, and also
  enumerates power-of-two batch sizes exactly.
* :func:`kkt_residuals` builds a KKT certificate at any point from the
  Lagrangian, with analytic gradients checked against finite differences.

Note that for fixed ``alpha`` every term of the objective is non-increasing
in ``b``; on a box ``b <= b_max`` the minimizer sits on the upper ``b``
face. Certificates can therefore carry duals for the search box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .delay_model import LearningParams
from .errors import DomainError, InternalConsistencyError, PlannerError
from .system_model import Fleet, fleet_comm_time

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

KKT_TOLERANCE = 1e-5
FD_TOLERANCE = 1e-4
REFINE_RTOL = 1e-12


@dataclass(frozen=True)
class PlanInputs:
    """Everything the planner needs.

    Attributes:
        t_cm: Fleet uplink time per round (seconds).
        ratios: Per-device ``G_m / f_m`` (seconds per sample per step).
        learning: Learning constants; its ``alpha`` is ignored here.
    """

    t_cm: float
    ratios: tuple[float, ...]
    learning: LearningParams

    def __post_init__(self) -> None:
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if not self.ratios:
            raise PlannerError("at least one device ratio is required")
        if not (self.t_cm > 0 and math.isfinite(self.t_cm)):
            raise PlannerError(f"T_cm must be positive and finite, got {self.t_cm!r}")
        if not all(r > 0 and math.isfinite(r) for r in self.ratios):
            raise PlannerError("every G_m/f_m ratio must be positive and finite")

    @classmethod
    def from_fleet(cls, fleet: Fleet, epsilon: float, nu: float = 1.0, c: float = 1.0) -> PlanInputs:
        learning = LearningParams(epsilon=epsilon, M=len(fleet), nu=nu, c=c)
        return cls(t_cm=fleet_comm_time(fleet), ratios=tuple(fleet.ratios), learning=learning)

    @property
    def r_max(self) -> float:
        return max(self.ratios)

    @property
    def bottleneck(self) -> int:
        return self.ratios.index(self.r_max)


def objective_eval(b: float, alpha: float, inputs: PlanInputs) -> float:
    """Overall time in seconds at continuous batch size ``b`` and ``alpha``."""
    if not b >= 1:
        raise DomainError(f"batch size must be >= 1, got {b!r}")
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    lp = inputs.learning
    c, eps, M, nu = lp.c, lp.epsilon, lp.M, lp.nu
    H = c / (b * b * eps * eps * M * nu * alpha) + c * M / (b * eps)
    return H * (inputs.t_cm + nu * alpha * b * inputs.r_max)


def objective_grid(b: np.ndarray, alpha: np.ndarray, inputs: PlanInputs) -> np.ndarray:
    """Vectorized :func:`objective_eval`; ``b`` and ``alpha`` broadcast."""
    lp = inputs.learning
    c, eps, M, nu = lp.c, lp.epsilon, lp.M, lp.nu
    b = np.asarray(b, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    H = c / (b * b * eps * eps * M * nu * alpha) + c * M / (b * eps)
    return H * (inputs.t_cm + nu * alpha * b * inputs.r_max)


def objective_gradient(b: float, alpha: float, inputs: PlanInputs) -> tuple[float, float]:
    """Analytic ``(d/db, d/dalpha)`` of :func:`objective_eval`."""
    lp = inputs.learning
    c, eps, M, nu, T, r = lp.c, lp.epsilon, lp.M, lp.nu, inputs.t_cm, inputs.r_max
    # Expanded objective: cT/(b^2 e^2 M nu a) + c r/(b e^2 M) + c M T/(b e) + c M nu a r/e
    d_b = -2 * c * T / (b**3 * eps**2 * M * nu * alpha) - c * r / (b**2 * eps**2 * M) - c * M * T / (b**2 * eps)
    d_a = -c * T / (b**2 * eps**2 * M * nu * alpha**2) + c * M * nu * r / eps
    return d_b, d_a


@dataclass(frozen=True)
class KktCertificate:
    """Duals and residuals of the KKT system at one point.

    Stationarity residuals are ``(dL/db, dL/dalpha, dL/dT_cp)``. Scaled
    residuals multiply each by its coordinate and divide by the objective,
    so they measure relative objective change per relative move.
    ``box_duals`` are only non-zero when a search-box bound is active.
    """

    point: tuple[float, float, float]
    objective: float
    lambda1: float
    lambda2: float
    mu: tuple[float, ...]
    box_duals: dict[str, float]
    stationarity_residuals: tuple[float, float, float]
    scaled_residuals: tuple[float, float, float]
    complementarity_residuals: dict[str, float]
    feasibility: dict[str, bool]
    # dL/dalpha using T_cm instead of T_cp in its second term, as printed.
    alpha_residual_printed: float
    alpha_residual_printed_scaled: float
    fd_discrepancy: tuple[float, float, float]
    fd_discrepancy_printed: float

    @property
    def feasible(self) -> bool:
        return all(self.feasibility.values())

    @property
    def duals_nonnegative(self) -> bool:
        duals = [self.lambda1, self.lambda2, *self.mu, *self.box_duals.values()]
        return all(d >= 0 for d in duals)

    @property
    def max_scaled_residual(self) -> float:
        return max(self.scaled_residuals)

    def passed(self, tol: float = KKT_TOLERANCE) -> bool:
        comp = max(self.complementarity_residuals.values(), default=0.0)
        return self.feasible and self.duals_nonnegative and self.max_scaled_residual <= tol and comp <= tol

    def as_dict(self) -> dict:
        return {
            "point": {"b": self.point[0], "alpha": self.point[1], "T_cp": self.point[2]},
            "objective": self.objective,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "mu": list(self.mu),
            "box_duals": dict(self.box_duals),
            "stationarity_residuals": list(self.stationarity_residuals),
            "scaled_residuals": list(self.scaled_residuals),
            "complementarity_residuals": dict(self.complementarity_residuals),
            "feasibility": dict(self.feasibility),
            "alpha_residual_printed": self.alpha_residual_printed,
            "alpha_residual_printed_scaled": self.alpha_residual_printed_scaled,
            "fd_discrepancy": list(self.fd_discrepancy),
            "fd_discrepancy_printed": self.fd_discrepancy_printed,
            "passed": self.passed(),
        }


@dataclass(frozen=True)
class Plan:
    """A candidate operating point.

    ``t_cp_star``, ``H`` and ``overall_time`` are evaluated at
    ``(b_cont, alpha_star)``; the ``*_rounded`` fields at
    ``(b_rounded, alpha_star)``.
    """

    source: str
    alpha_star: float
    b_cont: float
    b_rounded: int
    t_cm: float
    t_cp_star: float
    H: float
    overall_time: float
    t_cp_rounded: float
    H_rounded: float
    overall_time_rounded: float
    nu: float
    certificate: KktCertificate | None = field(default=None, compare=False)

    @property
    def theta_star(self) -> float:
        return math.exp(-self.alpha_star)

    @property
    def V(self) -> float:
        return self.nu * self.alpha_star

    def as_dict(self) -> dict:
        out = {
            "source": self.source,
            "alpha_star": self.alpha_star,
            "theta_star": self.theta_star,
            "V": self.V,
            "b_cont": self.b_cont,
            "b_rounded": self.b_rounded,
            "T_cm": self.t_cm,
            "T_cp_star": self.t_cp_star,
            "H": self.H,
            "overall_time": self.overall_time,
            "T_cp_rounded": self.t_cp_rounded,
            "H_rounded": self.H_rounded,
            "overall_time_rounded": self.overall_time_rounded,
        }
        if self.certificate is not None:
            out["kkt"] = self.certificate.as_dict()
        return out


def _rounds(b: float, alpha: float, lp: LearningParams) -> float:
    return lp.c / (b * b * lp.epsilon**2 * lp.M * lp.nu * alpha) + lp.c * lp.M / (b * lp.epsilon)


def make_plan(
    source: str,
    b_cont: float,
    alpha: float,
    inputs: PlanInputs,
    b_rounded: int | None = None,
    certificate: KktCertificate | None = None,
) -> Plan:
    lp = inputs.learning
    if b_rounded is None:
        b_rounded = round_batch(b_cont, alpha, inputs)
    return Plan(
        source=source,
        alpha_star=alpha,
        b_cont=b_cont,
        b_rounded=b_rounded,
        t_cm=inputs.t_cm,
        t_cp_star=b_cont * inputs.r_max,
        H=_rounds(b_cont, alpha, lp),
        overall_time=objective_eval(b_cont, alpha, inputs),
        t_cp_rounded=b_rounded * inputs.r_max,
        H_rounded=_rounds(b_rounded, alpha, lp),
        overall_time_rounded=objective_eval(b_rounded, alpha, inputs),
        nu=lp.nu,
        certificate=certificate,
    )


def closed_form_point(inputs: PlanInputs) -> tuple[float, float]:
    """Unclamped ``(alpha*, b*)`` of the published closed form at the bottleneck device."""
    lp = inputs.learning
    r = inputs.r_max  # G_m / f_m of the bottleneck device
    alpha = math.sqrt(inputs.t_cm / (r * lp.M**2 * lp.epsilon * lp.nu**2))
    b = 2.0 * lp.c * lp.M * math.sqrt(inputs.t_cm * lp.epsilon / r)
    return alpha, b


def closed_form_plan(inputs: PlanInputs) -> Plan:
    """Plan from the published formulas, with ``b`` clamped to at least 1."""
    alpha, b = closed_form_point(inputs)
    if not (alpha > 0 and math.isfinite(alpha) and math.isfinite(b)):
        raise PlannerError(f"degenerate closed form: alpha={alpha!r}, b={b!r}")
    b = max(1.0, b)
    cert = kkt_residuals(b, alpha, b * inputs.r_max, inputs)
    return make_plan("closed_form", b, alpha, inputs, certificate=cert)


def _power_of_two_neighbours(b: float) -> tuple[int, int]:
    mant, exp = math.frexp(b)  # b = mant * 2**exp, mant in [0.5, 1)
    if mant == 0.5:
        p = 2 ** (exp - 1)
        return p, p
    return 2 ** (exp - 1), 2**exp


def round_batch(b_cont: float, alpha: float, inputs: PlanInputs) -> int:
    """Project ``b_cont`` to the neighbouring power of two with the smaller objective.

    Ties go to the smaller batch.
    """
    if not b_cont >= 1:
        raise DomainError(f"b_cont must be >= 1, got {b_cont!r}")
    lo, hi = _power_of_two_neighbours(b_cont)
    if lo == hi:
        return lo
    if objective_eval(hi, alpha, inputs) < objective_eval(lo, alpha, inputs):
        return hi
    return lo


# --------------------------------------------------------------------- oracle


@dataclass(frozen=True)
class OracleGrid:
    """Search box and grid resolution for the brute-force oracle."""

    n_b: int = 200
    n_alpha: int = 200
    b_max: float = 1024.0
    alpha_min: float = 1e-4
    alpha_max: float = 20.0

    def __post_init__(self) -> None:
        if self.n_b < 1 or self.n_alpha < 1:
            raise PlannerError("oracle grid is empty")
        if not (self.b_max >= 1 and 0 < self.alpha_min <= self.alpha_max):
            raise PlannerError("invalid oracle search box")

    def b_values(self) -> np.ndarray:
        return np.geomspace(1.0, self.b_max, self.n_b)

    def alpha_values(self) -> np.ndarray:
        return np.geomspace(self.alpha_min, self.alpha_max, self.n_alpha)

    def box(self) -> dict[str, float]:
        return {"b_max": self.b_max, "alpha_min": self.alpha_min, "alpha_max": self.alpha_max}


@dataclass(frozen=True)
class OracleResult:
    continuous: Plan
    constrained: Plan
    grid_value: float
    evaluations: int


def golden_section(f: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-13) -> tuple[float, float, int]:
    """Minimize a unimodal ``f`` on ``[lo, hi]``; endpoints are always considered.

    Returns ``(x, f(x), evaluations)``.
    """
    if hi < lo:
        raise ValueError("empty interval")
    best_x, best_f = lo, f(lo)
    f_hi = f(hi)
    n = 2
    if f_hi < best_f:
        best_x, best_f = hi, f_hi
    a, d = lo, hi
    x1 = d - _GOLDEN * (d - a)
    x2 = a + _GOLDEN * (d - a)
    f1, f2 = f(x1), f(x2)
    n += 2
    while d - a > xtol * max(1.0, abs(a) + abs(d)):
        if f1 <= f2:
            d, x2, f2 = x2, x1, f1
            x1 = d - _GOLDEN * (d - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (d - a)
            f2 = f(x2)
        n += 1
        if n > 400:
            break
    for x, fx in ((x1, f1), (x2, f2)):
        if fx < best_f:
            best_x, best_f = x, fx
    return best_x, best_f, n


def _refine(
    inputs: PlanInputs,
    grid: OracleGrid,
    log_b: float,
    log_a: float,
    value: float,
    db: float,
    da: float,
) -> tuple[float, float, float, int]:
    """Coordinate descent in log space with golden-section line searches.

    Each window starts at one grid spacing around the incumbent; it doubles
    when the line search ends on a window edge that is not a box face and
    halves otherwise.
    """
    b_face = (0.0, math.log(grid.b_max))
    a_face = (math.log(grid.alpha_min), math.log(grid.alpha_max))
    evals = 0

    def line_search(fn, x0, width, faces):
        lo, hi = max(faces[0], x0 - width), min(faces[1], x0 + width)
        x, v, n = golden_section(fn, lo, hi)
        on_edge = (abs(x - lo) < 1e-9 and lo > faces[0]) or (abs(x - hi) < 1e-9 and hi < faces[1])
        return x, v, n, (width * 2 if on_edge else max(width / 2, 1e-6))

    for _ in range(500):
        prev = value
        x, v, n, db = line_search(
            lambda t: objective_eval(min(max(math.exp(t), 1.0), grid.b_max), math.exp(log_a), inputs),
            log_b, db, b_face,
        )
        evals += n
        if v <= value:
            log_b, value = x, v
        x, v, n, da = line_search(
            lambda t: objective_eval(min(max(math.exp(log_b), 1.0), grid.b_max), math.exp(t), inputs),
            log_a, da, a_face,
        )
        evals += n
        if v <= value:
            log_a, value = x, v
        if prev - value <= REFINE_RTOL * abs(value) and db <= 1e-3 and da <= 1e-3:
            break
    return log_b, log_a, value, evals


def _snap(x: float, lo: float, hi: float, rtol: float = 1e-9) -> float:
    if abs(x - lo) <= rtol * max(1.0, abs(lo)):
        return lo
    if abs(x - hi) <= rtol * max(1.0, abs(hi)):
        return hi
    return x


def _best_alpha_for_b(b: float, inputs: PlanInputs, grid: OracleGrid, alphas: np.ndarray) -> tuple[float, float, int]:
    vals = objective_grid(b, alphas, inputs)
    j = int(np.argmin(vals))
    lo = math.log(alphas[max(j - 1, 0)])
    hi = math.log(alphas[min(j + 1, len(alphas) - 1)])
    x, v, n = golden_section(lambda la: objective_eval(b, math.exp(la), inputs), lo, hi)
    a = _snap(math.exp(x), grid.alpha_min, grid.alpha_max)
    return a, objective_eval(b, a, inputs), n + len(alphas)


def oracle_plan(inputs: PlanInputs, grid: OracleGrid | None = None) -> OracleResult:
    """Brute-force minimizer of the objective over the search box.

    The continuous optimum comes from a log grid followed by coordinate
    descent; the constrained optimum enumerates every power of two up to
    ``b_max`` with a 1-D ``alpha`` search per batch size. Grid ties break
    toward the lexicographically smallest ``(b, alpha)``.
    """
    grid = grid or OracleGrid()
    bs = grid.b_values()
    alphas = grid.alpha_values()
    values = objective_grid(bs[:, None], alphas[None, :], inputs)
    if values.size == 0:
        raise PlannerError("oracle grid is empty")
    flat = int(np.argmin(values))  # first minimum in row-major (b, alpha) order
    i, j = divmod(flat, len(alphas))
    grid_value = float(values[i, j])
    evals = values.size

    db = math.log(bs[1] / bs[0]) if len(bs) > 1 else 0.0
    da = math.log(alphas[1] / alphas[0]) if len(alphas) > 1 else 0.0
    log_b, log_a, value, n = _refine(inputs, grid, math.log(bs[i]), math.log(alphas[j]), grid_value, db, da)
    evals += n
    b = _snap(math.exp(log_b), 1.0, grid.b_max)
    a = _snap(math.exp(log_a), grid.alpha_min, grid.alpha_max)
    if objective_eval(b, a, inputs) > value:
        b, a = math.exp(log_b), math.exp(log_a)
    cert = kkt_residuals(b, a, b * inputs.r_max, inputs, box=grid.box())
    continuous = make_plan("oracle", b, a, inputs, certificate=cert)

    best: tuple[float, int, float] | None = None
    p = 1
    while p <= grid.b_max:
        a_p, v_p, n = _best_alpha_for_b(float(p), inputs, grid, alphas)
        evals += n
        if best is None or v_p < best[0]:
            best = (v_p, p, a_p)
        p *= 2
    _, p_best, a_best = best
    cert_c = kkt_residuals(float(p_best), a_best, p_best * inputs.r_max, inputs, box=grid.box())
    constrained = make_plan("oracle_pow2", float(p_best), a_best, inputs, b_rounded=p_best, certificate=cert_c)
    return OracleResult(continuous=continuous, constrained=constrained, grid_value=grid_value, evaluations=evals)


def gap_ratio(closed: Plan, oracle: Plan) -> float:
    """Relative excess of the closed-form overall time over the oracle's."""
    return (closed.overall_time - oracle.overall_time) / oracle.overall_time


# ------------------------------------------------------------------------ KKT


def _lagrangian_parts(b: float, alpha: float, t_cp: float, inputs: PlanInputs) -> tuple[float, ...]:
    lp = inputs.learning
    c, eps, M, nu, T = lp.c, lp.epsilon, lp.M, lp.nu, inputs.t_cm
    return (
        c * T / (b**2 * eps**2 * M * nu * alpha),
        c * M * T / (b * eps),
        c * t_cp / (b**2 * eps**2 * M),
        c * M * nu * alpha * t_cp / (b * eps),
    )


def lagrangian(
    b: float,
    alpha: float,
    t_cp: float,
    inputs: PlanInputs,
    lambda1: float,
    lambda2: float,
    mu: Sequence[float],
    box_duals: dict[str, float] | None = None,
    box: dict[str, float] | None = None,
) -> float:
    """Lagrangian of the relaxed problem, optionally with search-box terms."""
    value = math.fsum(_lagrangian_parts(b, alpha, t_cp, inputs))
    value -= lambda1 * (b - 1.0) + lambda2 * alpha
    value -= math.fsum(m * (t_cp - r * b) for m, r in zip(mu, inputs.ratios))
    if box and box_duals:
        value -= box_duals.get("b_max", 0.0) * (box["b_max"] - b)
        value -= box_duals.get("alpha_min", 0.0) * (alpha - box["alpha_min"])
        value -= box_duals.get("alpha_max", 0.0) * (box["alpha_max"] - alpha)
    return value


def _objective_partials(b: float, alpha: float, t_cp: float, inputs: PlanInputs) -> dict[str, tuple[float, ...]]:
    """Term-wise partial derivatives of the primal part of the Lagrangian."""
    lp = inputs.learning
    c, eps, M, nu, T = lp.c, lp.epsilon, lp.M, lp.nu, inputs.t_cm
    return {
        "b": (
            -2 * c * T / (b**3 * eps**2 * M * nu * alpha),
            -c * T * M / (b**2 * eps),
            -2 * c * t_cp / (b**3 * eps**2 * M),
            -c * M * t_cp * nu * alpha / (b**2 * eps),
        ),
        "alpha": (
            -c * T / (b**2 * eps**2 * M * nu * alpha**2),
            c * t_cp * M * nu / (b * eps),
        ),
        "alpha_printed": (
            -c * T / (b**2 * eps**2 * M * nu * alpha**2),
            c * T * M * nu / (b * eps),
        ),
        "t_cp": (
            c / (b**2 * eps**2 * M),
            c * M * nu * alpha / (b * eps),
        ),
    }


def _central_difference(fn: Callable[[float], float], x: float) -> float:
    h = 1e-6 * max(1.0, abs(x))
    return (fn(x + h) - fn(x - h)) / (2 * h)


def _at_bound(x: float, bound: float, rtol: float = 1e-9) -> bool:
    return abs(x - bound) <= rtol * max(1.0, abs(bound))


def kkt_residuals(
    b: float,
    alpha: float,
    t_cp: float,
    inputs: PlanInputs,
    box: dict[str, float] | None = None,
) -> KktCertificate:
    """KKT certificate at ``(b, alpha, T_cp)``.

    Duals are recovered from stationarity: the ``T_cp`` equation fixes the
    total ``mu`` (placed on the lowest-index binding device), and
    complementary slackness zeroes ``lambda1`` when ``b > 1`` and
    ``lambda2`` when ``alpha > 0``. If ``box`` is given (keys ``b_max``,
    ``alpha_min``, ``alpha_max``), an active box face gets a dual that
    absorbs the remaining stationarity of its coordinate. Duals are never
    allowed negative; any part a non-negative dual cannot absorb stays in
    the residual.

    Raises:
        InternalConsistencyError: analytic partials of the Lagrangian
            disagree with central differences by more than ``1e-4``
            relative to the magnitude of their terms.
    """
    if not (b > 0 and alpha > 0):
        raise DomainError("kkt_residuals needs b > 0 and alpha > 0")
    ratios = inputs.ratios
    feas_tol = 1e-12
    feasibility = {
        "b>=1": b >= 1.0 - feas_tol,
        "alpha>=0": alpha >= 0.0,
        "T_cp>=G_m b/f_m": all(t_cp >= r * b * (1 - feas_tol) for r in ratios),
    }
    if box:
        feasibility["b<=b_max"] = b <= box["b_max"] * (1 + feas_tol)
        feasibility["alpha in box"] = box["alpha_min"] * (1 - feas_tol) <= alpha <= box["alpha_max"] * (1 + feas_tol)

    parts = _objective_partials(b, alpha, t_cp, inputs)
    objective = math.fsum(_lagrangian_parts(b, alpha, t_cp, inputs))

    dP_dT = math.fsum(parts["t_cp"])
    binding = [m for m, r in enumerate(ratios) if abs(t_cp - r * b) <= 1e-12 * max(t_cp, r * b)]
    mu = [0.0] * len(ratios)
    if binding:
        mu[binding[0]] = dP_dT
    mu_r = math.fsum(m * r for m, r in zip(mu, ratios))

    dP_db = math.fsum(parts["b"])
    dP_da = math.fsum(parts["alpha"])
    dP_da_printed = math.fsum(parts["alpha_printed"])

    # b: dL/db = dP/db - lambda1 + sum(mu r) + lambda_bmax
    g_b = dP_db + mu_r
    lambda1 = 0.0
    box_duals = {"b_max": 0.0, "alpha_min": 0.0, "alpha_max": 0.0} if box else {}
    if _at_bound(b, 1.0):
        lambda1 = max(0.0, g_b)
    if box and _at_bound(b, box["b_max"]):
        box_duals["b_max"] = max(0.0, -g_b)
    res_b = g_b - lambda1 + box_duals.get("b_max", 0.0)

    # alpha: dL/dalpha = dP/dalpha - lambda2 - lambda_amin + lambda_amax
    lambda2 = 0.0  # alpha > 0 here, so complementary slackness forces zero
    if box and _at_bound(alpha, box["alpha_min"]):
        box_duals["alpha_min"] = max(0.0, dP_da)
    if box and _at_bound(alpha, box["alpha_max"]):
        box_duals["alpha_max"] = max(0.0, -dP_da)
    alpha_box = -box_duals.get("alpha_min", 0.0) + box_duals.get("alpha_max", 0.0)
    res_a = dP_da - lambda2 + alpha_box
    res_a_printed = dP_da_printed - lambda2 + alpha_box

    res_t = dP_dT - math.fsum(mu)

    def scaled(res: float, x: float) -> float:
        return abs(res) * abs(x) / objective

    residuals = (res_b, res_a, res_t)
    scaled_res = (scaled(res_b, b), scaled(res_a, alpha), scaled(res_t, t_cp))

    comp = {
        "lambda1*(b-1)": abs(lambda1 * (b - 1.0)) * b / objective,
        "lambda2*alpha": abs(lambda2 * alpha) * alpha / objective,
        "mu*(T_cp-G b/f)": max(abs(m * (t_cp - r * b)) for m, r in zip(mu, ratios)) * t_cp / objective,
    }
    if box:
        comp["b_max"] = abs(box_duals["b_max"] * (box["b_max"] - b)) * b / objective
        comp["alpha_min"] = abs(box_duals["alpha_min"] * (alpha - box["alpha_min"])) * alpha / objective
        comp["alpha_max"] = abs(box_duals["alpha_max"] * (box["alpha_max"] - alpha)) * alpha / objective

    def L(bb: float, aa: float, tt: float) -> float:
        return lagrangian(bb, aa, tt, inputs, lambda1, lambda2, mu, box_duals, box)

    fd = (
        _central_difference(lambda x: L(x, alpha, t_cp), b),
        _central_difference(lambda x: L(b, x, t_cp), alpha),
        _central_difference(lambda x: L(b, alpha, x), t_cp),
    )
    dual_terms = {
        "b": (lambda1, mu_r, box_duals.get("b_max", 0.0)),
        "alpha": (lambda2, alpha_box),
        "t_cp": tuple(mu),
    }
    discrepancy = []
    for key, analytic, numeric in zip(("b", "alpha", "t_cp"), residuals, fd):
        scale = sum(abs(t) for t in parts[key]) + sum(abs(t) for t in dual_terms[key])
        rel = abs(analytic - numeric) / scale
        discrepancy.append(rel)
        if rel > FD_TOLERANCE:
            raise InternalConsistencyError(
                f"dL/d{key}: analytic {analytic!r} vs finite difference {numeric!r} (relative gap {rel:.3g})"
            )
    scale_a = sum(abs(t) for t in parts["alpha_printed"]) + sum(abs(t) for t in dual_terms["alpha"])
    printed_gap = abs(res_a_printed - fd[1]) / scale_a

    return KktCertificate(
        point=(b, alpha, t_cp),
        objective=objective,
        lambda1=lambda1,
        lambda2=lambda2,
        mu=tuple(mu),
        box_duals=box_duals,
        stationarity_residuals=residuals,
        scaled_residuals=scaled_res,
        complementarity_residuals=comp,
        feasibility=feasibility,
        alpha_residual_printed=res_a_printed,
        alpha_residual_printed_scaled=scaled(res_a_printed, alpha),
        fd_discrepancy=tuple(discrepancy),
        fd_discrepancy_printed=printed_gap,
    )
