"""Synchronous federated local SGD on synthetic convex tasks.

Each communication round every device runs ``V`` mini-batch SGD steps from
the current global model, the server averages the results weighted by
dataset size, and the simulated clock advances by one round time of the
delay model. Randomness is drawn from per-device streams keyed by
``(seed, device, round)``, so traces do not depend on how devices are
scheduled across worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .delay_model import ConvergenceParams, convergence_bound, round_time, stepsize
from .errors import DomainError, SimulationDiverged, UnsupportedTaskError
from .system_model import Fleet, fleet_comm_time, fleet_compute_time

_INIT_STREAM = 0
_NOISE_STREAM = 1


def default_threads() -> int:
    """Worker count from ``DEFL_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("DEFL_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("DEFL_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def device_rng(seed: int, device: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng([_NOISE_STREAM, seed, device, round_index])


def initial_model(seed: int, d: int) -> np.ndarray:
    """``w_0`` with entries uniform in [-1, 1], fixed by ``seed``."""
    return np.random.default_rng([_INIT_STREAM, seed]).uniform(-1.0, 1.0, size=d)


# ---------------------------------------------------------------------- tasks


@dataclass(frozen=True)
class QuadraticTask:
    """Loss ``F_m(w) = 0.5 w'Aw - u_m'w`` with additive Gaussian gradient noise.

    Every device shares ``A``; ``u_dev`` holds one linear term per device and
    is weighted so that the global minimizer is ``A^-1 u``. Identical data
    means all rows of ``u_dev`` equal ``u``. Each per-sample noise draw is
    isotropic with total variance ``noise_sigma_sq``.
    """

    A: np.ndarray
    u: np.ndarray
    u_dev: np.ndarray
    weights: np.ndarray
    noise_sigma_sq: float
    kind: str = field(default="quadratic", init=False)

    def __post_init__(self) -> None:
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
            raise ValueError("A must be a symmetric square matrix")
        eig = np.linalg.eigvalsh(A)
        if eig[0] <= 0:
            raise ValueError("A must be positive definite")
        if self.noise_sigma_sq < 0:
            raise ValueError("noise variance must be non-negative")
        object.__setattr__(self, "_w_star", np.linalg.solve(A, self.u))
        object.__setattr__(self, "_L", float(eig[-1]))

    @classmethod
    def make(
        cls,
        d: int,
        M: int,
        seed: int,
        noise_sigma_sq: float = 1.0,
        L: float = 1.0,
        mu: float = 0.1,
        identical: bool = True,
        weights: Sequence[float] | None = None,
        heterogeneity: float = 1.0,
    ) -> QuadraticTask:
        """Random task with eigenvalues spread evenly over ``[mu, L]``."""
        rng = np.random.default_rng([2, seed])
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        eig = np.linspace(mu, L, d) if d > 1 else np.array([L])
        A = (q * eig) @ q.T
        A = 0.5 * (A + A.T)
        u = rng.standard_normal(d)
        w = np.full(M, 1.0 / M) if weights is None else np.asarray(weights, dtype=float) / np.sum(weights)
        if identical:
            u_dev = np.tile(u, (M, 1))
        else:
            shift = heterogeneity * rng.standard_normal((M, d))
            shift -= w @ shift
            u_dev = u + shift
        return cls(A=A, u=u, u_dev=u_dev, weights=w, noise_sigma_sq=noise_sigma_sq)

    @property
    def d(self) -> int:
        return self.u.shape[0]

    @property
    def M(self) -> int:
        return self.u_dev.shape[0]

    @property
    def identical(self) -> bool:
        return bool(np.all(self.u_dev == self.u))

    @property
    def w_star(self) -> np.ndarray:
        return self._w_star

    @property
    def L(self) -> float:
        return self._L

    @property
    def f_star(self) -> float:
        return self.loss(self._w_star)

    def loss(self, w: np.ndarray) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            return float(0.5 * w @ self.A @ w - self.u @ w)

    def gradient(self, w: np.ndarray, device: int) -> np.ndarray:
        return self.A @ w - self.u_dev[device]


@dataclass(frozen=True)
class LogisticTask:
    """Binary logistic regression on synthetic per-device samples.

    The minimizer is not known in closed form, so optimality gaps are
    reported as NaN and bound checks are unsupported.
    """

    X: tuple[np.ndarray, ...]
    y: tuple[np.ndarray, ...]
    identical: bool
    kind: str = field(default="logistic", init=False)

    def __post_init__(self) -> None:
        if len(self.X) != len(self.y) or not self.X:
            raise ValueError("need one (X, y) pair per device")
        for X, y in zip(self.X, self.y):
            if len(X) == 0:
                raise ValueError("empty device dataset")
            if len(X) != len(y) or not np.isin(y, (0, 1)).all():
                raise ValueError("labels must be in {0, 1} and match samples")

    @classmethod
    def make(cls, d: int, sizes: Sequence[int], seed: int, identical: bool = False) -> LogisticTask:
        rng = np.random.default_rng([3, seed])
        w_true = rng.standard_normal(d)

        def draw(n: int) -> tuple[np.ndarray, np.ndarray]:
            X = rng.standard_normal((n, d))
            p = 1.0 / (1.0 + np.exp(-X @ w_true))
            return X, (rng.random(n) < p).astype(float)

        if identical:
            X, y = draw(int(sizes[0]))
            return cls(X=tuple(X for _ in sizes), y=tuple(y for _ in sizes), identical=True)
        pairs = [draw(int(n)) for n in sizes]
        return cls(X=tuple(p[0] for p in pairs), y=tuple(p[1] for p in pairs), identical=False)

    @property
    def d(self) -> int:
        return self.X[0].shape[1]

    @property
    def M(self) -> int:
        return len(self.X)

    @property
    def weights(self) -> np.ndarray:
        n = np.array([len(y) for y in self.y], dtype=float)
        return n / n.sum()

    @property
    def w_star(self) -> None:
        return None

    @property
    def L(self) -> float:
        return max(float(np.linalg.eigvalsh(X.T @ X / len(X))[-1]) / 4.0 for X in self.X)

    @property
    def f_star(self) -> float:
        return math.nan

    def device_loss(self, w: np.ndarray, device: int) -> float:
        z = self.X[device] @ w
        return float(np.mean(np.logaddexp(0.0, z) - self.y[device] * z))

    def loss(self, w: np.ndarray) -> float:
        return float(sum(p * self.device_loss(w, m) for m, p in enumerate(self.weights)))

    def gradient(self, w: np.ndarray, device: int, idx: np.ndarray | None = None) -> np.ndarray:
        X, y = self.X[device], self.y[device]
        if idx is not None:
            X, y = X[idx], y[idx]
        p = 0.5 * (1.0 + np.tanh(0.5 * (X @ w)))
        return X.T @ (p - y) / len(y)


SyntheticTask = QuadraticTask | LogisticTask


# ----------------------------------------------------------------- primitives


def sample_stochastic_gradient(
    task: SyntheticTask, device: int, w: np.ndarray, b: int, rng: np.random.Generator
) -> np.ndarray:
    """Mini-batch stochastic gradient of device ``device`` at ``w``.

    For the quadratic task the mean of ``b`` isotropic noise draws is
    sampled directly as one Gaussian with per-coordinate variance
    ``sigma^2 / (b d)``, which is the same distribution. Logistic batches
    are drawn uniformly with replacement.
    """
    if b < 1:
        raise DomainError(f"batch size must be >= 1, got {b!r}")
    if isinstance(task, QuadraticTask):
        g = task.A @ w - task.u_dev[device]
        if task.noise_sigma_sq > 0:
            d = w.shape[0]
            g += rng.standard_normal(d) * math.sqrt(task.noise_sigma_sq / (b * d))
        return g
    n = len(task.y[device])
    if n == 0:
        raise UnsupportedTaskError("empty device dataset")
    return task.gradient(w, device, rng.integers(0, n, size=b))


def local_sgd(
    task: SyntheticTask,
    device: int,
    w_in: np.ndarray,
    V: int,
    b: int,
    eta: float,
    rng: np.random.Generator,
    round_index: int | None = None,
    return_path: bool = False,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Run ``V`` SGD steps on one device.

    With ``return_path`` the iterates after each step are also returned as a
    ``(V, d)`` array.

    Raises:
        SimulationDiverged: an iterate has a non-finite entry.
    """
    if V < 1:
        raise DomainError("V must be at least 1")
    w = np.array(w_in, dtype=float)
    path = np.empty((V, w.shape[0])) if return_path else None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(V):
            w = w - eta * sample_stochastic_gradient(task, device, w, b, rng)
            if path is not None:
                path[k] = w
    # Non-finite values persist through later steps, so one check suffices.
    if not np.all(np.isfinite(w)):
        where = f" in round {round_index}" if round_index is not None else ""
        raise SimulationDiverged(f"device {device} diverged{where}", round_index)
    if return_path:
        return w, path
    return w


def aggregate(states: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Dataset-size weighted average ``sum_m (D_m / D) w_m``."""
    if len(states) == 0:
        raise ValueError("nothing to aggregate")
    if len(states) != len(weights):
        raise ValueError("one weight per state is required")
    shape = np.shape(states[0])
    if any(np.shape(s) != shape for s in states):
        raise ValueError("state dimensions differ")
    first = np.asarray(states[0], dtype=float)
    if all(np.array_equal(s, first) for s in states[1:]):
        return first.copy()  # exact: averaging identical states is the identity
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    out = np.zeros(shape)
    for p, s in zip(w, states):  # fixed order keeps the reduction deterministic
        out = out + p * np.asarray(s, dtype=float)
    return out


def _device_mean(paths: np.ndarray) -> np.ndarray:
    if all(np.array_equal(p, paths[0]) for p in paths[1:]):
        return paths[0]
    return paths.mean(axis=0)


# ----------------------------------------------------------------- simulation


@dataclass(frozen=True)
class SimConfig:
    """One simulation run.

    ``eta=None`` selects the step size ``sqrt(M) / (4 L sqrt(K))`` under
    which the convergence bound holds, with ``K = H * V``. ``stop_gap`` ends the run once the global model's
    optimality gap reaches it; ``max_wall_clock`` ends it once the clock
    passes that many seconds.
    """

    fleet: Fleet
    V: int
    H: int
    b: int
    seed: int = 0
    eta: float | None = None
    identical_data: bool = True
    threads: int | None = None
    stop_gap: float | None = None
    max_wall_clock: float | None = None

    def __post_init__(self) -> None:
        if self.V < 1 or self.H < 1:
            raise DomainError("V and H must be at least 1")
        if self.b < 1:
            raise DomainError("batch size must be at least 1")
        if self.eta is not None and not self.eta > 0:
            raise DomainError("eta must be positive")

    @property
    def M(self) -> int:
        return len(self.fleet)

    @property
    def K(self) -> int:
        return self.H * self.V

    def step_size(self, task: SyntheticTask) -> float:
        if self.eta is not None:
            return self.eta
        return stepsize(task.L, self.M, self.K)

    def round_seconds(self) -> float:
        return round_time(fleet_comm_time(self.fleet), self.V, fleet_compute_time(self.fleet, self.b))


@dataclass(frozen=True)
class RoundRecord:
    round: int
    wall_clock_s: float
    global_loss: float
    opt_gap: float


@dataclass
class SimTrace:
    """Per-round records plus the final averaged model.

    ``opt_gap`` is the gap of the running average of per-step global
    averages; ``global_loss`` is the loss of the aggregated model.
    """

    rows: list[RoundRecord] = field(default_factory=list)
    w_final: np.ndarray | None = None
    w_bar: np.ndarray | None = None
    w0: np.ndarray | None = None
    f_star: float = math.nan
    stopped_early: bool = False

    def __iter__(self) -> Iterator[RoundRecord]:
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def final_gap(self) -> float:
        return self.rows[-1].opt_gap if self.rows else math.nan

    @property
    def overall_time(self) -> float:
        return self.rows[-1].wall_clock_s if self.rows else 0.0

    def global_gaps(self) -> np.ndarray:
        return np.array([r.global_loss - self.f_star for r in self.rows])


def _check_task(task: SyntheticTask, cfg: SimConfig) -> None:
    if task.M != cfg.M:
        raise DomainError(f"task has {task.M} devices but fleet has {cfg.M}")
    if cfg.identical_data and not task.identical:
        raise DomainError("identical_data requested but task data differ across devices")


def run_defl(task: SyntheticTask, cfg: SimConfig, on_round=None) -> SimTrace:
    """Simulate ``cfg.H`` synchronous rounds of local SGD with averaging.

    ``on_round`` is called with each :class:`RoundRecord` as soon as it is
    produced, which lets callers stream output before a later divergence.

    Raises:
        SimulationDiverged: carries the failing round number.
    """
    _check_task(task, cfg)
    eta = cfg.step_size(task)
    dt = cfg.round_seconds()
    M, V = cfg.M, cfg.V
    weights = np.array([d.samples for d in cfg.fleet.devices], dtype=float)
    w = initial_model(cfg.seed, task.d)
    w_sum = np.zeros(task.d)
    f_star = task.f_star
    trace = SimTrace(w0=w.copy(), f_star=f_star)
    threads = cfg.threads if cfg.threads is not None else default_threads()
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 and M > 1 else None

    def work(m: int, h: int, w_start: np.ndarray):
        return local_sgd(task, m, w_start, V, cfg.b, eta, device_rng(cfg.seed, m, h), round_index=h, return_path=True)

    try:
        for h in range(1, cfg.H + 1):
            if pool is not None:
                results = list(pool.map(lambda m: work(m, h, w), range(M)))
            else:
                results = [work(m, h, w) for m in range(M)]
            finals = [r[0] for r in results]
            paths = np.stack([r[1] for r in results])  # (M, V, d)
            step_means = _device_mean(paths)  # per-step across-device average
            w_sum = w_sum + step_means.sum(axis=0)
            w = aggregate(finals, weights)
            w_bar = w_sum / (h * V)
            rec = RoundRecord(
                round=h,
                wall_clock_s=h * dt,
                global_loss=task.loss(w),
                opt_gap=task.loss(w_bar) - f_star,
            )
            trace.rows.append(rec)
            if on_round is not None:
                on_round(rec)
            if cfg.stop_gap is not None and rec.global_loss - f_star <= cfg.stop_gap:
                trace.stopped_early = h < cfg.H
                break
            if cfg.max_wall_clock is not None and rec.wall_clock_s >= cfg.max_wall_clock:
                trace.stopped_early = h < cfg.H
                break
    finally:
        if pool is not None:
            pool.shutdown()
    trace.w_final = w
    trace.w_bar = w_sum / (len(trace.rows) * V) if trace.rows else w.copy()
    return trace


def time_to_target(task: SyntheticTask, cfg: SimConfig, target_gap: float, horizon: float | None = None) -> float:
    """Simulated seconds until the global model's gap first reaches ``target_gap``.

    Runs at most ``cfg.H`` rounds and stops past ``horizon`` seconds;
    returns ``inf`` when the target is not reached.
    """
    if isinstance(task, LogisticTask):
        raise UnsupportedTaskError("time to target needs a task with known minimizer")
    run = SimConfig(
        fleet=cfg.fleet, V=cfg.V, H=cfg.H, b=cfg.b, seed=cfg.seed, eta=cfg.eta,
        identical_data=cfg.identical_data, threads=cfg.threads,
        stop_gap=target_gap, max_wall_clock=horizon,
    )
    trace = run_defl(task, run)
    last = trace.rows[-1]
    if last.global_loss - trace.f_star <= target_gap:
        return last.wall_clock_s
    return math.inf


@dataclass(frozen=True)
class BoundReport:
    mean_gap: float
    bound: float
    passed: bool
    gaps: tuple[float, ...]
    stderr: float
    params: ConvergenceParams


def bound_check(task: SyntheticTask, cfg: SimConfig, n_seeds: int) -> BoundReport:
    """Compare the seed-averaged gap of the averaged iterate with the theoretical bound.

    Seeds ``cfg.seed, cfg.seed + 1, ...`` each draw their own ``w_0``; the
    bound is evaluated at the mean squared initial distance, which equals the
    mean of per-seed bounds because the bound is affine in it.
    """
    if not isinstance(task, QuadraticTask):
        raise UnsupportedTaskError("bound checks need a quadratic task with known minimizer")
    if not (cfg.identical_data and task.identical):
        raise UnsupportedTaskError("bound checks require identical data on every device")
    if cfg.K < cfg.M:
        raise DomainError(f"bound requires K >= M (K={cfg.K}, M={cfg.M})")
    bound_eta = stepsize(task.L, cfg.M, cfg.K)
    if cfg.eta is not None and not math.isclose(cfg.eta, bound_eta, rel_tol=1e-12):
        raise DomainError("bound checks use the bound step size sqrt(M) / (4 L sqrt(K)); leave eta unset")
    gaps, dists = [], []
    for i in range(n_seeds):
        run = SimConfig(
            fleet=cfg.fleet, V=cfg.V, H=cfg.H, b=cfg.b, seed=cfg.seed + i,
            identical_data=True, threads=cfg.threads,
        )
        trace = run_defl(task, run)
        gaps.append(task.loss(trace.w_bar) - trace.f_star)
        dists.append(float(np.sum((trace.w0 - task.w_star) ** 2)))
    params = ConvergenceParams(
        L=task.L, sigma_sq=task.noise_sigma_sq, dist0_sq=float(np.mean(dists)),
        M=cfg.M, K=cfg.K, V=cfg.V, b=cfg.b,
    )
    bound = convergence_bound(params)
    mean_gap = float(np.mean(gaps))
    stderr = float(np.std(gaps, ddof=1) / math.sqrt(n_seeds)) if n_seeds > 1 else 0.0
    return BoundReport(mean_gap, bound, mean_gap <= bound, tuple(gaps), stderr, params)
