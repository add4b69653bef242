"""Jacobi-preconditioned conjugate gradients and the quasi-static load ramp."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from thoraxfem.assembly import SparseSystem
from thoraxfem.errors import ConfigurationError, SolverError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-8
    max_iterations: int | None = None
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if not 0.0 < self.tolerance < 1.0:
            raise ConfigurationError(f"solver tolerance must lie in (0, 1), got {self.tolerance}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.preconditioner not in ("none", "jacobi"):
            raise ConfigurationError(f"unknown preconditioner {self.preconditioner!r}")

    def iteration_limit(self, n_dof: int) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return max(1000, int(20 * math.sqrt(n_dof)))


@dataclass
class CGStats:
    iterations: int
    residual: float
    """Final relative residual ``||K u - f|| / ||f||``."""
    history: list[float] = field(default_factory=list)
    converged: bool = True


def _threaded_matvec(K: sp.csr_matrix, threads: int) -> Callable[[NDArray], NDArray]:
    if threads <= 1:
        return K.__matmul__
    bounds = np.linspace(0, K.shape[0], threads + 1).astype(int)
    blocks = [K[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    pool = ThreadPoolExecutor(max_workers=threads)

    def matvec(x):
        return np.concatenate(list(pool.map(lambda blk: blk @ x, blocks)))

    return matvec


def cg_solve(
    K: sp.spmatrix,
    f: NDArray[np.float64],
    settings: SolverSettings = SolverSettings(),
    x0: NDArray[np.float64] | None = None,
    threads: int = 1,
) -> tuple[NDArray[np.float64], CGStats]:
    """Solve ``K u = f`` for symmetric positive definite ``K``.

    Stops when the true residual satisfies ``||K u - f|| <= tol * ||f||``.
    The recurrence residual drives the iteration; once it passes the
    threshold the true residual is recomputed and the iteration resumes from
    it if rounding has let the two drift apart.

    Raises:
        SolverError: no convergence within the iteration limit; ``x`` holds
            the last iterate.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    fnorm = float(np.linalg.norm(f))
    if fnorm == 0.0:
        return np.zeros(n), CGStats(0, 0.0, [0.0])
    matvec = _threaded_matvec(K.tocsr(), threads) if threads > 1 else (lambda v: K @ v)
    if settings.preconditioner == "jacobi":
        diag = K.diagonal()
        if np.any(diag <= 0):
            raise SolverError("non-positive diagonal entry; matrix is not SPD")
        inv_diag = 1.0 / diag
    else:
        inv_diag = None

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = f - matvec(x) if x0 is not None else f.copy()
    target = settings.tolerance * fnorm
    limit = settings.iteration_limit(n)
    history = [float(np.linalg.norm(r)) / fnorm]
    if history[0] <= settings.tolerance:
        return x, CGStats(0, history[0], history)

    z = r * inv_diag if inv_diag is not None else r
    p = z.copy()
    rz = float(r @ z)
    it = 0
    while it < limit:
        Ap = matvec(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise SolverError("matrix is not positive definite (p'Kp <= 0)", x=x, residual=history[-1])
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        rnorm = float(np.linalg.norm(r))
        history.append(rnorm / fnorm)
        if rnorm <= target:
            r = f - matvec(x)
            rnorm = float(np.linalg.norm(r))
            history[-1] = rnorm / fnorm
            if rnorm <= target:
                return x, CGStats(it, rnorm / fnorm, history)
            z = r * inv_diag if inv_diag is not None else r
            p = z.copy()
            rz = float(r @ z)
            continue
        z = r * inv_diag if inv_diag is not None else r
        rz_new = float(r @ z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    raise SolverError(
        f"CG did not converge in {limit} iterations (relative residual {history[-1]:.3e})",
        x=x,
        residual=history[-1],
    )


@dataclass(frozen=True)
class TimeSchedule:
    """Linear load ramp ``alpha(t) = t / t_end`` sampled every ``dt``."""

    t_end: float = 0.5
    dt: float = 0.05
    ramp: str = "linear"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.t_end < self.dt:
            raise ConfigurationError("t_end must be >= dt")
        if self.ramp != "linear":
            raise ConfigurationError(f"unsupported ramp {self.ramp!r}")
        q = self.t_end / self.dt
        if abs(q - round(q)) > 0.5 * math.ulp(q):
            raise ConfigurationError(f"t_end / dt = {q!r} is not an integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def steps(self) -> list[tuple[int, float, float]]:
        """``(k, t_k, alpha_k)`` for ``k = 1..N``."""
        n = self.n_steps
        return [(k, k * self.dt, k / n) for k in range(1, n + 1)]


@dataclass
class StepResult:
    step: int
    time: float
    load_factor: float
    displacement: NDArray[np.float64]
    """``(n_nodes, 3)`` nodal displacement in meters."""
    iterations: int
    residual: float
    residual_history: list[float] = field(default_factory=list, repr=False)


@dataclass
class RunResults:
    steps: list[StepResult]
    system: SparseSystem

    def step(self, k: int) -> StepResult:
        for s in self.steps:
            if s.step == k:
                return s
        raise IndexError(f"no step {k}; run has steps 1..{len(self.steps)}")

    @property
    def final(self) -> StepResult:
        return self.steps[-1]


def run_time_loop(
    system: SparseSystem,
    schedule: TimeSchedule = TimeSchedule(),
    settings: SolverSettings = SolverSettings(),
    warm_start: bool = True,
    threads: int = 1,
    on_step: Callable[[StepResult], None] | None = None,
) -> RunResults:
    """Solve ``K u_k = alpha_k f`` for every step of the ramp.

    Each solve starts from the previous step's free displacement. Prescribed
    displacements ramp with the same factor as the loads.
    """
    results: list[StepResult] = []
    u_prev = np.zeros(system.n_free)
    for k, t, alpha in schedule.steps():
        rhs = system.rhs(alpha)
        x0 = u_prev if warm_start and k > 1 else None
        try:
            if system.n_free:
                u_free, stats = cg_solve(system.K_ff, rhs, settings, x0=x0, threads=threads)
            else:
                u_free, stats = np.zeros(0), CGStats(0, 0.0, [0.0])
        except SolverError as exc:
            raise SolverError(f"step {k} (t={t:g} s): {exc}", x=exc.x, residual=exc.residual, step=k) from None
        u = system.expand(u_free, alpha).reshape(-1, 3)
        res = StepResult(k, t, alpha, u, stats.iterations, stats.residual, stats.history)
        log.info("step %d t=%.4g alpha=%.3g iterations=%d residual=%.3e", k, t, alpha, stats.iterations, stats.residual)
        if on_step is not None:
            on_step(res)
        results.append(res)
        u_prev = u_free
    return RunResults(results, system)
