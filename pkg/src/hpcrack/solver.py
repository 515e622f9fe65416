"""Damped Newton iteration with backtracking line search.

Each outer step assembles the condensed Jacobian and residual, solves
the symmetric sparse system directly (LU with iterative refinement) and
backtracks the step length rho over {1, 1/2, 1/4, ...} until the
sufficient-decrease test

    ||residual(phi + rho*delta)|| < (1 - gamma*rho) * ||residual(phi)||

holds.  Accepted residual norms are strictly decreasing; a step that
cannot decrease the residual aborts the iteration with the log attached.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_jacobian, assemble_residual
from .constitutive import ModelParams
from .hp_space import HpSpace


class LinearSolveError(RuntimeError):
    """Direct solve failed to reach the residual contract."""

    def __init__(self, achieved: float, target: float):
        super().__init__(f"linear solve residual {achieved:.3e} above target {target:.3e}")
        self.achieved = achieved
        self.target = target


class NewtonError(RuntimeError):
    """Newton iteration failed; carries the log collected so far."""

    def __init__(self, message: str, log: "NewtonLog"):
        super().__init__(message)
        self.log = log


@dataclass(frozen=True)
class NewtonConfig:
    tol_newton: float = 1e-10
    max_iters: int = 25
    gamma: float = 1e-4          # sufficient-decrease constant in (0, 1)
    rho_min: float = 2.0 ** -10

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if not (0.0 < self.rho_min <= 1.0):
            raise ValueError("rho_min must lie in (0, 1]")


@dataclass
class NewtonStep:
    iteration: int
    residual_norm: float
    rho: float
    sufficient: bool
    linear_refinements: int


@dataclass
class NewtonLog:
    initial_residual: float
    steps: list[NewtonStep] = field(default_factory=list)
    converged: bool = False

    @property
    def n_iterations(self) -> int:
        return len(self.steps)

    @property
    def residual_history(self) -> list[float]:
        return [self.initial_residual] + [s.residual_norm for s in self.steps]


def _solve_info(A, b: np.ndarray) -> tuple[np.ndarray, int]:
    """Direct solve with iterative refinement down to 1e-12 * max(1, ||b||)."""
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    try:
        lu = spla.splu(A)
    except RuntimeError as err:  # singular factorization
        raise LinearSolveError(np.inf, 1e-12 * max(1.0, float(np.linalg.norm(b)))) from err
    x = lu.solve(b)
    target = 1e-12 * max(1.0, float(np.linalg.norm(b)))
    achieved = float(np.linalg.norm(b - A @ x))
    for k in range(6):
        if achieved <= target:
            return x, k
        x = x + lu.solve(b - A @ x)
        achieved = float(np.linalg.norm(b - A @ x))
    raise LinearSolveError(achieved, target)


def solve_linear(A, b: np.ndarray) -> np.ndarray:
    """Solve the symmetric sparse system to ||Ax - b|| <= 1e-12 * max(1, ||b||)."""
    return _solve_info(A, b)[0]


@dataclass
class LineSearchResult:
    rho: float
    phi: np.ndarray
    residual: np.ndarray
    residual_norm: float
    sufficient: bool


def line_search(space: HpSpace, params: ModelParams, phi: np.ndarray,
                delta: np.ndarray, gamma: float = 1e-4,
                rho_min: float = 2.0 ** -10,
                base_norm: float | None = None) -> LineSearchResult:
    """First rho in {1, 1/2, ...} passing the sufficient-decrease test.

    If no trial qualifies, returns the trial with the smallest residual
    norm flagged as insufficient; the caller decides whether to accept.
    """
    if base_norm is None:
        base_norm = float(np.linalg.norm(assemble_residual(space, params, phi)))
    best: LineSearchResult | None = None
    rho = 1.0
    while rho >= rho_min * (1.0 - 1e-12):
        trial = space.constraints.distribute(phi + rho * delta)
        res = assemble_residual(space, params, trial)
        rn = float(np.linalg.norm(res))
        if rn < (1.0 - gamma * rho) * base_norm:
            return LineSearchResult(rho, trial, res, rn, True)
        if best is None or rn < best.residual_norm:
            best = LineSearchResult(rho, trial, res, rn, False)
        rho *= 0.5
    return best


def newton_solve(space: HpSpace, params: ModelParams, phi0: np.ndarray,
                 config: NewtonConfig | None = None) -> tuple[np.ndarray, NewtonLog]:
    """Iterate assemble -> solve -> line search until the condensed
    residual norm drops below tol_newton.

    phi0 must satisfy the Dirichlet constraints; every iterate is kept
    constraint-consistent.  Raises NewtonError (log attached) when the
    iteration stalls or the budget runs out.
    """
    if config is None:
        config = NewtonConfig()
    phi = space.constraints.distribute(np.asarray(phi0, dtype=float))
    res = assemble_residual(space, params, phi)
    rn = float(np.linalg.norm(res))
    log = NewtonLog(initial_residual=rn)
    if rn < config.tol_newton:
        log.converged = True
        return phi, log

    for it in range(1, config.max_iters + 1):
        A = assemble_jacobian(space, params, phi)
        delta, nref = _solve_info(A, res)
        ls = line_search(space, params, phi, delta,
                         gamma=config.gamma, rho_min=config.rho_min, base_norm=rn)
        if ls.residual_norm >= rn:
            log.steps.append(NewtonStep(it, ls.residual_norm, ls.rho, False, nref))
            raise NewtonError(
                f"line search stalled at iteration {it} "
                f"(residual {ls.residual_norm:.3e} from {rn:.3e})", log)
        phi, res, rn = ls.phi, ls.residual, ls.residual_norm
        log.steps.append(NewtonStep(it, rn, ls.rho, ls.sufficient, nref))
        if rn < config.tol_newton:
            log.converged = True
            return phi, log

    raise NewtonError(f"no convergence in {config.max_iters} iterations "
                      f"(residual {rn:.3e})", log)
