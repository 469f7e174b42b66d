"""Nash equilibrium computation for original and perturbed LQ games, iterative
solvers for opaque monotone games, and the accuracy bounds relating the two
equilibria."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .game import LQGame, MonotoneGameOracle
from .llqfp import PerturbationDraw, PerturbedLQGame, perturb
from .network import Network

# a solution counts as interior when strictly inside the box by this margin
_INTERIOR_MARGIN = 1e-9


@dataclass(frozen=True)
class EquilibriumResult:
    """Solver outcome.

    ``residual`` is the infinity norm of the pseudo-gradient for closed-form
    solves and of the unit-step projection mismatch x - clip(x + phi(x)) for
    iterative ones; the two coincide at interior solutions.  ``converged`` is
    always true for closed-form solves.
    """

    x_star: np.ndarray
    method: str
    iterations: int
    residual: float
    interior: bool
    converged: bool = True
    residual_monotone: bool | None = None


def _interior(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> bool:
    return bool(np.all(x > lo + _INTERIOR_MARGIN) & np.all(x < hi - _INTERIOR_MARGIN))


def _linear_parts(game) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Affine pseudo-gradient decomposition phi(x) = c - A x plus the box."""
    if isinstance(game, PerturbedLQGame):
        return game.jacobian, game.intercept, game.box_lo, game.box_hi
    if isinstance(game, LQGame):
        return np.eye(game.n) - game.net.weights, game.b, game.box_lo, game.box_hi
    raise TypeError(f"expected an LQ or perturbed LQ game, got {type(game).__name__}")


def _solve_affine(matrix: np.ndarray, rhs: np.ndarray, lo, hi) -> EquilibriumResult:
    try:
        x = np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"equilibrium system is singular: {exc}") from exc
    residual = float(np.max(np.abs(rhs - matrix @ x)))
    return EquilibriumResult(x_star=x, method="closed_form", iterations=0,
                             residual=residual, interior=_interior(x, lo, hi))


def solve_lq_ne(g: LQGame) -> EquilibriumResult:
    """Dense solve of (I - G)x = b; non-interior solutions are flagged, not
    projected."""
    matrix, rhs, lo, hi = _linear_parts(g)
    return _solve_affine(matrix, rhs, lo, hi)


def solve_perturbed_lq_ne(g: LQGame, drw: PerturbationDraw,
                          transpose: bool = True) -> EquilibriumResult:
    """Dense solve of the perturbed stationarity system.

    The default solves (I - G + D^T)x = b - beta, the form consistent with the
    perturbed pseudo-gradient.  ``transpose=False`` solves with D in place of
    D^T; both variants exist so their gap can be reported, and they coincide
    exactly when the draw happens to be symmetric.
    """
    pg = perturb(g, drw)
    if transpose:
        matrix = pg.jacobian
    else:
        matrix = np.eye(g.n) - g.net.weights + drw.d
    return _solve_affine(matrix, pg.intercept, g.box_lo, g.box_hi)


def _oracle_parts(game):
    if isinstance(game, MonotoneGameOracle):
        return game.n, game.pseudo_gradient, game.box_lo, game.box_hi
    matrix, rhs, lo, hi = _linear_parts(game)
    return matrix.shape[0], (lambda x: rhs - matrix @ x), lo, hi


def projected_gradient_ne(game, step: float, tol: float, max_iter: int,
                          x0=None) -> EquilibriumResult:
    """Projected pseudo-gradient ascent x <- clip(x + step * phi(x)).

    Stops once the iterate moves by at most step*tol (a movement threshold
    scaled so the gradient norm at stop is about tol), or after ``max_iter``
    updates.  A zero step never meets the threshold and is reported
    non-convergent rather than rejected.
    """
    if step < 0:
        raise ValueError(f"step must be nonnegative, got {step}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    _, phi, lo, hi = _oracle_parts(game)
    x = 0.5 * (lo + hi) if x0 is None else np.clip(np.asarray(x0, dtype=float), lo, hi)

    def natural_residual(point, grad):
        return float(np.max(np.abs(point - np.clip(point + grad, lo, hi))))

    converged = False
    monotone = True
    iterations = 0
    grad = np.asarray(phi(x))
    prev_res = natural_residual(x, grad)
    for iterations in range(1, max_iter + 1):
        x_new = np.clip(x + step * grad, lo, hi)
        moved = float(np.linalg.norm(x_new - x))
        x = x_new
        grad = np.asarray(phi(x))
        res = natural_residual(x, grad)
        # diagnostic only: under a valid step bound the residual should shrink
        if res > prev_res + 1e-12:
            monotone = False
        prev_res = res
        if step > 0 and moved <= step * tol:
            converged = True
            break
    return EquilibriumResult(x_star=x, method="projected_gradient", iterations=iterations,
                             residual=prev_res, interior=_interior(x, lo, hi),
                             converged=converged, residual_monotone=monotone)


def best_response_dynamics(game, x0, rounds: int) -> np.ndarray:
    """Synchronous best-response updates; returns the whole trajectory.

    Row t is the profile after t rounds (row 0 is the start).  Each player
    maximizes her own strictly concave payoff against the previous profile,
    clipped to the box.
    """
    if rounds < 0:
        raise ValueError(f"rounds must be >= 0, got {rounds}")
    matrix, rhs, lo, hi = _linear_parts(game)
    diag = np.diag(matrix).copy()
    off = matrix - np.diag(diag)
    traj = np.empty((rounds + 1, matrix.shape[0]))
    traj[0] = np.asarray(x0, dtype=float)
    for t in range(1, rounds + 1):
        traj[t] = np.clip((rhs - off @ traj[t - 1]) / diag, lo, hi)
    return traj


def gamma_realized(drw: PerturbationDraw, x_star, l_m: float,
                   matrix_norm: str = "spectral") -> float:
    """Per-draw accuracy radius (||beta|| + ||D|| * ||x*||) / l_m.

    The matrix norm defaults to spectral, the tightest standard operator norm
    for which the bound's derivation goes through; ``frobenius`` is available
    for comparison and is never smaller.
    """
    if l_m <= 0:
        raise ValueError(f"monotonicity modulus must be positive, got {l_m}")
    x = np.asarray(x_star, dtype=float)
    if matrix_norm == "spectral":
        d_norm = float(np.linalg.norm(drw.d, 2))
    elif matrix_norm == "frobenius":
        d_norm = float(np.linalg.norm(drw.d, "fro"))
    else:
        raise ValueError(f"unknown matrix norm {matrix_norm!r}")
    return (float(np.linalg.norm(drw.beta)) + d_norm * float(np.linalg.norm(x))) / l_m


def gamma_worst_case(net: Network, a: float, x_star_norm: float, l_m: float,
                     tight: bool = False) -> float:
    """A-priori accuracy radius from the truncation bound alone.

    Default evaluates (sqrt(n)*a + sqrt(sum_i(4k_i^2 + 5k_i + 4))*a*||x*||)/l_m
    with k_i the neighbor counts.  ``tight=True`` replaces 4k_i^2 by k_i^2,
    the sharper elementwise bound on the derived matrix columns; the default
    keeps the looser constant so reported radii stay conservative, and it
    always dominates the tight variant.
    """
    if l_m <= 0:
        raise ValueError(f"monotonicity modulus must be positive, got {l_m}")
    if a < 0:
        raise ValueError(f"truncation bound must be nonnegative, got {a}")
    degs = np.array([len(order) for order in net.neighbor_order], dtype=float)
    lead = 4.0 if not tight else 1.0
    col_sq = float(np.sum(lead * degs**2 + 5.0 * degs + 4.0))
    return (math.sqrt(net.n) * a + math.sqrt(col_sq) * a * x_star_norm) / l_m


def accuracy_check(x_star, x_hat, gamma: float) -> bool:
    """True iff the two equilibria are within Euclidean distance gamma."""
    xs = np.asarray(x_star, dtype=float)
    xh = np.asarray(x_hat, dtype=float)
    if xs.shape != xh.shape:
        raise ValueError(f"shape mismatch: {xs.shape} vs {xh.shape}")
    return bool(np.linalg.norm(xs - xh) <= gamma)
