"""Linear-quadratic network games and a generic strongly monotone game interface.

A player's payoff is -x_i^2/2 + b_i*x_i + x_i * sum_j g_ij x_j, so the
pseudo-gradient is affine: phi(x) = b - (I - G)x.  Strong monotonicity of phi
with a positive modulus is required at construction because everything
downstream (unique equilibria, accuracy bounds) depends on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .network import Network


def _modulus(weights: np.ndarray) -> float:
    """Smallest eigenvalue of I - (G + G^T)/2; positive iff the LQ
    pseudo-gradient is strongly monotone."""
    n = weights.shape[0]
    sym = np.eye(n) - 0.5 * (weights + weights.T)
    return float(np.min(np.linalg.eigvalsh(sym)))


def _as_box(lo, hi, n: int) -> tuple[np.ndarray, np.ndarray]:
    lo_arr = np.broadcast_to(np.asarray(lo, dtype=float), (n,)).copy()
    hi_arr = np.broadcast_to(np.asarray(hi, dtype=float), (n,)).copy()
    if not (np.all(np.isfinite(lo_arr)) and np.all(np.isfinite(hi_arr))):
        raise ValueError("action box bounds must be finite")
    if np.any(lo_arr >= hi_arr):
        raise ValueError("action box must satisfy lo < hi per player")
    lo_arr.setflags(write=False)
    hi_arr.setflags(write=False)
    return lo_arr, hi_arr


@dataclass(frozen=True)
class LQGame:
    """Network game with marginal benefits ``b`` and box action sets.

    ``action_box`` accepts scalars or per-player arrays; scalars broadcast.
    Construction rejects games whose pseudo-gradient is not strongly
    monotone and games with negative marginal benefit.
    """

    net: Network
    b: np.ndarray
    action_box: tuple

    def __post_init__(self) -> None:
        b = np.broadcast_to(np.asarray(self.b, dtype=float), (self.net.n,)).copy()
        if not np.all(np.isfinite(b)):
            raise ValueError("marginal benefits must be finite")
        if np.any(b < 0):
            raise ValueError(f"marginal benefits must be nonnegative, got min {b.min()}")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        if len(self.action_box) != 2:
            raise ValueError("action_box must be a (lo, hi) pair")
        box = _as_box(self.action_box[0], self.action_box[1], self.net.n)
        object.__setattr__(self, "action_box", box)
        m = _modulus(self.net.weights)
        if m <= 0:
            raise ValueError(
                f"game is not strongly monotone: modulus {m:.6g} <= 0 "
                "(largest interaction eigenvalue reaches 1)"
            )

    @property
    def n(self) -> int:
        return self.net.n

    @property
    def box_lo(self) -> np.ndarray:
        return self.action_box[0]

    @property
    def box_hi(self) -> np.ndarray:
        return self.action_box[1]


def _check_profile(g: LQGame, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (g.n,):
        raise ValueError(f"profile must have shape ({g.n},), got {arr.shape}")
    return arr


def _require_in_box(g: LQGame, arr: np.ndarray) -> None:
    if np.any(arr < g.box_lo) or np.any(arr > g.box_hi):
        raise ValueError("action profile lies outside the action box")


def payoff(g: LQGame, i: int, x) -> float:
    """Payoff of player i (1-based) at profile x.

    Raises:
        ValueError: if i is out of range or x leaves the action box.
    """
    if not 1 <= i <= g.n:
        raise ValueError(f"player index {i} out of range 1..{g.n}")
    arr = _check_profile(g, x)
    _require_in_box(g, arr)
    xi = arr[i - 1]
    return float(-0.5 * xi * xi + g.b[i - 1] * xi + xi * (g.net.weights[i - 1] @ arr))


def pseudo_gradient(g: LQGame, x) -> np.ndarray:
    """Stacked own-action payoff derivatives: b - (I - G)x."""
    arr = _check_profile(g, x)
    return g.b - arr + g.net.weights @ arr


def monotonicity_constant(g: LQGame) -> float:
    """Exact strong-monotonicity modulus of the LQ pseudo-gradient.

    Equals the smallest eigenvalue of I - (G + G^T)/2.  Always positive for
    constructed games; the raw formula can go nonpositive only for weight
    matrices the constructor rejects.
    """
    return _modulus(g.net.weights)


@dataclass(frozen=True)
class MonotoneGameOracle:
    """Opaque game seen only through its pseudo-gradient map.

    ``l_m`` is the claimed monotonicity modulus; ``check_monotone`` probes it
    statistically since nothing else is known about the map.
    """

    n: int
    pseudo_gradient: Callable[[np.ndarray], np.ndarray]
    l_m: float
    action_box: tuple

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("oracle needs at least one player")
        box = _as_box(self.action_box[0], self.action_box[1], self.n)
        object.__setattr__(self, "action_box", box)

    @property
    def box_lo(self) -> np.ndarray:
        return self.action_box[0]

    @property
    def box_hi(self) -> np.ndarray:
        return self.action_box[1]


def as_oracle(g: LQGame) -> MonotoneGameOracle:
    """Wrap an LQ game behind the oracle interface with its exact modulus."""
    return MonotoneGameOracle(
        n=g.n,
        pseudo_gradient=lambda x: pseudo_gradient(g, x),
        l_m=monotonicity_constant(g),
        action_box=(g.box_lo, g.box_hi),
    )


@dataclass(frozen=True)
class MonotonicityReport:
    passed: bool
    worst_ratio: float
    claimed: float
    trials: int
    degenerate: bool


def check_monotone(o: MonotoneGameOracle, trials: int, seed: int) -> MonotonicityReport:
    """Sample profile pairs and probe the dissipativity inequality.

    For each pair the ratio <phi(x) - phi(x'), x - x'> / (-||x - x'||^2) is a
    lower estimate of the modulus; the check passes iff the worst ratio stays
    above the claimed ``l_m`` minus a 1e-9 slack.  A zero-diameter box yields
    no usable pairs and is reported as a degenerate vacuous pass.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    lo, hi = o.box_lo, o.box_hi
    worst = math.inf
    usable = 0
    for _ in range(trials):
        x = rng.uniform(lo, hi)
        y = rng.uniform(lo, hi)
        diff = x - y
        sq = float(diff @ diff)
        if sq == 0.0:
            continue
        usable += 1
        inner = float((np.asarray(o.pseudo_gradient(x)) - np.asarray(o.pseudo_gradient(y))) @ diff)
        worst = min(worst, inner / -sq)
    degenerate = usable == 0
    passed = degenerate or worst >= o.l_m - 1e-9
    return MonotonicityReport(passed=passed, worst_ratio=worst, claimed=o.l_m,
                              trials=usable, degenerate=degenerate)
