"""The noise mechanism: per-player truncated-Laplace draws, the linear and
quadratic perturbation coefficients they induce, and the perturbed game.

Per player i with k neighbors the draw consumes k+2 noises in order: one per
neighbor (ascending neighbor index), one for the self-quadratic coefficient,
one for the linear offset.  The self coefficient is shifted to
q_ii = omega/2 + a(k+1)/2 so that the rows of the derived matrix are
diagonally dominant, which makes its symmetric part positive semidefinite on
undirected networks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game import LQGame, payoff, pseudo_gradient
from .network import Network
from .trunc_laplace import NoiseParams, inverse_cdf

_DRAW_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PerturbationDraw:
    """One mechanism realization: raw noises plus derived coefficients.

    ``omega[i]`` holds player i+1's noises in draw order; ``q`` the coefficient
    matrix (row i: self coefficient on the diagonal, neighbor coefficients on
    the neighbor columns, zero elsewhere); ``beta`` the linear offsets.  ``d``
    is derived: column i equals row i of ``q`` with the diagonal doubled.
    Validation runs eagerly; corrupted draws never construct.
    """

    omega: tuple
    q: np.ndarray
    beta: np.ndarray
    params: NoiseParams
    seed: int
    d: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        q = np.array(self.q, dtype=float)
        beta = np.array(self.beta, dtype=float)
        omega = tuple(np.array(w, dtype=float) for w in self.omega)
        n = q.shape[0]
        if q.shape != (n, n) or beta.shape != (n,) or len(omega) != n:
            raise ValueError("draw pieces have inconsistent shapes")
        a = self.params.a
        for i in range(n):
            if len(omega[i]) < 2:
                raise ValueError(f"player {i + 1} needs at least 2 noises")
            off_support = np.flatnonzero(q[i])
            off_support = off_support[off_support != i]
            if len(off_support) > len(omega[i]) - 2:
                raise ValueError(
                    f"player {i + 1} has more neighbor coefficients than neighbor noises"
                )
            if np.max(np.abs(omega[i])) > a + 1e-15:
                raise ValueError(f"player {i + 1} noise escapes [-a, a]")
            k = len(omega[i]) - 2
            diag = q[i, i]
            if not (a * k / 2 - 1e-12 <= diag <= a * (k + 2) / 2 + 1e-12):
                raise ValueError(
                    f"self coefficient {diag!r} of player {i + 1} outside "
                    f"[{a * k / 2!r}, {a * (k + 2) / 2!r}]"
                )
            off = np.abs(q[i]).sum() - abs(diag)
            # row dominance 2*q_ii >= sum of neighbor magnitudes, the PSD workhorse
            if 2 * diag < off - 1e-12:
                raise ValueError(f"row {i + 1} of the draw is not diagonally dominant")
        if np.max(np.abs(beta)) > a + 1e-15:
            raise ValueError("linear offset escapes [-a, a]")
        q.setflags(write=False)
        beta.setflags(write=False)
        for w in omega:
            w.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "beta", beta)
        d = q.T + np.diag(np.diag(q))
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def noise_count(self) -> int:
        return sum(len(w) for w in self.omega)


def draw(net: Network, p: NoiseParams, seed: int) -> PerturbationDraw:
    """Draw one mechanism realization on the given network.

    Each player consumes an independent substream spawned from the seed, so
    draws are reproducible regardless of evaluation order and player streams
    never overlap.
    """
    n = net.n
    children = np.random.SeedSequence(seed).spawn(n)
    q = np.zeros((n, n))
    beta = np.zeros(n)
    omega = []
    for i in range(n):
        nb = np.flatnonzero(net.weights[i])
        k = len(nb)
        rng = np.random.Generator(np.random.PCG64(children[i]))
        noises = np.asarray(inverse_cdf(rng.random(k + 2), p))
        q[i, nb] = noises[:k]
        q[i, i] = noises[k] / 2.0 + p.a * (k + 1) / 2.0
        beta[i] = noises[k + 1]
        omega.append(noises)
    return PerturbationDraw(omega=tuple(omega), q=q, beta=beta, params=p, seed=seed)


def d_matrix(drw: PerturbationDraw) -> np.ndarray:
    """Matrix whose column i is row i of the coefficient matrix with the
    diagonal entry doubled; its transpose shifts the pseudo-gradient."""
    return drw.q.T + np.diag(np.diag(drw.q))


def check_psd(matrix) -> float:
    """Smallest eigenvalue of the symmetric part (M + M^T)/2.

    The quadratic form x^T M x is nonnegative for all x iff the return value
    is >= 0; for draws on undirected networks it stays above -1e-10.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"need a square matrix, got shape {m.shape}")
    return float(np.min(np.linalg.eigvalsh(0.5 * (m + m.T))))


def _require_match(g: LQGame, drw: PerturbationDraw) -> None:
    if drw.n != g.n:
        raise ValueError(f"draw is for {drw.n} players, game has {g.n}")
    for i in range(g.n):
        nb = np.flatnonzero(g.net.weights[i])
        if len(drw.omega[i]) != len(nb) + 2:
            raise ValueError(f"draw neighbor count mismatches the network at player {i + 1}")
        off_support = np.flatnonzero(drw.q[i])
        off_support = off_support[off_support != i]
        if not np.all(np.isin(off_support, nb)):
            raise ValueError(f"draw touches a non-edge of the network at player {i + 1}")


@dataclass(frozen=True)
class PerturbedLQGame:
    """LQ game with the mechanism's payoff modification folded in.

    The perturbed pseudo-gradient stays affine: phi_hat(x) = intercept -
    jacobian @ x with jacobian = I - G + D^T and intercept = b - beta, so the
    closed-form solver still applies.
    """

    base: LQGame
    drw: PerturbationDraw
    jacobian: np.ndarray = field(init=False, repr=False)
    intercept: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        _require_match(self.base, self.drw)
        n = self.base.n
        jac = np.eye(n) - self.base.net.weights + self.drw.d.T
        jac.setflags(write=False)
        inter = self.base.b - self.drw.beta
        inter.setflags(write=False)
        object.__setattr__(self, "jacobian", jac)
        object.__setattr__(self, "intercept", inter)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def box_lo(self) -> np.ndarray:
        return self.base.box_lo

    @property
    def box_hi(self) -> np.ndarray:
        return self.base.box_hi


def perturb(g: LQGame, drw: PerturbationDraw) -> PerturbedLQGame:
    """Apply a draw to a game; the original game is untouched."""
    return PerturbedLQGame(base=g, drw=drw)


def perturbed_payoff(g: LQGame, drw: PerturbationDraw, i: int, x) -> float:
    """Payoff of player i under the perturbed objective:
    original payoff minus x_i * (q_i . x) - beta_i * x_i."""
    _require_match(g, drw)
    base = payoff(g, i, x)
    arr = np.asarray(x, dtype=float)
    xi = arr[i - 1]
    return float(base - xi * (drw.q[i - 1] @ arr) - drw.beta[i - 1] * xi)


def perturbed_pseudo_gradient(g: LQGame, drw: PerturbationDraw, x) -> np.ndarray:
    """phi(x) - D^T x - beta, the perturbed game's own-action derivatives."""
    _require_match(g, drw)
    arr = np.asarray(x, dtype=float)
    return pseudo_gradient(g, arr) - drw.d.T @ arr - drw.beta


def draw_to_dict(drw: PerturbationDraw) -> dict:
    """Plain-data record of a draw for serialization and audit replay."""
    from .trunc_laplace import GENERATOR_ALGORITHM

    return {
        "format_version": _DRAW_FORMAT_VERSION,
        "kind": "perturbation-draw",
        "generator": GENERATOR_ALGORITHM,
        "seed": drw.seed,
        "params": {"a": drw.params.a, "lambda": drw.params.lam},
        "omega": [list(map(float, w)) for w in drw.omega],
        "q": [list(map(float, row)) for row in drw.q],
        "beta": list(map(float, drw.beta)),
    }


def draw_from_dict(record: dict) -> PerturbationDraw:
    """Rebuild a draw from its serialized record; validation reruns eagerly."""
    if record.get("kind") != "perturbation-draw":
        raise ValueError(f"not a draw record: kind={record.get('kind')!r}")
    if record.get("format_version") != _DRAW_FORMAT_VERSION:
        raise ValueError(f"unsupported draw format version {record.get('format_version')!r}")
    params = NoiseParams(a=float(record["params"]["a"]), lam=float(record["params"]["lambda"]))
    return PerturbationDraw(
        omega=tuple(np.array(w, dtype=float) for w in record["omega"]),
        q=np.array(record["q"], dtype=float),
        beta=np.array(record["beta"], dtype=float),
        params=params,
        seed=int(record["seed"]),
    )
