"""Weighted undirected player graphs with ordered-neighbor bookkeeping.

Player indices are 1-based at the API and file level, matching the reports the
package emits; arrays are indexed from zero internally.  Graphs are dense:
experiment scale is at most a few hundred players.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Network:
    """Symmetric weight matrix with zero diagonal plus derived neighbor lists.

    ``neighbor_order[i - 1]`` is the strictly ascending tuple of 1-based
    neighbor indices of player i, exactly the nonzero pattern of row i.
    """

    weights: np.ndarray
    neighbor_order: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weights must be a square matrix, got shape {w.shape}")
        if w.shape[0] < 1:
            raise ValueError("network needs at least one player")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(np.diag(w) != 0.0):
            raise ValueError("self-interaction weights are not allowed (nonzero diagonal)")
        if np.any(w != w.T):
            worst = np.max(np.abs(w - w.T))
            raise ValueError(f"weights must be symmetric, max asymmetry {worst:.3g}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        order = tuple(tuple(int(j) + 1 for j in np.flatnonzero(w[i])) for i in range(w.shape[0]))
        object.__setattr__(self, "neighbor_order", order)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def degree(self, i: int) -> int:
        return len(neighbors(self, i))


def ring_lattice(n: int, k: int, w: float) -> Network:
    """Ring lattice where every player links to k/2 nearest neighbors per side.

    Args:
        n: player count, at least 3.
        k: even neighborhood size with 0 < k < n.
        w: uniform nonzero link weight.
    """
    if n < 3:
        raise ValueError(f"ring lattice needs n >= 3, got {n}")
    if k <= 0 or k >= n or k % 2 != 0:
        raise ValueError(f"neighborhood size must be even with 0 < k < n, got k={k}, n={n}")
    if w == 0:
        raise ValueError("link weight must be nonzero")
    mat = np.zeros((n, n))
    for i in range(n):
        for d in range(1, k // 2 + 1):
            mat[i, (i + d) % n] = w
            mat[i, (i - d) % n] = w
    return Network(mat)


def star(n: int, w: float) -> Network:
    """Star with player 1 as the hub."""
    if n < 2:
        raise ValueError(f"star needs n >= 2, got {n}")
    if w == 0:
        raise ValueError("link weight must be nonzero")
    mat = np.zeros((n, n))
    mat[0, 1:] = w
    mat[1:, 0] = w
    return Network(mat)


def path(n: int, w: float) -> Network:
    """Path graph 1 - 2 - ... - n."""
    if n < 2:
        raise ValueError(f"path needs n >= 2, got {n}")
    if w == 0:
        raise ValueError("link weight must be nonzero")
    mat = np.zeros((n, n))
    idx = np.arange(n - 1)
    mat[idx, idx + 1] = w
    mat[idx + 1, idx] = w
    return Network(mat)


def random_symmetric(n: int, edge_prob: float, weight_lo: float, weight_hi: float,
                     seed: int, spectral_cap: float | None = None) -> Network:
    """Random symmetric graph with uniform weights, optionally rescaled so the
    spectral radius of the weight matrix stays below ``spectral_cap``."""
    if not 0 <= edge_prob <= 1:
        raise ValueError(f"edge probability must lie in [0, 1], got {edge_prob}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    mat = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_prob:
                mat[i, j] = mat[j, i] = rng.uniform(weight_lo, weight_hi)
    if spectral_cap is not None and np.any(mat):
        radius = float(np.max(np.abs(np.linalg.eigvalsh(mat))))
        if radius >= spectral_cap:
            mat *= (spectral_cap / radius) * 0.999
    return Network(mat)


def neighbors(net: Network, i: int) -> tuple[int, ...]:
    """Ascending 1-based neighbor indices of player i (1 <= i <= n)."""
    if not isinstance(i, (int, np.integer)) or isinstance(i, bool):
        raise ValueError(f"player index must be an integer, got {i!r}")
    if i < 1 or i > net.n:
        raise ValueError(f"player index {i} out of range 1..{net.n}")
    return net.neighbor_order[i - 1]


def max_degree(net: Network) -> int:
    return max(len(order) for order in net.neighbor_order)


def group_factor(net: Network) -> int:
    """One more than the maximum neighborhood size; the factor by which one
    player's parameter change inflates the privacy budget."""
    return 1 + max_degree(net)


def load_edge_list(csv_path) -> Network:
    """Read a network from an edge-list CSV with header ``i,j,w``.

    Indices are 1-based; each undirected edge appears once in either
    orientation.  Self-loops, duplicate edges (in any orientation), and
    malformed rows are rejected.  The player count is inferred from the
    largest index seen.
    """
    edges: dict[tuple[int, int], float] = {}
    n = 0
    with open(csv_path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["i", "j", "w"]:
            raise ValueError(f"edge list must start with header 'i,j,w', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ValueError(f"line {lineno}: expected 3 fields, got {len(row)}")
            try:
                i, j = int(row[0]), int(row[1])
                w = float(row[2])
            except ValueError as exc:
                raise ValueError(f"line {lineno}: malformed row {row!r}") from exc
            if i < 1 or j < 1:
                raise ValueError(f"line {lineno}: indices are 1-based, got ({i}, {j})")
            if i == j:
                raise ValueError(f"line {lineno}: self-loop on player {i}")
            key = (min(i, j), max(i, j))
            if key in edges:
                kind = "asymmetric duplicate" if edges[key] != w else "duplicate"
                raise ValueError(f"line {lineno}: {kind} edge ({i}, {j})")
            edges[key] = w
            n = max(n, i, j)
    mat = np.zeros((n, n))
    for (i, j), w in edges.items():
        mat[i - 1, j - 1] = mat[j - 1, i - 1] = w
    return Network(mat)


def save_edge_list(net: Network, csv_path) -> None:
    """Write the upper-triangle edges as ``i,j,w`` rows.

    Weights are written with shortest round-trip representation so a
    save/load cycle preserves them bit for bit.
    """
    with open(csv_path, "w", newline="\n", encoding="utf-8") as handle:
        handle.write("i,j,w\n")
        for i in range(net.n):
            for j in range(i + 1, net.n):
                w = float(net.weights[i, j])
                if w != 0.0:
                    handle.write(f"{i + 1},{j + 1},{w!r}\n")
