"""Overlapping index-set decompositions and the subdomain blocks they induce.

Indices are 0-based throughout. ``W[i]`` is the overlapping set of
subdomain ``i``; ``Wbar[i]`` the non-overlapping set used by the restricted
(RAS) prolongation. The ``Wbar`` sets partition ``{0, ..., N-1}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .linalg import as_csr
from .pde import GridSpec

__all__ = [
    "Partition",
    "SubdomainBlocks",
    "strip_partition",
    "two_domain_partition",
    "greedy_coloring",
    "subdomain_blocks",
]


def greedy_coloring(adjacency) -> int:
    """Number of colours used by greedy colouring of a boolean ``(p, p)`` graph."""
    adj = np.asarray(adjacency, dtype=bool)
    p = adj.shape[0]
    colour = -np.ones(p, dtype=int)
    for i in range(p):
        used = {colour[j] for j in range(p) if adj[i, j] and j != i and colour[j] >= 0}
        c = 0
        while c in used:
            c += 1
        colour[i] = c
    return int(colour.max() + 1) if p else 0


@dataclass(frozen=True, eq=False)
class Partition:
    """Overlapping decomposition of ``{0, ..., N-1}`` into ``p`` subdomains."""

    N: int
    W: tuple
    Wbar: tuple
    q: int
    meta: dict | None = None

    def __post_init__(self):
        W = tuple(np.unique(np.asarray(w, dtype=np.int64)) for w in self.W)
        Wbar = tuple(np.unique(np.asarray(w, dtype=np.int64)) for w in self.Wbar)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "Wbar", Wbar)
        if len(W) != len(Wbar) or not W:
            raise ValueError("W and Wbar must list the same, nonzero number of subdomains")
        count = np.zeros(self.N, dtype=int)
        for w, wb in zip(W, Wbar):
            if w.size and (w[0] < 0 or w[-1] >= self.N):
                raise ValueError("index out of range")
            if not np.all(np.isin(wb, w)):
                raise ValueError("Wbar[i] must be a subset of W[i]")
            count[wb] += 1
        if np.any(count != 1):
            raise ValueError("Wbar sets must partition the index set")
        # positions inside W[i] that belong to Wbar[i]
        object.__setattr__(self, "_keep", tuple(np.isin(w, wb) for w, wb in zip(W, Wbar)))

    @property
    def p(self) -> int:
        return len(self.W)

    @property
    def sizes(self):
        return [int(w.size) for w in self.W]

    @property
    def nonoverlap_sizes(self):
        return [int(w.size) for w in self.Wbar]

    def restrict(self, v, i):
        """``R_i v`` for a vector or an ``(N, k)`` block."""
        v = np.asarray(v)
        if v.shape[0] != self.N:
            raise ValueError(f"expected leading dimension {self.N}, got {v.shape[0]}")
        return v[self.W[i]]

    def prolong(self, w, i, restricted=False):
        """Scatter a subdomain vector into ``N`` entries, zero elsewhere.

        With ``restricted=True`` only the entries in ``Wbar[i]`` are kept.
        """
        w = np.asarray(w)
        if w.shape[0] != self.W[i].size:
            raise ValueError(f"expected leading dimension {self.W[i].size}, got {w.shape[0]}")
        out = np.zeros((self.N,) + w.shape[1:], dtype=np.result_type(w, np.float64))
        if restricted:
            keep = self._keep[i]
            out[self.W[i][keep]] = w[keep]
        else:
            out[self.W[i]] = w
        return out

    def restriction_matrix(self, i, restricted=False):
        """Explicit 0/1 matrix ``R_i`` (or ``Rbar_i`` when ``restricted``)."""
        idx = self.Wbar[i] if restricted else self.W[i]
        return sparse.csr_matrix((np.ones(idx.size), (np.arange(idx.size), idx)),
                                 shape=(idx.size, self.N))

    def overlap(self, i, j):
        return np.intersect1d(self.W[i], self.W[j])

    def to_dict(self):
        return {"N": self.N, "q": self.q, "W": [w.tolist() for w in self.W],
                "Wbar": [w.tolist() for w in self.Wbar], "meta": self.meta or {}}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["N"]), tuple(d["W"]), tuple(d["Wbar"]), int(d["q"]), d.get("meta") or None)

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


def strip_partition(grid, p=2, overlap_lines=1) -> Partition:
    """Vertical strips along ``x1``, each widened by ``overlap_lines`` columns.

    The non-overlapping strips give ``Wbar``, so an overlap column belongs to
    the strip it lies in before widening. Strips that overlap or touch are
    given different colours.
    """
    if not isinstance(grid, GridSpec):
        grid = GridSpec(int(grid))
    n = grid.n
    if not 1 <= p <= n:
        raise ValueError(f"need 1 <= p <= n, got p={p}, n={n}")
    if overlap_lines < 0:
        raise ValueError("overlap_lines must be nonnegative")
    cuts = [(k * n + p - 1) // p for k in range(p + 1)]
    widths = np.diff(cuts)
    if p > 1 and overlap_lines > widths.min():
        raise ValueError(f"overlap_lines={overlap_lines} exceeds the narrowest strip ({widths.min()})")
    col = np.arange(grid.N) % n
    idx = np.arange(grid.N)
    W, Wbar, ranges = [], [], []
    for k in range(p):
        lo = max(0, cuts[k] - overlap_lines)
        hi = min(n, cuts[k + 1] + overlap_lines)
        ranges.append((lo, hi))
        W.append(idx[(col >= lo) & (col < hi)])
        Wbar.append(idx[(col >= cuts[k]) & (col < cuts[k + 1])])
    adj = np.array([[a[0] <= b[1] and b[0] <= a[1] for b in ranges] for a in ranges])
    meta = {"kind": "strips", "n": n, "p": p, "overlap_lines": overlap_lines,
            "cuts": cuts, "wbar_rule": "overlap columns stay with their own strip"}
    return Partition(grid.N, tuple(W), tuple(Wbar), greedy_coloring(adj), meta)


def two_domain_partition(grid, overlap_lines=1) -> Partition:
    """Split at the middle grid column; one overlap column per side by default.

    With ``overlap_lines = 1`` the shared block spans ``2 n`` unknowns, i.e.
    twice the bandwidth of the 5-point matrix.
    """
    return strip_partition(grid, 2, overlap_lines)


@dataclass(frozen=True, eq=False)
class SubdomainBlocks:
    """Blocks of ``A`` seen from subdomain ``i``.

    ``A_i`` is ``A[W, W]``, ``K_i`` is ``A[W, ext]``, ``L_i`` is
    ``A[ext, W]`` and ``A_ext`` is ``A[ext, ext]``, where ``ext`` is the
    complement of ``W``.
    """

    A_i: object
    K_i: object
    L_i: object
    A_ext: object
    W: np.ndarray
    ext: np.ndarray


def subdomain_blocks(A, part: Partition, i) -> SubdomainBlocks:
    A = as_csr(A)
    if A.shape[0] != part.N:
        raise ValueError("matrix and partition sizes differ")
    W = part.W[i]
    ext = np.setdiff1d(np.arange(part.N), W)
    rows_W = A[W]
    rows_E = A[ext]
    return SubdomainBlocks(as_csr(rows_W[:, W]), as_csr(rows_W[:, ext], square=False),
                           as_csr(rows_E[:, W], square=False), as_csr(rows_E[:, ext]), W, ext)
