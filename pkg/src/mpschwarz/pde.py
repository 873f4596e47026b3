"""Finite-difference model problems on the unit square.

Discretizes ``eta u - div(alpha grad u) + b . grad u = f`` with homogeneous
Dirichlet data on an ``n x n`` interior grid. Unknowns are ordered
lexicographically with ``x1`` running fastest: node ``(i, j)`` sits at
``((i+1) h, (j+1) h)`` and has index ``k = j * n + i``.

Diffusion uses centered differences with harmonic-mean face coefficients,
advection is first-order upwind, so every generated matrix has nonpositive
off-diagonals and is irreducibly diagonally dominant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse

from .linalg import as_csr, is_m_matrix

__all__ = [
    "GridSpec",
    "ProblemSpec",
    "PROBLEMS",
    "get_problem",
    "discretize",
    "make_rhs_and_init",
    "SchemeError",
    "N_TO_N",
]

#: Grid sizes ``n`` used by the size sweeps and the matching ``N = n^2``.
N_TO_N = {50: 2500, 90: 8100, 150: 22500, 220: 48400, 330: 108900}


class SchemeError(RuntimeError):
    """The assembled matrix failed the sufficient M-matrix check."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform interior grid with ``n`` points per side."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"grid size must be a positive integer, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def N(self) -> int:
        return self.n * self.n

    def coords(self):
        """Node coordinates ``(x1, x2)`` as flat arrays in index order."""
        k = np.arange(self.N)
        return (k % self.n + 1) * self.h, (k // self.n + 1) * self.h

    def index(self, i, j):
        return j * self.n + i

    def to_grid(self, v):
        """Reshape a vector to ``(n, n)`` with rows indexed by ``x2``."""
        return np.asarray(v).reshape(self.n, self.n)

    @classmethod
    def from_N(cls, N):
        n = int(round(np.sqrt(N)))
        if n * n != N:
            raise ValueError(f"N={N} is not a perfect square")
        return cls(n)


def _zero(x1, x2):
    return np.zeros(np.broadcast(x1, x2).shape)


def _const(c):
    def f(x1, x2):
        return np.full(np.broadcast(x1, x2).shape, float(c))
    return f


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients of one model problem.

    ``eta``, ``alpha``, ``b1`` and ``b2`` are vectorized functions of
    ``(x1, x2)``.
    """

    id: int
    eta: Callable = _zero
    alpha: Callable = _const(1.0)
    b1: Callable = _zero
    b2: Callable = _zero
    beta: float | None = None
    symmetric: bool = False
    description: str = ""
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"id": self.id, "beta": self.beta, "symmetric": self.symmetric,
                "description": self.description,
                "advection": "first-order upwind", "diffusion": "harmonic-mean faces",
                "boundary": "homogeneous Dirichlet", **self.meta}


def _eta1(x1, x2):
    return x1 ** 2 * np.cos(x1 + x2) ** 2


def _recirc(beta):
    def b1(x1, x2):
        return beta * (x1 * (x1 - 1) * (1 - 2 * x2))

    def b2(x1, x2):
        return -beta * (x2 * (x2 - 1) * (1 - 2 * x1))
    return b1, b2


def _jump(x1, x2):
    inside = np.hypot(x1 - 0.5, x2 - 0.1) < 0.25
    return np.where(inside, 1e6, 1.0)


def _build_problems():
    b1, b2 = _recirc(100.0)
    return {
        1: ProblemSpec(1, _eta1, lambda x1, x2: 20 * (x1 + x2) ** 2 * np.exp(x1 - x2),
                       lambda x1, x2: x2 - 0.5, lambda x1, x2: x1 - 0.5,
                       description="variable reaction/diffusion, rotating advection"),
        2: ProblemSpec(2, _zero, _const(1.0), b1, b2, beta=100.0,
                       description="recirculating advection, unit diffusion"),
        3: ProblemSpec(3, _zero, _jump, b1, b2, beta=100.0,
                       description="recirculating advection, diffusion jump in a disk"),
        4: ProblemSpec(4, _eta1, lambda x1, x2: (x1 + x2) ** 2 * np.exp(x1 - x2),
                       symmetric=True, description="variable reaction/diffusion"),
        5: ProblemSpec(5, lambda x1, x2: 500 * x1 + x2, lambda x1, x2: 1 + 9 * (x1 + x2),
                       symmetric=True, description="strong reaction, linear diffusion"),
        6: ProblemSpec(6, _zero, _jump, symmetric=True,
                       description="diffusion jump in a disk"),
    }


PROBLEMS = _build_problems()


def get_problem(pid) -> ProblemSpec:
    try:
        return PROBLEMS[int(pid)]
    except (KeyError, ValueError):
        raise ValueError(f"unknown problem {pid!r}; expected 1..6") from None


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def discretize(spec: ProblemSpec, grid: GridSpec, check=True):
    """Assemble the 5-point matrix of ``spec`` on ``grid``.

    Parameters
    ----------
    spec : ProblemSpec or int
    grid : GridSpec or int
    check : bool
        Run the sufficient M-matrix test and raise :class:`SchemeError` on
        failure.

    Returns
    -------
    csr_matrix
    """
    if not isinstance(spec, ProblemSpec):
        spec = get_problem(spec)
    if not isinstance(grid, GridSpec):
        grid = GridSpec(int(grid))
    n, h = grid.n, grid.h
    if n < 3:
        raise ValueError("need at least 3 interior points per side")
    N = grid.N
    idx = np.arange(N)
    ii, jj = idx % n, idx // n
    x1, x2 = (ii + 1) * h, (jj + 1) * h
    a_p = spec.alpha(x1, x2)
    diag = spec.eta(x1, x2).astype(float)
    rows, cols, vals = [], [], []

    # (di, dj) neighbour offsets: east, west, north, south
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni, nj = ii + di, jj + dj
        a_nb = spec.alpha((ni + 1) * h, (nj + 1) * h)
        face = _harmonic(a_p, a_nb) / h ** 2
        diag = diag + face
        inner = (ni >= 0) & (ni < n) & (nj >= 0) & (nj < n)
        rows.append(idx[inner])
        cols.append((nj * n + ni)[inner])
        vals.append(-face[inner])

    # upwind: b > 0 takes the backward difference, b < 0 the forward one
    for b, (di, dj) in ((spec.b1(x1, x2), (1, 0)), (spec.b2(x1, x2), (0, 1))):
        b = np.asarray(b, dtype=float) * np.ones(N)
        diag = diag + np.abs(b) / h
        up_i = np.where(b > 0, ii - di, ii + di)
        up_j = np.where(b > 0, jj - dj, jj + dj)
        inner = (b != 0) & (up_i >= 0) & (up_i < n) & (up_j >= 0) & (up_j < n)
        rows.append(idx[inner])
        cols.append((up_j * n + up_i)[inner])
        vals.append(-np.abs(b[inner]) / h)

    rows.append(idx)
    cols.append(idx)
    vals.append(diag)
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N, N))
    A = as_csr(A)
    if check:
        rep = is_m_matrix(A, "sufficient")
        if not rep:
            raise SchemeError(f"problem {spec.id}, n={n}: {rep.reason}")
    return A


def make_rhs_and_init(N, seed=0):
    """Right-hand side and initial guess with entries uniform in (0, 1)."""
    rng = np.random.default_rng(seed)

    def draw():
        x = rng.random(N)
        while np.any(x == 0.0):
            x[x == 0.0] = rng.random(int(np.count_nonzero(x == 0.0)))
        return x

    f = draw()
    u0 = draw()
    return f, u0


def problem_metadata(spec, grid) -> str:
    d = spec.to_dict() if isinstance(spec, ProblemSpec) else get_problem(spec).to_dict()
    g = grid if isinstance(grid, GridSpec) else GridSpec(int(grid))
    d.update({"n": g.n, "N": g.N, "h": g.h, "ordering": "lexicographic, x1 fastest"})
    return json.dumps(d, indent=2)
