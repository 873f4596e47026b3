"""Structure-preserving rounding of scaled subdomain matrices.

Each routine maps ``calA`` onto the value set of a format and records the
rounding error matrix ``F = calA_tilde - calA`` on the pattern of ``calA``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .fpsim import FloatFormat, RoundingStats, RoundMode, get_format, round_array
from .linalg import as_csr

__all__ = [
    "RoundingKind",
    "RoundedSubdomain",
    "round_mmatrix",
    "round_diag",
    "round_plain",
    "apply_rounding",
]


class RoundingKind(str, enum.Enum):
    MMATRIX_UP = "mmatrix"
    DIAG_EXACT = "diag"
    PLAIN_NEAREST = "nearest"


@dataclass
class RoundedSubdomain:
    """A scaled matrix, its rounded version and their difference."""

    A_scaled: object
    A_rounded: object
    F: object
    kind: RoundingKind
    fmt: FloatFormat
    stats: RoundingStats = field(default_factory=RoundingStats)
    warnings: list = field(default_factory=list)
    E_unscaled_available: bool = True

    @property
    def n(self):
        return self.A_scaled.shape[0]


def _finish(X, data, kind, fmt, stats, notes):
    R = X.copy()
    R.data = data
    F = X.copy()
    # exact: rounded and original are within a factor two of each other
    F.data = data - X.data
    return RoundedSubdomain(X, R, F, kind, fmt, stats, notes)


def round_mmatrix(X, fmt, on_overflow="raise") -> RoundedSubdomain:
    """Sign-informed round-up.

    Positive entries are rounded away from zero and negative entries toward
    zero, so ``F >= 0`` entrywise. A positive entry pushed past ``x_max``
    raises :class:`~mpschwarz.fpsim.FormatOverflowError`; with
    ``on_overflow="saturate"`` it is clamped to ``x_max`` with a warning
    instead, which gives up ``F >= 0`` for that entry.
    """
    fmt = get_format(fmt)
    X = as_csr(X)
    x = X.data
    out = x.copy()
    stats = RoundingStats()
    pos = x > 0
    neg = x < 0
    notes = []
    if pos.any():
        r, s = round_array(x[pos], fmt, RoundMode.AWAY_FROM_ZERO, on_overflow)
        out[pos] = r
        stats = stats.merge(s)
        if s.overflow:
            msg = f"{s.overflow} positive entr(y/ies) exceeded x_max of {fmt.name} ({on_overflow})"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    if neg.any():
        r, s = round_array(x[neg], fmt, RoundMode.TOWARD_ZERO, on_overflow)
        out[neg] = r
        stats = stats.merge(s)
    return _finish(X, out, RoundingKind.MMATRIX_UP, fmt, stats, notes)


def round_diag(X, fmt, on_overflow="saturate") -> RoundedSubdomain:
    """Keep the diagonal, round off-diagonal entries toward zero.

    A diagonal that is not representable in ``fmt`` is kept as is and a
    warning is recorded, since the result then mixes precisions.
    """
    fmt = get_format(fmt)
    X = as_csr(X)
    rows = np.repeat(np.arange(X.shape[0]), np.diff(X.indptr))
    on_diag = rows == X.indices
    out = X.data.copy()
    notes = []
    d = X.data[on_diag]
    if d.size:
        rd, _ = round_array(d, fmt, RoundMode.NEAREST, on_overflow="inf")
        if np.any(rd != d):
            msg = f"{int(np.count_nonzero(rd != d))} diagonal entr(y/ies) not representable in {fmt.name}"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    r, stats = round_array(X.data[~on_diag], fmt, RoundMode.TOWARD_ZERO, on_overflow)
    out[~on_diag] = r
    return _finish(X, out, RoundingKind.DIAG_EXACT, fmt, stats, notes)


def round_plain(X, fmt, on_overflow="raise") -> RoundedSubdomain:
    """Round every entry to nearest; the unstructured control."""
    fmt = get_format(fmt)
    X = as_csr(X)
    r, stats = round_array(X.data, fmt, RoundMode.NEAREST, on_overflow)
    return _finish(X, r, RoundingKind.PLAIN_NEAREST, fmt, stats, [])


_ROUTINES = {
    RoundingKind.MMATRIX_UP: round_mmatrix,
    RoundingKind.DIAG_EXACT: round_diag,
    RoundingKind.PLAIN_NEAREST: round_plain,
}


def apply_rounding(kind, X, fmt) -> RoundedSubdomain:
    """Dispatch on a :class:`RoundingKind` or its string value."""
    return _ROUTINES[RoundingKind(kind)](X, fmt)
