"""Simulated reduced-precision value sets with directed rounding.

Values always live in IEEE double precision; a :class:`FloatFormat` describes
which doubles are "representable" and the rounding routines map arbitrary
doubles onto that set. Two families are supported:

* binary formats given by a significand width (implicit bit included) and an
  exponent width, rounded by truncating/incrementing the significand of the
  double (chop semantics), with optional subnormals and an overflow signal;
* decimal formats with ``d`` significant digits and no range limits.

Examples
--------
>>> from mpschwarz.fpsim import get_format, round_scalar, RoundMode
>>> fp16 = get_format("fp16")
>>> round_scalar(1.0, fp16, RoundMode.NEAREST)
1.0
>>> round_scalar(1 / 3, get_format("dec:4"), RoundMode.TOWARD_ZERO)
0.3333
"""

from __future__ import annotations

import decimal
import enum
import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

__all__ = [
    "FormatKind",
    "RoundMode",
    "FloatFormat",
    "RoundingStats",
    "FormatOverflowError",
    "binary_format",
    "decimal_format",
    "get_format",
    "PRESETS",
    "TABLE_FORMATS",
    "round_array",
    "round_scalar",
    "round_matrix",
]

_FP64 = np.finfo(np.float64)


class FormatKind(str, enum.Enum):
    BINARY = "binary"
    DECIMAL = "decimal"


class RoundMode(str, enum.Enum):
    """Rounding direction.

    ``TOWARD_ZERO`` is the "round down" (``rd``) and ``AWAY_FROM_ZERO`` the
    "round up" (``ru``) used by the sign-informed rounding routines.
    """

    NEAREST = "nearest"
    TOWARD_ZERO = "toward_zero"
    AWAY_FROM_ZERO = "away_from_zero"


class FormatOverflowError(OverflowError):
    """Raised when a value exceeds the largest finite number of a format.

    ``entries`` holds the offending positions (flat indices for arrays,
    ``(row, col)`` pairs for matrices).
    """

    def __init__(self, message, entries=()):
        super().__init__(message)
        self.entries = list(entries)


@dataclass(frozen=True)
class FloatFormat:
    """A simulated floating-point format.

    Attributes
    ----------
    name : str
        Preset name (``"fp16"``, ``"dec:5"``, ...) or a generated label.
    kind : FormatKind
    significand_bits : int or None
        Binary only; number of significand bits including the implicit bit.
    exponent_bits : int or None
        Binary only.
    decimal_digits : int or None
        Decimal only.
    subnormals : bool
        Binary only; gradual underflow below ``x_min``.
    """

    name: str
    kind: FormatKind
    significand_bits: int | None = None
    exponent_bits: int | None = None
    decimal_digits: int | None = None
    subnormals: bool = True

    def __post_init__(self):
        if self.kind is FormatKind.BINARY:
            if not self.significand_bits or self.significand_bits < 1:
                raise ValueError("binary format needs significand_bits >= 1")
            if not self.exponent_bits or self.exponent_bits < 1:
                raise ValueError("binary format needs exponent_bits >= 1")
            if self.significand_bits > 53 or self.emax > 1023:
                raise ValueError("binary format wider than working precision")
        else:
            if not self.decimal_digits or self.decimal_digits < 1:
                raise ValueError("decimal format needs decimal_digits >= 1")

    @property
    def is_binary(self) -> bool:
        return self.kind is FormatKind.BINARY

    @property
    def emax(self) -> int:
        return 2 ** (self.exponent_bits - 1) - 1

    @property
    def emin(self) -> int:
        return 1 - self.emax

    @property
    def unit_roundoff(self) -> float:
        if self.is_binary:
            return math.ldexp(1.0, -self.significand_bits)
        return 0.5 * 10.0 ** (1 - self.decimal_digits)

    @property
    def x_min(self) -> float:
        """Smallest positive normal number."""
        if self.is_binary:
            return math.ldexp(1.0, self.emin)
        return float(_FP64.tiny)

    @property
    def x_max(self) -> float:
        """Largest finite number."""
        if self.is_binary:
            t = self.significand_bits
            return math.ldexp(2.0 - math.ldexp(1.0, 1 - t), self.emax)
        return float(_FP64.max)

    @property
    def x_min_subnormal(self) -> float:
        if self.is_binary:
            return math.ldexp(1.0, self.emin - self.significand_bits + 1)
        return float(_FP64.smallest_subnormal)

    @property
    def is_working_precision(self) -> bool:
        """True when every double is representable (rounding is the identity)."""
        return (self.is_binary and self.significand_bits == 53
                and self.exponent_bits == 11 and self.subnormals)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "significand_bits": self.significand_bits,
            "exponent_bits": self.exponent_bits,
            "decimal_digits": self.decimal_digits,
            "subnormals": self.subnormals,
            "unit_roundoff": self.unit_roundoff,
            "x_min": self.x_min,
            "x_max": self.x_max,
        }

    def __str__(self):
        return self.name


def binary_format(significand_bits, exponent_bits, subnormals=True, name=None):
    if name is None:
        name = f"b{significand_bits}e{exponent_bits}"
    return FloatFormat(name, FormatKind.BINARY, significand_bits=significand_bits,
                       exponent_bits=exponent_bits, subnormals=subnormals)


def decimal_format(digits):
    return FloatFormat(f"dec:{digits}", FormatKind.DECIMAL, decimal_digits=digits)


# q52 and q43 are the 8-bit formats with 5 (resp. 4) exponent bits and 2
# (resp. 3) stored fraction bits; their significand widths include the
# implicit bit so that u = 2**-t matches the published unit roundoffs.
PRESETS = {
    "q52": binary_format(3, 5, name="q52"),
    "q43": binary_format(4, 4, name="q43"),
    "bfloat16": binary_format(8, 8, name="bfloat16"),
    "fp16": binary_format(11, 5, name="fp16"),
    "fp32": binary_format(24, 8, name="fp32"),
    "fp64": binary_format(53, 11, name="fp64"),
}

#: Binary presets ordered from lowest to highest precision.
TABLE_FORMATS = ("q52", "q43", "bfloat16", "fp16", "fp32", "fp64")

_DEC_RE = re.compile(r"^dec:(\d+)$")


def get_format(spec) -> FloatFormat:
    """Resolve a preset name (``"fp16"``, ``"dec:5"``) to a :class:`FloatFormat`."""
    if isinstance(spec, FloatFormat):
        return spec
    key = str(spec).strip().lower()
    if key in PRESETS:
        return PRESETS[key]
    m = _DEC_RE.match(key)
    if m:
        d = int(m.group(1))
        if not 1 <= d <= 16:
            raise ValueError(f"decimal digits must be in 1..16, got {d}")
        return decimal_format(d)
    raise ValueError(f"unknown format {spec!r}")


@dataclass
class RoundingStats:
    """Range events observed while rounding one array."""

    overflow: int = 0
    underflow: int = 0
    overflow_index: list = field(default_factory=list)

    def merge(self, other: "RoundingStats") -> "RoundingStats":
        return RoundingStats(self.overflow + other.overflow,
                             self.underflow + other.underflow,
                             self.overflow_index + other.overflow_index)


def _round_integers(q, mode):
    # q >= 0
    if mode is RoundMode.NEAREST:
        return np.rint(q)
    if mode is RoundMode.TOWARD_ZERO:
        return np.floor(q)
    return np.ceil(q)


def _round_binary_abs(a, fmt, mode):
    t = fmt.significand_bits
    _, e = np.frexp(a)  # a = m * 2**e, 0.5 <= m < 1
    if fmt.subnormals:
        e = np.maximum(e, fmt.emin + 1)
        q = np.ldexp(a, t - e)
        r = np.ldexp(_round_integers(q, mode), e - t)
    else:
        normal = e >= fmt.emin + 1
        q = np.ldexp(a, t - e)
        r = np.ldexp(_round_integers(q, mode), e - t)
        # flush: the only candidates below x_min are 0 and x_min
        small = ~normal & (a > 0)
        if np.any(small):
            xm = fmt.x_min
            lo = np.zeros_like(a[small])
            if mode is RoundMode.NEAREST:
                r[small] = np.where(a[small] * 2 >= xm, xm, lo)
            elif mode is RoundMode.TOWARD_ZERO:
                r[small] = lo
            else:
                r[small] = xm
    return r


def _pow10(k):
    return np.power(10.0, k.astype(np.float64))


def _dec_value(q, p):
    # the double nearest q * 10**-p (q int64); for q < 2**53 and |p| <= 22 both
    # operands are exact, so one correctly rounded multiply/divide suffices
    out = np.empty(q.shape, dtype=np.float64)
    fast = (np.abs(p) <= 22) & (q < 2**53)
    pos = fast & (p >= 0)
    neg = fast & (p < 0)
    qf = q.astype(np.float64)
    out[pos] = qf[pos] / _pow10(p[pos])
    out[neg] = qf[neg] * _pow10(-p[neg])
    slow = np.flatnonzero(~fast)
    if slow.size:
        out[slow] = [float(f"{int(qi)}e{-int(pi)}") for qi, pi in zip(q[slow], p[slow])]
    return out


def _nearer_is_lo(x, q, p):
    # exact midpoint comparison for near-ties
    xd = decimal.Decimal(float(x))
    mid = (decimal.Decimal(int(q)) + decimal.Decimal("0.5")).scaleb(-int(p))
    return xd < mid


def _round_decimal_abs(a, fmt, mode):
    d = fmt.decimal_digits
    r = np.zeros_like(a)
    nz = a > 0
    if not np.any(nz):
        return r
    x = a[nz]
    k = np.floor(np.log10(x)).astype(np.int64)
    # repair off-by-one decades near powers of ten
    k = np.where(x >= _pow10(k + 1), k + 1, k)
    k = np.where(x < _pow10(k), k - 1, k)
    p = (d - 1) - k
    # split the power so subnormal inputs (p > 308) do not overflow 10**p
    pp = np.maximum(p, 0)
    h = pp // 2
    scaled = np.where(p >= 0, x * _pow10(h) * _pow10(pp - h), x / _pow10(np.maximum(-p, 0)))
    q = np.floor(scaled).astype(np.int64)
    # lo = largest grid double <= x, found by monotone correction of q
    for _ in range(3):
        up = _dec_value(q + 1, p) <= x
        q = np.where(up, q + 1, q)
        down = _dec_value(q, p) > x
        q = np.where(down, q - 1, q)
    lo = _dec_value(q, p)
    exact = lo == x
    hi = np.where(exact, x, _dec_value(q + 1, p))
    if mode is RoundMode.TOWARD_ZERO:
        res = lo
    elif mode is RoundMode.AWAY_FROM_ZERO:
        res = hi
    else:
        # ties half away from zero
        dlo, dhi = x - lo, hi - x
        res = np.where(dlo < dhi, lo, hi)
        # an infinite hi (grid value beyond the double range) is settled exactly too
        near = np.flatnonzero(~exact & ((np.abs(dlo - dhi) <= 4 * np.spacing(x)) | np.isinf(hi)))
        for j in near:
            res[j] = lo[j] if _nearer_is_lo(x[j], q[j], p[j]) else hi[j]
    r[nz] = res
    return r


def round_array(x, fmt, mode=RoundMode.NEAREST, on_overflow="raise"):
    """Round every entry of ``x`` onto the value set of ``fmt``.

    Parameters
    ----------
    x : array_like
        Finite working-precision values.
    fmt : FloatFormat or str
    mode : RoundMode
    on_overflow : {"raise", "inf", "saturate"}
        What to do with values whose magnitude exceeds ``fmt.x_max`` (binary
        formats only): raise :class:`FormatOverflowError`, return signed
        infinity, or clamp to ``x_max``.

    Returns
    -------
    rounded : ndarray
    stats : RoundingStats
    """
    fmt = get_format(fmt)
    mode = RoundMode(mode)
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("round_array expects finite input")
    stats = RoundingStats()
    if fmt.is_working_precision:
        return x.copy(), stats
    a = np.abs(x)
    if fmt.is_binary:
        r = _round_binary_abs(a, fmt, mode)
        top = fmt.x_max
    else:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            r = _round_decimal_abs(a, fmt, mode)
            # largest grid value, used for saturation
            top = float(_round_decimal_abs(np.array([fmt.x_max]), fmt, RoundMode.TOWARD_ZERO)[0])
    over = (a > fmt.x_max) | (r > fmt.x_max)
    if np.any(over):
        idx = np.flatnonzero(over)
        stats.overflow = int(idx.size)
        stats.overflow_index = idx.tolist()
        if on_overflow == "raise":
            raise FormatOverflowError(
                f"{idx.size} value(s) exceed x_max={fmt.x_max:g} of {fmt.name}", idx.tolist())
        r = np.where(over, np.inf if on_overflow == "inf" else top, r)
    stats.underflow = int(np.count_nonzero((r == 0) & (a > 0)))
    return np.copysign(r, x), stats


def round_scalar(x, fmt, mode=RoundMode.NEAREST):
    """Round one value; raises :class:`FormatOverflowError` past ``x_max``."""
    r, _ = round_array(np.array([x], dtype=np.float64), fmt, mode)
    return float(r[0])


def round_matrix(X, fmt, mode=RoundMode.NEAREST, on_overflow="raise"):
    """Entrywise rounding of a dense array or scipy sparse matrix.

    The sparsity pattern is preserved; explicit zeros stay zero. Overflow
    positions are reported as ``(row, col)`` pairs.

    Returns
    -------
    rounded : same type as ``X``
    stats : RoundingStats
    """
    if sparse.issparse(X):
        Y = sparse.csr_matrix(X, copy=True)
        Y.sort_indices()
        rows = np.repeat(np.arange(Y.shape[0]), np.diff(Y.indptr))
        try:
            vals, stats = round_array(Y.data, fmt, mode, on_overflow)
        except FormatOverflowError as exc:
            pos = [(int(rows[k]), int(Y.indices[k])) for k in exc.entries]
            raise FormatOverflowError(str(exc), pos) from None
        stats.overflow_index = [(int(rows[k]), int(Y.indices[k])) for k in stats.overflow_index]
        Y.data = vals
        return Y, stats
    X = np.asarray(X, dtype=np.float64)
    try:
        vals, stats = round_array(X.ravel(), fmt, mode, on_overflow)
    except FormatOverflowError as exc:
        pos = [tuple(int(v) for v in np.unravel_index(k, X.shape)) for k in exc.entries]
        raise FormatOverflowError(str(exc), pos) from None
    stats.overflow_index = [tuple(int(v) for v in np.unravel_index(k, X.shape))
                            for k in stats.overflow_index]
    return vals.reshape(X.shape), stats
