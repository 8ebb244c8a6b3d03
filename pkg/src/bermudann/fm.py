"""Forward-mode differentiation on top of numpy arrays.

A :class:`Jet` carries a value array together with a stack of tangents (one
slot per independent input), so a computation written with the helpers below
yields both the result and the corresponding Jacobian columns in a single
vectorized sweep.  Plain numpy arrays and scalars pass through the same
helpers untouched, which lets the pricing formulas serve double duty: fast
value-only evaluation and exact pathwise derivative propagation.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr as _ndtr

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _col(v):
    # append a trailing axis so values broadcast against tangent stacks
    return np.asarray(v)[..., None]


class Jet:
    """Value plus tangent stack; ``tan[..., k]`` is d(val)/d(input_k)."""

    __slots__ = ("val", "tan")
    # keep numpy from consuming `array op Jet`; force our reflected operators
    __array_ufunc__ = None

    def __init__(self, val, tan):
        self.val = np.asarray(val, dtype=np.float64)
        self.tan = np.asarray(tan, dtype=np.float64)

    @property
    def width(self) -> int:
        return self.tan.shape[-1]

    def __getitem__(self, idx):
        return Jet(self.val[idx], self.tan[idx])

    def __neg__(self):
        return Jet(-self.val, -self.tan)

    def __add__(self, o):
        if isinstance(o, Jet):
            return Jet(self.val + o.val, self.tan + o.tan)
        return Jet(self.val + o, self.tan + np.zeros_like(_col(np.asarray(o, dtype=float) * 0.0)))

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Jet):
            return Jet(self.val - o.val, self.tan - o.tan)
        return Jet(self.val - o, self.tan + np.zeros_like(_col(np.asarray(o, dtype=float) * 0.0)))

    def __rsub__(self, o):
        return Jet(o - self.val, -self.tan + np.zeros_like(_col(np.asarray(o, dtype=float) * 0.0)))

    def __mul__(self, o):
        if isinstance(o, Jet):
            return Jet(self.val * o.val, self.tan * _col(o.val) + o.tan * _col(self.val))
        return Jet(self.val * o, self.tan * _col(o))

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Jet):
            q = self.val / o.val
            return Jet(q, (self.tan - o.tan * _col(q)) / _col(o.val))
        return Jet(self.val / o, self.tan / _col(o))

    def __rtruediv__(self, o):
        q = o / self.val
        return Jet(q, -self.tan * _col(q / self.val))

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)):
            raise TypeError("Jet exponent must be an integer")
        return Jet(self.val**n, self.tan * _col(float(n) * self.val ** (n - 1)))

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"Jet(val={self.val!r}, width={self.width})"


def val(x):
    """Value part of a Jet, or the input itself coerced to an array."""
    return x.val if isinstance(x, Jet) else np.asarray(x, dtype=np.float64)


def is_jet(*xs) -> bool:
    return any(isinstance(x, Jet) for x in xs)


def jet_width(*xs) -> int:
    for x in xs:
        if isinstance(x, Jet):
            return x.width
    raise TypeError("no Jet among arguments")


def lift(x, width: int) -> Jet:
    """Constant (zero-tangent) Jet of the given tangent width."""
    v = np.asarray(x, dtype=np.float64)
    return Jet(v, np.zeros(v.shape + (width,)))


def seed(x, slot: int, width: int) -> Jet:
    """Jet for an independent input occupying the given tangent slot."""
    v = np.asarray(x, dtype=np.float64)
    t = np.zeros(v.shape + (width,))
    t[..., slot] = 1.0
    return Jet(v, t)


def exp(x):
    if isinstance(x, Jet):
        e = np.exp(x.val)
        return Jet(e, x.tan * _col(e))
    return np.exp(x)


def expm1(x):
    if isinstance(x, Jet):
        return Jet(np.expm1(x.val), x.tan * _col(np.exp(x.val)))
    return np.expm1(x)


def log(x):
    if isinstance(x, Jet):
        return Jet(np.log(x.val), x.tan / _col(x.val))
    return np.log(x)


def sqrt(x):
    if isinstance(x, Jet):
        s = np.sqrt(x.val)
        # at an exactly-zero radicand the derivative does not exist; use the
        # zero one-sided tangent so degenerate (zero-volatility) paths stay finite
        pos = x.val > 0.0
        inv = np.where(pos, 0.5 / np.where(pos, s, 1.0), 0.0)
        return Jet(s, x.tan * _col(inv))
    return np.sqrt(x)


def cdf(x):
    """Standard normal CDF."""
    if isinstance(x, Jet):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.val * x.val)
        return Jet(_ndtr(x.val), x.tan * _col(pdf))
    return _ndtr(x)


def where(cond, a, b):
    cond = np.asarray(cond)
    if not is_jet(a, b):
        return np.where(cond, a, b)
    w = jet_width(a, b)
    aj = a if isinstance(a, Jet) else lift(a, w)
    bj = b if isinstance(b, Jet) else lift(b, w)
    return Jet(np.where(cond, aj.val, bj.val), np.where(cond[..., None], aj.tan, bj.tan))


def maximum(a, b):
    return where(val(a) >= val(b), a, b)


def stack_tangents(xs) -> np.ndarray:
    """Tangent stacks of a sequence of same-shape Jets as one (..., len, width) array."""
    return np.stack([x.tan for x in xs], axis=-2)
