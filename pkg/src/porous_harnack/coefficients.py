"""Piecewise-constant time coefficients and their exact exponential integrals."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous step function on [0, inf).

    ``values[0]`` holds on ``[0, breaks[0])``, ``values[k]`` on
    ``[breaks[k-1], breaks[k])`` and the last value from the last break on.
    """

    values: tuple
    breaks: tuple = ()

    def __post_init__(self):
        vals = tuple(float(v) for v in np.atleast_1d(self.values))
        brks = tuple(float(b) for b in np.atleast_1d(np.asarray(self.breaks, dtype=float)))
        if len(vals) != len(brks) + 1:
            raise ValueError("need exactly one more value than breakpoints")
        if any(b <= 0 for b in brks) or any(b2 <= b1 for b1, b2 in zip(brks, brks[1:])):
            raise ValueError("breakpoints must be positive and strictly increasing")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "breaks", brks)

    @classmethod
    def constant(cls, value):
        return cls((float(value),))

    @property
    def is_constant(self):
        return len(self.values) == 1

    def __call__(self, t):
        idx = np.searchsorted(self.breaks, t, side="right")
        return np.asarray(self.values)[idx] if np.ndim(t) else self.values[int(idx)]

    def pieces(self, t_end):
        """Yield ``(a, b, value)`` covering ``[0, t_end]``."""
        a = 0.0
        for b, v in zip(self.breaks + (np.inf,), self.values):
            b = min(b, t_end)
            if b > a:
                yield a, b, v
            a = b
            if a >= t_end:
                break

    def integral(self, t):
        """``int_0^t f(s) ds``."""
        return sum(v * (b - a) for a, b, v in self.pieces(t))

    def map(self, fn):
        return PiecewiseConstant(tuple(fn(v) for v in self.values), self.breaks)

    def __mul__(self, other):
        return combine(lambda a, b: a * b, self, as_piecewise(other))

    __rmul__ = __mul__


def as_piecewise(value):
    if isinstance(value, PiecewiseConstant):
        return value
    if isinstance(value, dict):
        return PiecewiseConstant(tuple(value["values"]), tuple(value.get("breaks", ())))
    return PiecewiseConstant.constant(value)


def _merged_breaks(*funcs):
    return tuple(sorted(set(b for f in funcs for b in f.breaks)))


def combine(fn, *funcs):
    """Pointwise ``fn(f1(t), f2(t), ...)`` as a step function."""
    brks = _merged_breaks(*funcs)
    probes = (0.0,) + brks
    vals = tuple(fn(*(f(t) for f in funcs)) for t in probes)
    return PiecewiseConstant(vals, brks)


def exp_weighted_integral(f, gamma, rate, t_end):
    """Exact ``int_0^T f(s) exp(-rate * int_0^s gamma(u) du) ds``.

    ``f`` and ``gamma`` are step functions; on each piece the integrand is
    ``f_k exp(-rate*(G_a + g_k (s - a)))``.
    """
    f = as_piecewise(f)
    gamma = as_piecewise(gamma)
    brks = _merged_breaks(f, gamma)
    edges = [0.0] + [b for b in brks if b < t_end] + [float(t_end)]
    total = 0.0
    g_acc = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        fv, gv = f(a), gamma(a)
        h = b - a
        k = rate * gv
        if abs(k * h) < 1e-12:
            piece = h * (1.0 - 0.5 * k * h)
        else:
            piece = -np.expm1(-k * h) / k
        total += fv * np.exp(-rate * g_acc) * piece
        g_acc += gv * h
    return total
